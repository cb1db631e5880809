#pragma once

#include "promptsens/kernels/kernels.hpp"

namespace promptsens::kernels::detail {

// nullptr when the variant was not compiled for this target.
const KernelTable* avx2_table();
const KernelTable* neon_table();

}  // namespace promptsens::kernels::detail
