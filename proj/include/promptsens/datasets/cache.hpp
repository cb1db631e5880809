#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "promptsens/core/manifest.hpp"
#include "promptsens/datasets/perturb.hpp"

namespace promptsens {

struct PerturbationKey {
  std::string instance_id;
  std::uint64_t seed = 0;
  int n = 0;
  int k = 0;
  SubsetStrategy strategy = SubsetStrategy::span;

  friend auto operator<=>(const PerturbationKey& a, const PerturbationKey& b) {
    return std::tie(a.instance_id, a.seed, a.n, a.k, a.strategy) <=>
           std::tie(b.instance_id, b.seed, b.n, b.k, b.strategy);
  }
  friend bool operator==(const PerturbationKey&, const PerturbationKey&) = default;
};

nlohmann::json perturbation_to_json(const PerturbationSet& set, const PerturbationKey& key);

// Rebuilds a set against its original instance. Returns nullopt when the
// stored record no longer matches the instance (stale cache entry).
std::optional<PerturbationSet> perturbation_from_json(const nlohmann::json& record, const Instance& original);

/// JSONL cache of PerturbationSets so repeated runs reuse variants
/// bit-exactly. Records are written in insertion order.
class PerturbationCache {
 public:
  static PerturbationCache load(const std::filesystem::path& path);

  const nlohmann::json* find(const PerturbationKey& key) const;
  void put(const PerturbationSet& set, const PerturbationKey& key);
  std::size_t size() const noexcept { return order_.size(); }

  void save(const std::filesystem::path& path) const;

 private:
  std::map<PerturbationKey, nlohmann::json> records_;
  std::vector<PerturbationKey> order_;
};

std::filesystem::path perturbation_cache_path(const std::filesystem::path& out_dir, std::uint64_t seed,
                                              int n, int k, SubsetStrategy strategy,
                                              const std::string& target_field);

}  // namespace promptsens
