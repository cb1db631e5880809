#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "promptsens/backends/backend.hpp"

namespace promptsens {

/// Desk-scale causal LM with exact input gradients.
///
/// One single-head attention layer and one tanh feed-forward block, both
/// residual, followed by a linear vocabulary head. Only the last position
/// feeds the head, so next-token logits depend on the whole window while the
/// backward pass stays a short closed form. Weights are seeded normals; the
/// model is never trained.
class TinyLm : public Backend {
 public:
  struct Params {
    std::size_t vocab = 0, dim = 0, hidden = 0, context = 0;
    std::vector<double> tok_emb;  // vocab x dim
    std::vector<double> pos_emb;  // context x dim
    std::vector<double> wq, wk, wv, wo;  // dim x dim
    std::vector<double> w1, b1;  // hidden x dim, hidden
    std::vector<double> w2, b2;  // dim x hidden, dim
    std::vector<double> w_out, b_out;  // vocab x dim, vocab
  };

  struct Token {
    int id = 0;
    std::size_t start = 0;
    std::size_t end = 0;
  };

  // Index 0 is reserved for the unknown token; "<unk>" is prepended when the
  // vocabulary lacks it. Throws InvalidArgument for dim < 2, fewer than 4
  // entries, context < 1, empty or duplicate entries.
  TinyLm(std::uint64_t seed, std::vector<std::string> vocab, std::size_t dim, std::size_t context);

  std::string id() const override { return "tiny-lm"; }
  CompletionResult complete(const CompletionRequest& request) const override;
  bool supports_gradients() const override { return true; }
  GradientMap gradients(const std::string& prompt, const std::string& target) const override;

  const std::vector<std::string>& vocab() const noexcept { return vocab_; }
  const Params& params() const noexcept { return params_; }
  Params& mutable_params() noexcept { return params_; }
  std::uint64_t checksum() const;

  /// Splits text into pieces that tile it exactly: a piece is optional leading
  /// whitespace plus either an alphanumeric run or one other character.
  /// Pieces map to the vocabulary as-is, then with whitespace stripped, else
  /// to <unk>.
  std::vector<Token> tokenize(std::string_view text) const;
  // Vocabulary id for a single-token string, or -1.
  int single_token_id(std::string_view text) const;

  // Token embeddings (no positions) for ids, row-major T x dim.
  std::vector<double> embed(std::span<const int> ids) const;

  // Next-token logits from token embeddings of the last min(T, context) rows.
  std::vector<double> logits_from_embeddings(std::span<const double> emb, std::size_t tokens) const;
  // d logit[target] / d emb, same shape as emb. Rows outside the context
  // window are zero.
  std::vector<double> logit_gradient(std::span<const double> emb, std::size_t tokens, int target) const;

  std::vector<double> next_token_logprobs(std::span<const int> ids) const;

 private:
  struct Forward;
  Forward forward(std::span<const double> emb, std::size_t tokens) const;

  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  Params params_;
};

// Convenience constructor mirroring the operation name.
inline TinyLm tiny_lm_init(std::uint64_t seed, std::vector<std::string> vocab, std::size_t dim,
                           std::size_t context) {
  return TinyLm(seed, std::move(vocab), dim, context);
}

}  // namespace promptsens
