#include "promptsens/backends/tiny_lm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "promptsens/core/hash.hpp"
#include "promptsens/core/rng.hpp"
#include "promptsens/error.hpp"
#include "promptsens/kernels/kernels.hpp"

namespace promptsens {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

void fill_normal(Rng& rng, std::vector<double>& v, std::size_t n, double scale) {
  v.resize(n);
  for (double& x : v) x = rng.normal() * scale;
}

std::span<const double> row(const std::vector<double>& m, std::size_t r, std::size_t cols) {
  return std::span<const double>(m).subspan(r * cols, cols);
}

std::vector<double> log_softmax(const std::vector<double>& logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

}  // namespace

struct TinyLm::Forward {
  std::size_t window = 0;  // rows used
  std::size_t first = 0;   // index of the first row used
  std::vector<double> x;   // window x dim
  std::vector<double> q;
  std::vector<double> k;   // window x dim
  std::vector<double> v;   // window x dim
  std::vector<double> attn;
  std::vector<double> o;
  std::vector<double> h1;
  std::vector<double> z;
  std::vector<double> h2;
  std::vector<double> logits;
};

TinyLm::TinyLm(std::uint64_t seed, std::vector<std::string> vocab, std::size_t dim, std::size_t context) {
  if (dim < 2) throw InvalidArgument("tiny-lm: dim must be >= 2");
  if (context < 1) throw InvalidArgument("tiny-lm: context must be >= 1");
  if (vocab.empty() || vocab.front() != "<unk>") vocab.insert(vocab.begin(), "<unk>");
  if (vocab.size() < 4) throw InvalidArgument("tiny-lm: vocabulary needs at least 4 entries");
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (vocab[i].empty()) throw InvalidArgument("tiny-lm: empty vocabulary entry");
    if (!index_.emplace(vocab[i], static_cast<int>(i)).second) {
      throw InvalidArgument("tiny-lm: duplicate vocabulary entry '" + vocab[i] + "'");
    }
  }
  vocab_ = std::move(vocab);

  Params& p = params_;
  p.vocab = vocab_.size();
  p.dim = dim;
  p.hidden = 2 * dim;
  p.context = context;
  Rng rng(seed);
  const double inv_d = 1.0 / std::sqrt(static_cast<double>(dim));
  const double inv_h = 1.0 / std::sqrt(static_cast<double>(p.hidden));
  fill_normal(rng, p.tok_emb, p.vocab * dim, 1.0);
  fill_normal(rng, p.pos_emb, context * dim, 0.1);
  fill_normal(rng, p.wq, dim * dim, inv_d);
  fill_normal(rng, p.wk, dim * dim, inv_d);
  fill_normal(rng, p.wv, dim * dim, inv_d);
  fill_normal(rng, p.wo, dim * dim, inv_d);
  fill_normal(rng, p.w1, p.hidden * dim, inv_d);
  fill_normal(rng, p.b1, p.hidden, 0.1);
  fill_normal(rng, p.w2, dim * p.hidden, inv_h);
  fill_normal(rng, p.b2, dim, 0.1);
  fill_normal(rng, p.w_out, p.vocab * dim, inv_d);
  fill_normal(rng, p.b_out, p.vocab, 0.1);
}

std::uint64_t TinyLm::checksum() const {
  std::uint64_t h = fnv1a64("");
  const auto feed = [&h](const std::vector<double>& v) {
    h = fnv1a64(std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double)), h);
  };
  const Params& p = params_;
  for (const auto* v : {&p.tok_emb, &p.pos_emb, &p.wq, &p.wk, &p.wv, &p.wo, &p.w1, &p.b1, &p.w2, &p.b2,
                        &p.w_out, &p.b_out}) {
    feed(*v);
  }
  return h;
}

std::vector<TinyLm::Token> TinyLm::tokenize(std::string_view text) const {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const std::size_t start = i;
    while (i < text.size() && is_space(text[i])) ++i;
    if (i == text.size()) {
      out.push_back({0, start, i});
      break;
    }
    if (is_alnum(text[i])) {
      while (i < text.size() && is_alnum(text[i])) ++i;
    } else {
      ++i;
    }
    const std::string_view piece = text.substr(start, i - start);
    int id = 0;
    if (auto it = index_.find(std::string(piece)); it != index_.end()) {
      id = it->second;
    } else {
      std::size_t s = 0;
      while (s < piece.size() && is_space(piece[s])) ++s;
      if (auto jt = index_.find(std::string(piece.substr(s))); jt != index_.end()) id = jt->second;
    }
    out.push_back({id, start, i});
  }
  return out;
}

int TinyLm::single_token_id(std::string_view text) const {
  const auto toks = tokenize(text);
  if (toks.size() != 1 || toks.front().id == 0) return -1;
  return toks.front().id;
}

std::vector<double> TinyLm::embed(std::span<const int> ids) const {
  const std::size_t d = params_.dim;
  std::vector<double> out(ids.size() * d);
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const auto id = static_cast<std::size_t>(ids[t]);
    if (id >= params_.vocab) throw InvalidArgument("tiny-lm: token id out of range");
    std::copy_n(params_.tok_emb.begin() + static_cast<std::ptrdiff_t>(id * d), d,
                out.begin() + static_cast<std::ptrdiff_t>(t * d));
  }
  return out;
}

TinyLm::Forward TinyLm::forward(std::span<const double> emb, std::size_t tokens) const {
  const Params& p = params_;
  const std::size_t d = p.dim;
  if (tokens == 0) throw InvalidArgument("tiny-lm: empty input");
  if (emb.size() != tokens * d) throw InvalidArgument("tiny-lm: embedding shape mismatch");

  Forward f;
  f.window = std::min(tokens, p.context);
  f.first = tokens - f.window;
  const std::size_t w = f.window;
  f.x.resize(w * d);
  for (std::size_t s = 0; s < w; ++s) {
    for (std::size_t j = 0; j < d; ++j) f.x[s * d + j] = emb[(f.first + s) * d + j] + p.pos_emb[s * d + j];
  }
  const auto x_last = std::span<const double>(f.x).subspan((w - 1) * d, d);

  f.q.assign(d, 0.0);
  kernels::matvec(p.wq, d, d, x_last, f.q);
  f.k.assign(w * d, 0.0);
  f.v.assign(w * d, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> scores(w);
  for (std::size_t s = 0; s < w; ++s) {
    const auto xs = std::span<const double>(f.x).subspan(s * d, d);
    kernels::matvec(p.wk, d, d, xs, std::span<double>(f.k).subspan(s * d, d));
    kernels::matvec(p.wv, d, d, xs, std::span<double>(f.v).subspan(s * d, d));
    scores[s] = kernels::dot(f.q, std::span<const double>(f.k).subspan(s * d, d)) * scale;
  }
  const double lse = log_sum_exp(scores);
  f.attn.resize(w);
  for (std::size_t s = 0; s < w; ++s) f.attn[s] = std::exp(scores[s] - lse);

  f.o.assign(d, 0.0);
  for (std::size_t s = 0; s < w; ++s) kernels::axpy(f.attn[s], std::span<const double>(f.v).subspan(s * d, d), f.o);

  std::vector<double> proj(d, 0.0);
  kernels::matvec(p.wo, d, d, f.o, proj);
  f.h1.resize(d);
  for (std::size_t j = 0; j < d; ++j) f.h1[j] = x_last[j] + proj[j];

  f.z.assign(p.hidden, 0.0);
  kernels::matvec(p.w1, p.hidden, d, f.h1, f.z);
  for (std::size_t j = 0; j < p.hidden; ++j) f.z[j] = std::tanh(f.z[j] + p.b1[j]);

  std::vector<double> ff(d, 0.0);
  kernels::matvec(p.w2, d, p.hidden, f.z, ff);
  f.h2.resize(d);
  for (std::size_t j = 0; j < d; ++j) f.h2[j] = f.h1[j] + ff[j] + p.b2[j];

  f.logits.assign(p.vocab, 0.0);
  kernels::matvec(p.w_out, p.vocab, d, f.h2, f.logits);
  for (std::size_t j = 0; j < p.vocab; ++j) f.logits[j] += p.b_out[j];
  return f;
}

std::vector<double> TinyLm::logits_from_embeddings(std::span<const double> emb, std::size_t tokens) const {
  return forward(emb, tokens).logits;
}

std::vector<double> TinyLm::logit_gradient(std::span<const double> emb, std::size_t tokens, int target) const {
  const Params& p = params_;
  const std::size_t d = p.dim;
  if (target < 0 || static_cast<std::size_t>(target) >= p.vocab) throw InvalidArgument("tiny-lm: target out of range");
  const Forward f = forward(emb, tokens);
  const std::size_t w = f.window;

  const auto g_h2 = row(p.w_out, static_cast<std::size_t>(target), d);

  // Feed-forward block: h2 = h1 + W2 tanh(W1 h1 + b1) + b2.
  std::vector<double> g_z(p.hidden, 0.0);
  kernels::matvec_t_acc(p.w2, d, p.hidden, g_h2, g_z);
  for (std::size_t j = 0; j < p.hidden; ++j) g_z[j] *= 1.0 - f.z[j] * f.z[j];
  std::vector<double> g_h1(g_h2.begin(), g_h2.end());
  kernels::matvec_t_acc(p.w1, p.hidden, d, g_z, g_h1);

  // Attention: h1 = x_T + Wo o, o = sum_s a_s v_s.
  std::vector<double> g_o(d, 0.0);
  kernels::matvec_t_acc(p.wo, d, d, g_h1, g_o);

  std::vector<double> g_x(w * d, 0.0);
  auto g_row = [&](std::size_t s) { return std::span<double>(g_x).subspan(s * d, d); };
  kernels::axpy(1.0, g_h1, g_row(w - 1));

  std::vector<double> g_a(w);
  double mean = 0.0;
  for (std::size_t s = 0; s < w; ++s) {
    g_a[s] = kernels::dot(g_o, std::span<const double>(f.v).subspan(s * d, d));
    mean += f.attn[s] * g_a[s];
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> g_q(d, 0.0);
  std::vector<double> tmp(d);
  for (std::size_t s = 0; s < w; ++s) {
    const double g_score = f.attn[s] * (g_a[s] - mean) * scale;
    // through v_s = Wv x_s
    std::fill(tmp.begin(), tmp.end(), 0.0);
    for (std::size_t j = 0; j < d; ++j) tmp[j] = f.attn[s] * g_o[j];
    kernels::matvec_t_acc(p.wv, d, d, tmp, g_row(s));
    // through k_s = Wk x_s
    for (std::size_t j = 0; j < d; ++j) tmp[j] = g_score * f.q[j];
    kernels::matvec_t_acc(p.wk, d, d, tmp, g_row(s));
    kernels::axpy(g_score, std::span<const double>(f.k).subspan(s * d, d), g_q);
  }
  kernels::matvec_t_acc(p.wq, d, d, g_q, g_row(w - 1));

  std::vector<double> out(tokens * d, 0.0);
  std::copy(g_x.begin(), g_x.end(), out.begin() + static_cast<std::ptrdiff_t>(f.first * d));
  return out;
}

std::vector<double> TinyLm::next_token_logprobs(std::span<const int> ids) const {
  const auto emb = embed(ids);
  return log_softmax(forward(emb, ids.size()).logits);
}

CompletionResult TinyLm::complete(const CompletionRequest& request) const {
  request.validate();
  std::vector<int> ids;
  for (const Token& t : tokenize(request.prompt)) ids.push_back(t.id);

  CompletionResult result;
  if (request.candidate_set) {
    std::map<std::string, double> scores;
    for (const std::string& cand : *request.candidate_set) {
      auto ctx = ids;
      double lp = 0.0;
      for (const Token& t : tokenize(cand)) {
        lp += next_token_logprobs(ctx)[static_cast<std::size_t>(t.id)];
        ctx.push_back(t.id);
      }
      scores[cand] = lp;
    }
    result.candidate_logprobs = std::move(scores);
  }

  Rng rng(mix_seed(request.seed, fnv1a64(request.prompt)));
  std::vector<TokenLogprobs> trace;
  for (int step = 0; step < request.max_new_tokens; ++step) {
    const auto lp = next_token_logprobs(ids);
    std::size_t pick = 0;
    if (request.temperature > 0.0) {
      std::vector<double> scaled(lp.size());
      for (std::size_t i = 0; i < lp.size(); ++i) scaled[i] = lp[i] / request.temperature;
      const double lse = log_sum_exp(scaled);
      for (double& s : scaled) s = std::exp(s - lse);
      pick = rng.weighted(scaled);
    } else {
      pick = static_cast<std::size_t>(std::max_element(lp.begin(), lp.end()) - lp.begin());
    }
    result.text += " " + vocab_[pick];
    if (request.want_logprobs) {
      TokenLogprobs tl;
      tl.token = vocab_[pick];
      tl.logprob = lp[pick];
      std::vector<std::size_t> order(lp.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      const std::size_t top = std::min<std::size_t>(5, order.size());
      std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                        [&](std::size_t a, std::size_t b) { return lp[a] > lp[b] || (lp[a] == lp[b] && a < b); });
      for (std::size_t i = 0; i < top; ++i) tl.top.emplace_back(vocab_[order[i]], lp[order[i]]);
      trace.push_back(std::move(tl));
    }
    ids.push_back(static_cast<int>(pick));
  }
  if (request.want_logprobs) result.token_logprobs = std::move(trace);
  return result;
}

GradientMap TinyLm::gradients(const std::string& prompt, const std::string& target) const {
  const int target_id = single_token_id(target);
  if (target_id < 0) throw InvalidArgument("tiny-lm: target '" + target + "' is not a single known token");
  const auto toks = tokenize(prompt);
  if (toks.empty()) throw InvalidArgument("tiny-lm: empty prompt");
  std::vector<int> ids;
  for (const Token& t : toks) ids.push_back(t.id);
  const auto emb = embed(ids);
  const auto grad = logit_gradient(emb, ids.size(), target_id);

  GradientMap map;
  const std::size_t d = params_.dim;
  for (std::size_t t = 0; t < toks.size(); ++t) {
    map.tokens.push_back({prompt.substr(toks[t].start, toks[t].end - toks[t].start), toks[t].start, toks[t].end});
    map.grads.emplace_back(grad.begin() + static_cast<std::ptrdiff_t>(t * d),
                           grad.begin() + static_cast<std::ptrdiff_t>((t + 1) * d));
  }
  return map;
}

}  // namespace promptsens
