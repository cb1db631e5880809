#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "json.hpp"
#include "promptsens/backends/factory.hpp"
#include "promptsens/backends/fanout.hpp"
#include "promptsens/backends/interchange.hpp"
#include "promptsens/backends/mock.hpp"
#include "promptsens/backends/tiny_lm.hpp"
#include "promptsens/error.hpp"

using namespace promptsens;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> small_vocab() {
  return {"<unk>", "the", "cat", "sat", "on", "mat", ".", "?", "0", "1", "SENTENCE", ":", "ANSWER"};
}

// Plain loops over the parameter arrays, written independently of the model.
std::vector<double> reference_logits(const TinyLm& lm, const std::vector<int>& ids) {
  const auto& p = lm.params();
  const std::size_t d = p.dim, h = p.hidden;
  const std::size_t w = std::min(ids.size(), p.context), first = ids.size() - w;
  std::vector<std::vector<double>> x(w, std::vector<double>(d));
  for (std::size_t s = 0; s < w; ++s) {
    for (std::size_t j = 0; j < d; ++j) x[s][j] = p.tok_emb[ids[first + s] * d + j] + p.pos_emb[s * d + j];
  }
  auto mv = [](const std::vector<double>& m, std::size_t rows, std::size_t cols, const std::vector<double>& v) {
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) out[r] += m[r * cols + c] * v[c];
    }
    return out;
  };
  const auto q = mv(p.wq, d, d, x[w - 1]);
  std::vector<double> sc(w);
  std::vector<std::vector<double>> v(w);
  for (std::size_t s = 0; s < w; ++s) {
    const auto k = mv(p.wk, d, d, x[s]);
    v[s] = mv(p.wv, d, d, x[s]);
    sc[s] = std::inner_product(q.begin(), q.end(), k.begin(), 0.0) / std::sqrt(static_cast<double>(d));
  }
  const double mx = *std::max_element(sc.begin(), sc.end());
  double z = 0;
  for (double& s : sc) z += (s = std::exp(s - mx));
  std::vector<double> a(d, 0.0);
  for (std::size_t s = 0; s < w; ++s) {
    for (std::size_t j = 0; j < d; ++j) a[j] += sc[s] / z * v[s][j];
  }
  const auto o = mv(p.wo, d, d, a);
  std::vector<double> h1(d);
  for (std::size_t j = 0; j < d; ++j) h1[j] = x[w - 1][j] + o[j];
  auto hid = mv(p.w1, h, d, h1);
  for (std::size_t j = 0; j < h; ++j) hid[j] = std::tanh(hid[j] + p.b1[j]);
  const auto ff = mv(p.w2, d, h, hid);
  std::vector<double> h2(d);
  for (std::size_t j = 0; j < d; ++j) h2[j] = h1[j] + ff[j] + p.b2[j];
  auto logits = mv(p.w_out, p.vocab, d, h2);
  for (std::size_t i = 0; i < p.vocab; ++i) logits[i] += p.b_out[i];
  return logits;
}

class Flaky : public Backend {
 public:
  explicit Flaky(int failures) : remaining_(failures) {}
  std::string id() const override { return "flaky"; }
  CompletionResult complete(const CompletionRequest&) const override {
    ++calls;
    if (remaining_-- > 0) throw TransportError("temporary");
    return CompletionResult{" 1", std::nullopt, std::nullopt};
  }
  mutable std::atomic<int> calls{0};

 private:
  mutable std::atomic<int> remaining_;
};

}  // namespace

TEST_CASE("log_sum_exp and candidate probabilities") {
  CHECK(log_sum_exp({std::log(0.25), std::log(0.75)}) == doctest::Approx(0.0));
  CHECK(log_sum_exp({1000.0, 1000.0}) == doctest::Approx(1000.0 + std::log(2.0)));
  const auto p = candidate_probabilities({{"0", std::log(2.0)}, {"1", std::log(6.0)}, {"x", 0.0}}, {"1", "0"});
  CHECK(p[0] == doctest::Approx(0.75));
  CHECK(p[1] == doctest::Approx(0.25));
  CHECK_THROWS_AS(candidate_probabilities({{"0", 0.0}}, {"0", "1"}), ScoringUnsupported);
}

TEST_CASE("completion request validation") {
  CompletionRequest r;
  CHECK_THROWS_AS(r.validate(), InvalidArgument);
  r.prompt = "x";
  r.max_new_tokens = 0;
  CHECK_THROWS_AS(r.validate(), InvalidArgument);
}

TEST_CASE("mock backends") {
  const MockBackend c = MockBackend::constant("1");
  CompletionRequest r;
  r.prompt = "anything";
  r.candidate_set = std::vector<std::string>{"0", "1", "2"};
  const auto res = c.complete(r);
  CHECK(res.text == "1");
  CHECK(std::exp(res.candidate_logprobs->at("1")) == doctest::Approx(0.9));
  CHECK(std::exp(res.candidate_logprobs->at("2")) == doctest::Approx(0.05));

  const MockBackend m = MockBackend::marker_flip("#", "0", "1");
  r.prompt = "a # b";
  CHECK(m.complete(r).text.find('1') != std::string::npos);

  const MockBackend t = MockBackend::table({{"known", "0"}});
  r.prompt = "unknown";
  CHECK_THROWS_AS(t.complete(r), BackendRefused);
  CHECK_THROWS_AS(c.gradients("a", "b"), GradientUnsupported);
}

TEST_CASE("instability mock hits its rates") {
  const double q = 0.3;
  InstabilityMock mock(q, 11);
  std::size_t correct = 0, flipped = 0, variants = 0;
  constexpr int kInstances = 4000;
  for (int i = 0; i < kInstances; ++i) {
    const std::string orig = "prompt " + std::to_string(i);
    std::vector<std::string> vars;
    for (int j = 0; j < 4; ++j) vars.push_back(orig + " v" + std::to_string(j));
    mock.observe_instance(orig, vars, CanonicalLabel::index(i % 2), 2);
    CompletionRequest r;
    r.prompt = orig;
    const std::string o = mock.complete(r).text;
    correct += o == " " + std::to_string(i % 2);
    for (const auto& v : vars) {
      r.prompt = v;
      flipped += mock.complete(r).text != o;
      ++variants;
    }
  }
  CHECK(static_cast<double>(correct) / kInstances == doctest::Approx(1 - q).epsilon(0.05));
  CHECK(static_cast<double>(flipped) / variants == doctest::Approx(q).epsilon(0.05));
  CompletionRequest r;
  r.prompt = "never announced";
  CHECK_THROWS_AS(mock.complete(r), BackendRefused);
  CHECK_THROWS_AS(InstabilityMock(1.5, 0), InvalidArgument);
}

TEST_CASE("throttled backend retries transport errors") {
  Flaky flaky(2);
  ThrottledBackend t(flaky, 2, RetryPolicy{3, std::chrono::milliseconds(1), 2.0});
  CompletionRequest r;
  r.prompt = "p";
  CHECK(t.complete(r).text == " 1");
  CHECK(flaky.calls == 3);

  Flaky hopeless(10);
  ThrottledBackend t2(hopeless, 1, RetryPolicy{2, std::chrono::milliseconds(1), 1.0});
  CHECK_THROWS_AS(t2.complete(r), TransportError);
  CHECK(hopeless.calls == 3);
}

TEST_CASE("parallel_for covers every index and rethrows the first error") {
  std::vector<int> hits(500, 0);
  parallel_for(hits.size(), 8, [&](std::size_t i) { hits[i] += static_cast<int>(i); });
  for (std::size_t i = 0; i < hits.size(); ++i) CHECK(hits[i] == static_cast<int>(i));
  try {
    parallel_for(50, 4, [](std::size_t i) {
      if (i == 7 || i == 30) throw std::runtime_error("boom " + std::to_string(i));
    });
    FAIL("expected exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "boom 7");
  }
}

TEST_CASE("tiny lm construction") {
  CHECK_THROWS_AS(TinyLm(1, {"a", "b"}, 8, 8), InvalidArgument);
  CHECK_THROWS_AS(TinyLm(1, small_vocab(), 1, 8), InvalidArgument);
  CHECK_THROWS_AS(TinyLm(1, {"a", "b", "a", "c", "d"}, 8, 8), InvalidArgument);
  const TinyLm lm(1, {"a", "b", "c", "d"}, 8, 8);
  CHECK(lm.vocab().front() == "<unk>");
  CHECK(TinyLm(3, small_vocab(), 8, 16).checksum() == TinyLm(3, small_vocab(), 8, 16).checksum());
  CHECK(TinyLm(3, small_vocab(), 8, 16).checksum() != TinyLm(4, small_vocab(), 8, 16).checksum());
}

TEST_CASE("tiny lm tokenization tiles the text") {
  const TinyLm lm(1, small_vocab(), 8, 16);
  const std::string text = "SENTENCE: the  cat sat on a mat?\n";
  const auto toks = lm.tokenize(text);
  std::size_t cursor = 0;
  for (const auto& t : toks) {
    CHECK(t.start == cursor);
    cursor = t.end;
  }
  CHECK(cursor == text.size());
  CHECK(toks[0].id == lm.single_token_id("SENTENCE"));
  CHECK(lm.single_token_id("dog") == -1);
}

TEST_CASE("tiny lm forward matches a naive reference and softmax normalizes") {
  const TinyLm lm(9, small_vocab(), 12, 6);
  for (const std::string& text : {std::string("the cat"), std::string("the cat sat on the mat . ANSWER : 1")}) {
    std::vector<int> ids;
    for (const auto& t : lm.tokenize(text)) ids.push_back(t.id);
    const auto emb = lm.embed(ids);
    const auto got = lm.logits_from_embeddings(emb, ids.size());
    const auto want = reference_logits(lm, ids);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    const auto lp = lm.next_token_logprobs(ids);
    double total = 0;
    for (double v : lp) total += std::exp(v);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("tiny lm gradient matches central differences") {
  const TinyLm lm(2, small_vocab(), 8, 5);
  std::vector<int> ids{1, 2, 3, 4, 1, 5, 6};  // longer than the window
  auto emb = lm.embed(ids);
  const auto g = lm.logit_gradient(emb, ids.size(), 9);
  const double h = 1e-5;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    const double keep = emb[i];
    emb[i] = keep + h;
    const double up = lm.logits_from_embeddings(emb, ids.size())[9];
    emb[i] = keep - h;
    const double down = lm.logits_from_embeddings(emb, ids.size())[9];
    emb[i] = keep;
    CHECK(g[i] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
  }
  for (std::size_t i = 0; i < 2 * lm.params().dim; ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("zeroing the vocabulary head zeroes every gradient") {
  TinyLm lm(4, small_vocab(), 8, 16);
  std::fill(lm.mutable_params().w_out.begin(), lm.mutable_params().w_out.end(), 0.0);
  const auto map = lm.gradients("the cat sat on the mat .", "1");
  for (const auto& row : map.grads) {
    for (double v : row) CHECK(v == 0.0);
  }
}

TEST_CASE("tiny lm completion and gradient map") {
  const TinyLm lm(5, small_vocab(), 8, 32);
  CompletionRequest r;
  r.prompt = "the cat sat ANSWER :";
  r.candidate_set = std::vector<std::string>{"0", "1", "the mat"};
  r.max_new_tokens = 3;
  r.want_logprobs = true;
  const auto res = lm.complete(r);
  std::vector<int> ids;
  for (const auto& t : lm.tokenize(r.prompt)) ids.push_back(t.id);
  CHECK(res.candidate_logprobs->at("0") == doctest::Approx(lm.next_token_logprobs(ids)[8]));
  auto ctx = ids;
  double two = lm.next_token_logprobs(ctx)[1];
  ctx.push_back(1);
  two += lm.next_token_logprobs(ctx)[5];
  CHECK(res.candidate_logprobs->at("the mat") == doctest::Approx(two));
  REQUIRE(res.token_logprobs.has_value());
  CHECK(res.token_logprobs->size() == 3);
  CHECK(lm.complete(r).text == res.text);

  const auto map = lm.gradients(r.prompt, "1");
  CHECK_NOTHROW(map.validate_against(r.prompt));
  CHECK_THROWS_AS(lm.gradients(r.prompt, "dog"), InvalidArgument);
}

TEST_CASE("factory builds every backend kind") {
  CHECK(make_backend("mock", {{"kind", "constant"}, {"text", "1"}})->id() == "mock:constant");
  CHECK(make_backend("mock", {{"kind", "instability"}, {"q", 0.2}})->id() == "mock:instability:0.20");
  const auto lm = make_backend("tiny-lm", {{"dim", 8}}, {"the cat sat", "a dog ran."});
  CHECK(lm->supports_gradients());
  CHECK(make_backend("http", {{"model", "m"}, {"base_url", "http://localhost:1"}})->id() == "http:m");
  CHECK_THROWS_AS(make_backend("gpu", nlohmann::json::object()), InvalidArgument);
  CHECK_THROWS_AS(make_backend("mock", {{"kind", "nope"}}), InvalidArgument);
  const auto vocab = tiny_lm_vocab({"b a", "a, c"});
  CHECK(vocab.front() == "<unk>");
  CHECK(std::find(vocab.begin(), vocab.end(), "c") != vocab.end());
  CHECK(std::find(vocab.begin(), vocab.end(), ",") != vocab.end());
  CHECK(std::is_sorted(vocab.begin() + 1, vocab.end()));
}

TEST_CASE("interchange records round trip and reject bad lines") {
  InterchangeRecord rec;
  rec.instance_id = "x1";
  rec.target = "1";
  rec.map.tokens = {{"ab", 0, 2}, {" c", 2, 4}};
  rec.map.grads = {{0.5, -1.0}, {0.25, 2.0}};
  const auto back = interchange_from_json(interchange_to_json(rec));
  CHECK(back.instance_id == "x1");
  CHECK(back.map.tokens == rec.map.tokens);
  CHECK(back.map.grads == rec.map.grads);

  const fs::path p = fs::temp_directory_path() / "promptsens-unit-interchange.jsonl";
  {
    std::ofstream out(p);
    out << interchange_to_json(rec) << "\n\n";
    out << R"({"instance_id":"x2","target":"1","tokens":[{"text":"abc","start":0,"end":2}],"grads":[[1]]})" << "\n";
    out << R"({"instance_id":"x3","target":"1","tokens":[{"text":"a","start":0,"end":1}],"grads":[["NaN"]]})" << "\n";
    out << R"({"instance_id":"x4","tokens":[],"grads":[]})" << "\n";
    out << "not json\n";
  }
  const auto file = load_interchange(p);
  CHECK(file.records.size() == 1);
  REQUIRE(file.rejected.size() == 4);
  CHECK(file.rejected[0].line == 3);
  CHECK_THROWS_AS(load_interchange(p.string() + ".missing"), ParseError);
}
