#include <random>

#include "doctest.h"
#include "json.hpp"
#include "promptsens/core/canonicalize.hpp"
#include "promptsens/core/hash.hpp"
#include "promptsens/core/manifest.hpp"
#include "promptsens/core/rng.hpp"
#include "promptsens/core/types.hpp"
#include "promptsens/error.hpp"

using namespace promptsens;

TEST_CASE("rng engine is the standard mt19937_64") {
  // The standard fixes the 10000th output of a default-seeded engine.
  Rng rng(5489);
  std::uint64_t v = 0;
  for (int i = 0; i < 10000; ++i) v = rng.next_u64();
  CHECK(v == 9981545732273789042ULL);
}

TEST_CASE("rng golden stream") {
  Rng r(2266);
  CHECK(r.next_u64() == 3647512698632270868ULL);
  CHECK(r.next_u64() == 15218234427871599746ULL);
  CHECK(r.next_u64() == 12104239446346377910ULL);
  const std::uint64_t below[] = {2, 1, 9, 7, 9};
  for (auto b : below) CHECK(r.below(10) == b);
  CHECK(r.uniform() == 0.50844715998088197);
  CHECK(r.normal() == 0.2198837000042359);
  CHECK(r.normal() == 1.0233816083328067);
  const std::vector<double> w{0.2, 0.0, 0.5, 0.3};
  const std::size_t picks[] = {2, 3, 2, 0, 2, 3};
  for (auto p : picks) CHECK(r.weighted(w) == p);
  CHECK(mix_seed(2266, 105) == 6419149459709721591ULL);
}

TEST_CASE("uniform uses the top 53 bits") {
  std::mt19937_64 ref(77);
  Rng rng(77);
  for (int i = 0; i < 100; ++i) {
    const double expected = static_cast<double>(ref() >> 11) / 9007199254740992.0;
    CHECK(rng.uniform() == expected);
  }
}

TEST_CASE("rng argument checks and weighted skips zero weights") {
  Rng rng(1);
  CHECK_THROWS_AS(rng.below(0), InvalidArgument);
  const std::vector<double> zero{0.0, 0.0};
  CHECK_THROWS_AS(rng.weighted(zero), InvalidArgument);
  const std::vector<double> w{0.0, 1.0, 0.0};
  for (int i = 0; i < 50; ++i) CHECK(rng.weighted(w) == 1);
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
  CHECK(fnv1a64("bar", fnv1a64("foo")) == fnv1a64("foobar"));
}

TEST_CASE("canonicalize classification answers") {
  const auto c = [](std::string_view raw, std::size_t m = 2) {
    return canonicalize(raw, TaskKind::classification, m).value();
  };
  CHECK(c(" 1") == "1");
  CHECK(c("0.") == "0");
  CHECK(c("(1) acceptable") == "1");
  CHECK(c("Answer: 01") == "1");
  CHECK(c("2") == "NONCOMPLIANT");
  CHECK(c("2", 3) == "2");
  CHECK(c("acceptable") == "NONCOMPLIANT");
  CHECK(c("0.5") == "NONCOMPLIANT");
  CHECK(c("-1") == "NONCOMPLIANT");
  CHECK(c("x1 then 0") == "0");
  CHECK(c("") == "NONCOMPLIANT");
}

TEST_CASE("canonicalize open numeric answers") {
  const auto c = [](std::string_view raw) { return canonicalize(raw, TaskKind::open_numeric, 0).value(); };
  CHECK(c("so 3 apples plus 4 is 7") == "7");
  CHECK(c("The total is 1,825.50 dollars") == "1825.5");
  CHECK(c("it drops to -3") == "-3");
  CHECK(c("nothing here") == "NONCOMPLIANT");
  CHECK(normalize_decimal("+001,825.50") == std::optional<std::string>("1825.5"));
  CHECK(normalize_decimal("-0.0") == std::optional<std::string>("0"));
  CHECK_FALSE(normalize_decimal("1e5").has_value());
}

TEST_CASE("instance validation") {
  Instance inst{"a", {{"sentence", "x y"}}, {"unacceptable", "acceptable"}, "1", TaskKind::classification};
  CHECK_NOTHROW(validate_instance(inst));
  CHECK(inst.gold_label() == CanonicalLabel::index(1));
  inst.gold = "2";
  CHECK_THROWS_AS(validate_instance(inst), DatasetError);
  CHECK_THROWS_AS(inst.field("missing"), DatasetError);
  CHECK(CanonicalLabel("3").as_index() == std::optional<std::size_t>(3));
  CHECK_FALSE(CanonicalLabel::noncompliant().as_index().has_value());
}

TEST_CASE("manifest round trip and validation") {
  const nlohmann::json doc = {{"dataset", "d.jsonl"},
                              {"dataset_format", "cola"},
                              {"template", "cfp"},
                              {"backend", "mock"},
                              {"strategy", {{"name", "sad"}, {"alpha", 0.3}}},
                              {"n_variants", 4},
                              {"seeds", {2266, 105, 86379}},
                              {"perturbation", {{"k", 3}, {"strategy", "scatter"}}},
                              {"alpha_grid", {0.25, 0.5, 1.0}}};
  const RunManifest m = manifest_from_json(doc);
  CHECK(m.template_id == "cfp");
  CHECK(m.strategy.alpha == 0.3);
  CHECK(m.perturbation.strategy == SubsetStrategy::scatter);
  CHECK(m.seeds == std::vector<std::uint64_t>{2266, 105, 86379});
  const RunManifest back = manifest_from_json(manifest_to_json(m));
  CHECK(manifest_to_json(back) == manifest_to_json(m));

  CHECK_THROWS_AS(manifest_from_json({{"dataset", "d"}, {"bogus", 1}}), InvalidArgument);
  CHECK_THROWS_AS(manifest_from_json({{"dataset", "d"}, {"seeds", nlohmann::json::array()}}), InvalidArgument);
  CHECK_THROWS_AS(manifest_from_json({{"dataset", "d"}, {"strategy", {{"name", "sad"}}}, {"n_variants", 1}}),
                  InvalidArgument);
  CHECK_THROWS_AS(manifest_from_json({{"dataset", "d"}, {"alpha_grid", {0.5, 0.4}}}), InvalidArgument);
  CHECK_THROWS_AS(manifest_from_json({{"dataset", "d"}, {"alpha_grid", {0.0}}}), InvalidArgument);
  CHECK_THROWS_AS(manifest_from_json({{"dataset", "d"}, {"strategy", {{"name", "beam"}}}}), InvalidArgument);
}
