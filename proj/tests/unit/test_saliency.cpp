#include <cmath>
#include <numeric>

#include "doctest.h"
#include "json.hpp"
#include "promptsens/error.hpp"
#include "promptsens/saliency/saliency.hpp"

using namespace promptsens;

namespace {

Instance glad() {
  return Instance{"g", {{"sentence", "I'm glad I saw anybody."}}, {"unacceptable", "acceptable"}, "0",
                  TaskKind::classification};
}

// Space-prefixed word pieces with newlines on their own, tiling the text.
std::vector<GradientToken> pieces(const std::string& text) {
  std::vector<GradientToken> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= text.size(); ++i) {
    const bool cut = i == text.size() || text[i] == ' ' || text[i] == '\n' || text[i - 1] == '\n';
    if (cut) {
      out.push_back({text.substr(start, i - start), start, i});
      start = i;
    }
  }
  return out;
}

GradientMap map_with(const std::string& text, const std::function<double(std::size_t)>& weight) {
  GradientMap g;
  g.tokens = pieces(text);
  for (std::size_t i = 0; i < g.tokens.size(); ++i) {
    const double w = weight(i);
    g.grads.push_back({w, -2.0 * w, 0.5 * w});
  }
  return g;
}

}  // namespace

TEST_CASE("saliency is the l1 norm of each token gradient") {
  GradientMap g;
  g.tokens = {{"a", 0, 1}, {"b", 1, 2}};
  g.grads = {{1.0, -2.0, 0.5}, {0.0, 0.0, -0.25}};
  CHECK(saliency_scores(g) == std::vector<double>{3.5, 0.25});
  g.grads[1][0] = NAN;
  CHECK_THROWS_AS(saliency_scores(g), InvalidArgument);
  g.grads[1] = {1.0};
  CHECK_THROWS_AS(saliency_scores(g), InvalidArgument);
}

TEST_CASE("tokens take the segment they overlap most") {
  const Instance s = glad();
  const RenderedPrompt p = render(builtin_template("base_b", s), s);
  const GradientMap g = map_with(p.text, [](std::size_t) { return 1.0; });
  const auto seg = assign_segments(g, p, "g");
  REQUIRE(seg.tokens.size() == g.tokens.size());
  for (const auto& t : seg.tokens) {
    CAPTURE(t.text);
    const bool in_input = t.start >= p.spans[1].begin && t.end <= p.spans[1].end;
    // " I'm" straddles "SENTENCE:" and the sentence; 3 of 4 bytes are input.
    if (t.text == " I'm") CHECK(t.tag == SegmentTag::input);
    else if (in_input) CHECK(t.tag == SegmentTag::input);
    else if (t.text == "\n") CHECK(t.tag == SegmentTag::prompt);
    CHECK_FALSE(t.excluded);
  }
}

TEST_CASE("exemplar and zero-width tokens are excluded") {
  Instance ex = glad();
  ex.fields["sentence"] = "The cat sat.";
  ex.gold = "1";
  const Instance s = glad();
  const RenderedPrompt p = render(builtin_template("base_b", s), s, {ex});
  GradientMap g = map_with(p.text, [](std::size_t i) { return 1.0 + static_cast<double>(i % 3); });
  g.tokens.insert(g.tokens.begin() + 3, GradientToken{"", g.tokens[3].start, g.tokens[3].start});
  g.grads.insert(g.grads.begin() + 3, std::vector<double>{9.0, 9.0, 9.0});

  const auto seg = segmented_saliency(g, p, "g");
  double test_sum = 0.0;
  for (const auto& t : seg.tokens) {
    if (t.end <= p.exemplar_end || t.start == t.end) {
      CHECK(t.excluded);
      CHECK(t.tag == SegmentTag::prompt);
    } else {
      CHECK_FALSE(t.excluded);
      test_sum += t.score;
    }
  }
  CHECK(test_sum == doctest::Approx(1000.0));
  CHECK(seg.means.count(SegmentTag::input));
  CHECK(seg.means.count(SegmentTag::prompt));
}

TEST_CASE("means follow an independent per-mille computation") {
  const Instance s = glad();
  const RenderedPrompt p = render(builtin_template("zero_b", s), s);
  const GradientMap g = map_with(p.text, [](std::size_t i) { return 0.5 + 0.25 * static_cast<double>(i); });
  const auto seg = segmented_saliency(g, p, "g");

  // Oracle: 3.5 * weight per token, tags by majority overlap recomputed by hand.
  const auto tokens = pieces(p.text);
  std::map<SegmentTag, std::pair<double, int>> acc;
  double total = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) total += 3.5 * (0.5 + 0.25 * static_cast<double>(i));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    std::size_t best = 0;
    SegmentTag tag = SegmentTag::prompt;
    for (const Span& sp : p.spans) {
      const std::size_t lo = std::max(sp.begin, tokens[i].start), hi = std::min(sp.end, tokens[i].end);
      if (hi > lo && hi - lo > best) {
        best = hi - lo;
        tag = sp.tag;
      }
    }
    acc[tag].first += 3.5 * (0.5 + 0.25 * static_cast<double>(i)) * 1000.0 / total;
    acc[tag].second += 1;
  }
  REQUIRE(acc.count(SegmentTag::target));
  for (const auto& [tag, sn] : acc) {
    CAPTURE(to_string(tag));
    CHECK(seg.means.at(tag) == doctest::Approx(sn.first / sn.second).epsilon(1e-12));
  }
  CHECK(mean_segment_saliency(seg, SegmentTag::input) == seg.means.at(SegmentTag::input));
  CHECK_THROWS_AS(mean_segment_saliency(seg, SegmentTag::knowledge), EstimationError);
  CHECK(nlohmann::json::parse(segmented_saliency_to_json(seg)).at("tokens").size() == tokens.size());
}

TEST_CASE("alignment errors") {
  const Instance s = glad();
  const RenderedPrompt p = render(builtin_template("base_b", s), s);
  GradientMap g = map_with(p.text, [](std::size_t) { return 1.0; });
  GradientMap wrong = g;
  wrong.tokens[2].text = "XX";
  CHECK_THROWS_AS(assign_segments(wrong, p), InvalidArgument);
  GradientMap short_map = g;
  short_map.tokens.pop_back();
  short_map.grads.pop_back();
  CHECK_THROWS_AS(assign_segments(short_map, p), InvalidArgument);
  GradientMap ragged = g;
  ragged.grads.pop_back();
  CHECK_THROWS_AS(assign_segments(ragged, p), InvalidArgument);
}

TEST_CASE("report precision") {
  CHECK(round2(8.565) == doctest::Approx(8.57));
  CHECK(round2(-1.005) == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(format2(12.744999) == "12.74");
  CHECK(format2(-0.001) == "0.00");
  CHECK(format2(59.666) == "59.67");
}

TEST_CASE("segment arithmetic reproduces the reference table") {
  struct Row {
    double input, prompt;
    const char* delta;
    const char* ratio;
  };
  const Row rows[] = {
      {4.17, 12.74, "8.57", "32.73"},  {7.65, 23.66, "16.01", "32.33"}, {3.75, 11.43, "7.68", "32.81"},
      {2.68, 7.41, "4.73", "36.17"},   {2.25, 8.02, "5.77", "28.05"},   {2.37, 7.06, "4.69", "33.57"},
      {3.10, 12.79, "9.69", "24.24"},  {3.61, 17.18, "13.57", "21.01"}, {1.68, 6.71, "5.03", "25.04"},
      {1.95, 9.48, "7.53", "20.57"},   {3.22, 18.95, "15.73", "16.99"}, {1.53, 7.32, "5.79", "20.90"},
      {3.09, 12.59, "9.50", "24.54"},  {4.99, 22.32, "17.33", "22.36"}, {2.77, 10.70, "7.93", "25.89"},
  };
  for (const Row& r : rows) {
    CAPTURE(r.input);
    const SegmentStats s = stats_from_means(r.input, r.prompt);
    CHECK(format2(s.delta) == r.delta);
    REQUIRE(s.ratio.has_value());
    CHECK(format2(*s.ratio) == r.ratio);
  }
  CHECK_FALSE(stats_from_means(1.0, 0.0).ratio.has_value());
}

TEST_CASE("target arithmetic reproduces the reference table") {
  const std::pair<double, double> rows[] = {{7.65, 12.82}, {2.25, 13.50}, {3.61, 13.29}, {3.22, 14.63}, {4.99, 12.60}};
  const char* expect[] = {"59.67", "16.67", "27.16", "22.01", "39.60"};
  for (std::size_t i = 0; i < 5; ++i) {
    const TargetStats t = target_stats_from_means(rows[i].first, rows[i].second);
    CHECK(format2(*t.ratio) == expect[i]);
  }
  CHECK_FALSE(target_stats_from_means(1.0, 0.001).ratio.has_value());
}

TEST_CASE("segment stats over instances") {
  SegmentedSaliency a{"a", {}, {{SegmentTag::input, 4.0}, {SegmentTag::prompt, 12.0}}};
  SegmentedSaliency b{"b", {}, {{SegmentTag::input, 4.34}, {SegmentTag::prompt, 13.48}, {SegmentTag::target, 20.0}}};
  const auto s = segment_stats({b, a}, {make_sensitivity_record("a", {CanonicalLabel("1"), CanonicalLabel("0")},
                                                                CanonicalLabel("1")),
                                        make_sensitivity_record("b", {CanonicalLabel("1"), CanonicalLabel("1")},
                                                                CanonicalLabel("1"))});
  CHECK(s.instances == 2);
  CHECK(s.means.at(SegmentTag::input) == 4.17);
  CHECK(s.means.at(SegmentTag::prompt) == 12.74);
  CHECK(s.means.at(SegmentTag::target) == 20.0);
  CHECK(format2(s.delta) == "8.57");
  CHECK(*s.sensitivity == 0.25);
  CHECK_THROWS_AS(segment_stats({a}, {make_sensitivity_record("z", {CanonicalLabel("1")}, CanonicalLabel("1"))}),
                  EstimationError);
  CHECK_THROWS_AS(segment_stats({}, {}), EstimationError);
  CHECK_THROWS_AS(segment_stats({SegmentedSaliency{"c", {}, {{SegmentTag::input, 1.0}}}}, {}), EstimationError);

  const auto t = target_token_stats({a, b});
  CHECK(t.input == 4.17);
  CHECK(t.target == 20.0);
  CHECK_THROWS_AS(target_token_stats({a}), EstimationError);

  const std::string csv = segment_stats_csv({{"cola", "zero_b", s, t}, {"cola", "x", stats_from_means(1.0, 0.0), {}}});
  CHECK(csv ==
        "dataset,template,n,input,prompt,knowledge,option,target,delta,ratio,target_ratio,sensitivity\n"
        "cola,zero_b,2,4.17,12.74,,,20.00,8.57,32.73,20.85,0.2500\n"
        "cola,x,0,1.00,0.00,,,,-1.00,NA,,\n");
}
