#include "promptsens/saliency/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "json.hpp"
#include "promptsens/error.hpp"
#include "promptsens/kernels/kernels.hpp"

namespace promptsens {

std::vector<double> saliency_scores(const GradientMap& gmap) {
  gmap.validate();
  std::vector<double> out;
  out.reserve(gmap.grads.size());
  for (const auto& g : gmap.grads) out.push_back(kernels::l1_norm(g));
  return out;
}

SegmentedSaliency assign_segments(const GradientMap& gmap, const RenderedPrompt& rendered, std::string instance_id) {
  gmap.validate();
  const std::string& text = rendered.text;
  SegmentedSaliency seg;
  seg.instance_id = std::move(instance_id);

  std::size_t covered_to = rendered.exemplar_end;
  for (std::size_t i = 0; i < gmap.tokens.size(); ++i) {
    const GradientToken& t = gmap.tokens[i];
    if (t.end > text.size() || text.compare(t.start, t.end - t.start, t.text) != 0) {
      throw InvalidArgument("token " + std::to_string(i) + " ('" + t.text + "') does not match the prompt at [" +
                            std::to_string(t.start) + "," + std::to_string(t.end) + ")");
    }
    TokenSaliency ts{t.text, t.start, t.end, SegmentTag::prompt, true, 0.0};
    if (t.end > t.start) {
      auto overlap = [&](std::size_t b, std::size_t e) {
        const std::size_t lo = std::max(b, t.start), hi = std::min(e, t.end);
        return hi > lo ? hi - lo : 0;
      };
      std::size_t best = overlap(rendered.exemplar_begin, rendered.exemplar_end);
      for (const Span& s : rendered.spans) {
        const std::size_t o = overlap(s.begin, s.end);
        if (o > best) {
          best = o;
          ts.tag = s.tag;
          ts.excluded = false;
        }
      }
      if (t.start <= covered_to && t.end > covered_to) covered_to = t.end;
    }
    seg.tokens.push_back(std::move(ts));
  }
  if (covered_to < text.size()) {
    throw InvalidArgument("gradient tokens leave the prompt uncovered from char " + std::to_string(covered_to));
  }
  return seg;
}

void normalize_permille(SegmentedSaliency& seg) {
  double total = 0.0;
  for (const auto& t : seg.tokens) {
    if (!t.excluded) total += t.score;
  }
  if (!(total > 0.0)) return;
  for (auto& t : seg.tokens) t.score = t.score * 1000.0 / total;
}

double mean_segment_saliency(const SegmentedSaliency& seg, SegmentTag tag) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : seg.tokens) {
    if (t.excluded || t.tag != tag) continue;
    sum += t.score;
    ++n;
  }
  if (n == 0) {
    throw EstimationError("instance '" + seg.instance_id + "' has no " + std::string(to_string(tag)) + " tokens");
  }
  return sum / static_cast<double>(n);
}

void compute_means(SegmentedSaliency& seg) {
  seg.means.clear();
  for (SegmentTag tag : {SegmentTag::input, SegmentTag::prompt, SegmentTag::knowledge, SegmentTag::option,
                         SegmentTag::target}) {
    const bool present = std::any_of(seg.tokens.begin(), seg.tokens.end(),
                                     [tag](const TokenSaliency& t) { return !t.excluded && t.tag == tag; });
    if (present) seg.means[tag] = mean_segment_saliency(seg, tag);
  }
}

SegmentedSaliency segmented_saliency(const GradientMap& gmap, const RenderedPrompt& rendered, std::string instance_id) {
  SegmentedSaliency seg = assign_segments(gmap, rendered, std::move(instance_id));
  const auto scores = saliency_scores(gmap);
  for (std::size_t i = 0; i < scores.size(); ++i) seg.tokens[i].score = scores[i];
  normalize_permille(seg);
  compute_means(seg);
  return seg;
}

double round2(double value) { return std::round(value * 100.0) / 100.0; }

std::string format2(double value) {
  const double r = round2(value);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.2f", r == 0.0 ? 0.0 : r);
  return buf;
}

SegmentStats stats_from_means(double input_mean, double prompt_mean) {
  SegmentStats s;
  s.means[SegmentTag::input] = round2(input_mean);
  s.means[SegmentTag::prompt] = round2(prompt_mean);
  const double i = s.means[SegmentTag::input];
  const double p = s.means[SegmentTag::prompt];
  s.delta = p - i;
  if (p != 0.0) s.ratio = i / p * 100.0;
  return s;
}

SegmentStats segment_stats(const std::vector<SegmentedSaliency>& records,
                           const std::vector<SensitivityRecord>& sensitivities) {
  if (records.empty()) throw EstimationError("segment stats: no saliency records");
  std::vector<const SegmentedSaliency*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto* a, const auto* b) { return a->instance_id < b->instance_id; });

  std::map<SegmentTag, std::pair<double, std::size_t>> acc;
  for (const auto* r : sorted) {
    for (const auto& [tag, mean] : r->means) {
      acc[tag].first += mean;
      acc[tag].second += 1;
    }
  }
  for (SegmentTag tag : {SegmentTag::input, SegmentTag::prompt}) {
    if (!acc.count(tag)) throw EstimationError("segment stats: no " + std::string(to_string(tag)) + " tokens in any record");
  }
  auto avg = [&](SegmentTag tag) { return acc[tag].first / static_cast<double>(acc[tag].second); };
  SegmentStats s = stats_from_means(avg(SegmentTag::input), avg(SegmentTag::prompt));
  s.instances = records.size();
  for (const auto& [tag, sum_count] : acc) {
    if (tag != SegmentTag::input && tag != SegmentTag::prompt) s.means[tag] = round2(avg(tag));
  }

  if (!sensitivities.empty()) {
    std::map<std::string, double> by_id;
    for (const auto& r : sensitivities) by_id[r.id] = r.s;
    double sum = 0.0;
    for (const auto* r : sorted) {
      auto it = by_id.find(r->instance_id);
      if (it == by_id.end()) throw EstimationError("segment stats: no sensitivity record for '" + r->instance_id + "'");
      sum += it->second;
    }
    s.sensitivity = sum / static_cast<double>(sorted.size());
  }
  return s;
}

TargetStats target_stats_from_means(double input_mean, double target_mean) {
  TargetStats t;
  t.input = round2(input_mean);
  t.target = round2(target_mean);
  if (t.target != 0.0) t.ratio = t.input / t.target * 100.0;
  return t;
}

TargetStats target_token_stats(const std::vector<SegmentedSaliency>& records) {
  std::vector<const SegmentedSaliency*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto* a, const auto* b) { return a->instance_id < b->instance_id; });
  double in_sum = 0.0, t_sum = 0.0;
  std::size_t in_n = 0, t_n = 0;
  for (const auto* r : sorted) {
    if (auto it = r->means.find(SegmentTag::target); it != r->means.end()) {
      t_sum += it->second;
      ++t_n;
    }
    if (auto it = r->means.find(SegmentTag::input); it != r->means.end()) {
      in_sum += it->second;
      ++in_n;
    }
  }
  if (t_n == 0) throw EstimationError("target stats: the template has no embedded answer sentence");
  if (in_n == 0) throw EstimationError("target stats: no input tokens");
  return target_stats_from_means(in_sum / static_cast<double>(in_n), t_sum / static_cast<double>(t_n));
}

std::string segmented_saliency_to_json(const SegmentedSaliency& seg) {
  nlohmann::json tokens = nlohmann::json::array();
  for (const auto& t : seg.tokens) {
    tokens.push_back({{"text", t.text},
                      {"start", t.start},
                      {"end", t.end},
                      {"tag", std::string(to_string(t.tag))},
                      {"excluded", t.excluded},
                      {"score", t.score}});
  }
  nlohmann::json means = nlohmann::json::object();
  for (const auto& [tag, v] : seg.means) means[std::string(to_string(tag))] = v;
  return nlohmann::json{{"id", seg.instance_id}, {"tokens", std::move(tokens)}, {"means", std::move(means)}}.dump();
}

std::string segment_stats_csv(const std::vector<StatsRow>& rows) {
  std::string out = "dataset,template,n,input,prompt,knowledge,option,target,delta,ratio,target_ratio,sensitivity\n";
  auto cell = [](const std::map<SegmentTag, double>& m, SegmentTag tag) {
    auto it = m.find(tag);
    return it == m.end() ? std::string() : format2(it->second);
  };
  for (const StatsRow& r : rows) {
    const SegmentStats& s = r.stats;
    out += r.dataset + "," + r.template_id + "," + std::to_string(s.instances) + ",";
    out += cell(s.means, SegmentTag::input) + "," + cell(s.means, SegmentTag::prompt) + ",";
    out += cell(s.means, SegmentTag::knowledge) + "," + cell(s.means, SegmentTag::option) + ",";
    out += (r.target ? format2(r.target->target) : cell(s.means, SegmentTag::target)) + ",";
    out += format2(s.delta) + ",";
    out += (s.ratio ? format2(*s.ratio) : std::string("NA")) + ",";
    out += (r.target ? (r.target->ratio ? format2(*r.target->ratio) : std::string("NA")) : std::string()) + ",";
    if (s.sensitivity) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", *s.sensitivity);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace promptsens
