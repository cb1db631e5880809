#include "promptsens/sensitivity/sensitivity.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "promptsens/backends/fanout.hpp"
#include "promptsens/core/canonicalize.hpp"
#include "promptsens/core/hash.hpp"
#include "promptsens/core/rng.hpp"
#include "promptsens/decoding/decoding.hpp"
#include "promptsens/error.hpp"
#include "promptsens/kernels/kernels.hpp"

namespace promptsens {

using nlohmann::json;

std::pair<CanonicalLabel, std::size_t> mode_frequency(std::span<const CanonicalLabel> labels) {
  if (labels.empty()) throw EstimationError("mode of an empty prediction multiset");
  std::size_t best = 0;
  std::size_t best_count = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    bool seen = false;
    for (std::size_t j = 0; j < i && !seen; ++j) seen = labels[j] == labels[i];
    if (seen) continue;
    std::size_t count = 0;
    for (std::size_t j = i; j < labels.size(); ++j) count += labels[j] == labels[i];
    if (count > best_count) {
      best = i;
      best_count = count;
    }
  }
  return {labels[best], best_count};
}

double variation_ratio(std::span<const CanonicalLabel> labels) {
  const auto [mode, f_m] = mode_frequency(labels);
  return 1.0 - static_cast<double>(f_m) / static_cast<double>(labels.size());
}

SensitivityRecord make_sensitivity_record(std::string id, std::vector<CanonicalLabel> labels,
                                          const CanonicalLabel& gold) {
  SensitivityRecord r;
  r.id = std::move(id);
  auto [mode, f_m] = mode_frequency(labels);
  r.mode = std::move(mode);
  r.f_m = f_m;
  r.n = labels.size() - 1;
  r.s = 1.0 - static_cast<double>(f_m) / static_cast<double>(labels.size());
  r.correct = labels.front().compliant() && labels.front() == gold;
  r.labels = std::move(labels);
  return r;
}

CandidateDispersion candidate_dispersion(const std::vector<std::string>& candidates,
                                         const std::vector<std::vector<double>>& scores) {
  if (scores.size() < 2) throw EstimationError("candidate dispersion needs at least 2 synthetic inputs");
  if (candidates.empty()) throw EstimationError("candidate dispersion: empty candidate set");
  const std::size_t m = candidates.size();
  for (const auto& row : scores) {
    if (row.size() != m) throw EstimationError("candidate dispersion: score row does not match the candidates");
    for (double v : row) {
      if (!std::isfinite(v)) throw EstimationError("candidate dispersion: non-finite score");
    }
  }
  CandidateDispersion d;
  d.candidates = candidates;
  const double n = static_cast<double>(scores.size());
  std::vector<double> column(scores.size());
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t r = 0; r < scores.size(); ++r) column[r] = scores[r][c];
    const double mean = kernels::sum(column) / n;
    d.variance.push_back(kernels::sum_sq_dev(column, mean) / n);
  }
  d.min = *std::min_element(d.variance.begin(), d.variance.end());
  d.max = *std::max_element(d.variance.begin(), d.variance.end());
  const double range = d.max - d.min;
  for (double v : d.variance) d.normalized.push_back(range > 0.0 ? (v - d.min) / range : 0.0);
  return d;
}

std::vector<std::string> scoring_candidates(const Instance& instance, const std::vector<std::string>& configured) {
  if (!configured.empty()) return configured;
  std::vector<std::string> out;
  if (instance.task_kind == TaskKind::open_numeric) return out;
  for (std::size_t i = 0; i < instance.options.size(); ++i) out.push_back(std::to_string(i));
  return out;
}

SensitivityEstimate estimate_sensitivity(const Instance& instance, const PerturbationSet& pset,
                                         const PromptTemplate& tmpl, const std::vector<Instance>& exemplars,
                                         Backend& backend, const DecodingStrategy& strategy,
                                         const InferenceOptions& options) {
  if (pset.original.id != instance.id) {
    throw EstimationError("perturbation set belongs to '" + pset.original.id + "', not '" + instance.id + "'");
  }
  const std::string& name = strategy.name;
  if (name != "greedy" && name != "top_k" && name != "sad") throw EstimationError("unknown decoding strategy '" + name + "'");

  const std::size_t count = pset.variants.size() + 1;
  std::vector<std::string> ids{instance.id};
  std::vector<std::string> prompts{render(tmpl, instance, exemplars).text};
  for (const Instance& v : pset.variants) {
    ids.push_back(v.id);
    prompts.push_back(render(tmpl, v, exemplars).text);
  }
  backend.observe_instance(prompts.front(), std::vector<std::string>(prompts.begin() + 1, prompts.end()),
                           instance.gold_label(), instance.options.size());

  const auto candidates = scoring_candidates(instance, options.candidates);
  const bool score = name == "sad" || (name == "top_k" && !candidates.empty());
  if (name == "sad" && candidates.empty()) throw EstimationError("sensitivity-aware decoding needs candidates");
  if (name == "sad" && pset.variants.size() < 2) throw EstimationError("sensitivity-aware decoding needs n >= 2");

  std::vector<CompletionResult> results(count);
  parallel_for(count, options.workers, [&](std::size_t i) {
    CompletionRequest req;
    req.prompt = prompts[i];
    req.max_new_tokens = options.max_new_tokens.value_or(tmpl.max_new_tokens);
    req.seed = mix_seed(options.seed, fnv1a64(prompts[i]));
    if (score) req.candidate_set = candidates;
    if (name == "top_k" && !score) req.temperature = strategy.temperature;
    results[i] = backend.complete(req);
    if (score && !results[i].candidate_logprobs) {
      throw ScoringUnsupported("backend '" + backend.id() + "' returned no candidate scores");
    }
  });

  const std::size_t m = instance.options.size();
  auto candidate_label = [&](std::size_t c) { return canonicalize(candidates[c], instance.task_kind, m); };
  std::vector<CanonicalLabel> labels(count);
  std::vector<CandidateScores> scores;
  if (score) {
    for (const auto& r : results) scores.push_back(make_candidate_scores(candidates, *r.candidate_logprobs));
  }
  for (std::size_t i = 0; i < count; ++i) {
    if (name == "greedy" || !score) {
      labels[i] = extract_answer(results[i].text, tmpl, instance);
    } else if (name == "top_k") {
      Rng rng(mix_seed(options.seed ^ 0x746f706bULL, fnv1a64(prompts[i])));
      labels[i] = candidate_label(top_k_index(scores[i], strategy.k, strategy.temperature, rng));
    } else {
      labels[i] = candidate_label(greedy_index(scores[i]));
    }
  }
  if (name == "sad") {
    std::vector<std::vector<double>> synthetic;
    for (std::size_t i = 1; i < count; ++i) synthetic.push_back(scores[i].raw_logprobs);
    const auto dispersion = candidate_dispersion(candidates, synthetic);
    labels[0] = candidate_label(sensitivity_aware_index(scores[0], dispersion, strategy.alpha));
  }

  SensitivityEstimate est;
  for (std::size_t i = 0; i < count; ++i) {
    est.predictions.push_back({ids[i], labels[i], results[i].text, results[i].candidate_logprobs});
  }
  est.record = make_sensitivity_record(instance.id, std::move(labels), instance.gold_label());
  return est;
}

std::string sensitivity_record_to_json(const SensitivityRecord& r) {
  json labels = json::array();
  for (const auto& l : r.labels) labels.push_back(l.value());
  json j = {{"id", r.id},       {"s", r.s},           {"mode", r.mode.value()}, {"f_m", r.f_m},
            {"n", r.n},         {"correct", r.correct}, {"labels", std::move(labels)}};
  return j.dump();
}

SensitivityRecord sensitivity_record_from_json(const std::string& line) {
  SensitivityRecord r;
  try {
    const json j = json::parse(line);
    r.id = j.at("id").get<std::string>();
    r.s = j.at("s").get<double>();
    r.mode = CanonicalLabel(j.at("mode").get<std::string>());
    r.f_m = j.at("f_m").get<std::size_t>();
    r.n = j.at("n").get<std::size_t>();
    r.correct = j.at("correct").get<bool>();
    for (const auto& l : j.at("labels")) r.labels.emplace_back(l.get<std::string>());
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("sensitivity record: ") + e.what());
  }
  if (r.labels.size() != r.n + 1) throw InvalidArgument("sensitivity record '" + r.id + "': labels do not match n");
  const double expect = 1.0 - static_cast<double>(r.f_m) / static_cast<double>(r.n + 1);
  if (r.s != expect) throw InvalidArgument("sensitivity record '" + r.id + "': s disagrees with f_m and n");
  return r;
}

namespace {

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << content;
    if (!out) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::filesystem::path meta_path(const std::filesystem::path& path) { return path.string() + ".meta.json"; }

}  // namespace

void write_sensitivity_records(const std::filesystem::path& path, const std::vector<SensitivityRecord>& records,
                               const RecordMeta& meta) {
  std::string body;
  for (const auto& r : records) body += sensitivity_record_to_json(r) + "\n";
  const json m = {{"dataset", meta.dataset}, {"template", meta.template_id}, {"strategy", meta.strategy},
                  {"backend", meta.backend}, {"seed", meta.seed}};
  write_atomic(meta_path(path), m.dump(2) + "\n");
  write_atomic(path, body);
}

std::pair<std::vector<SensitivityRecord>, RecordMeta> read_sensitivity_records(const std::filesystem::path& path) {
  std::pair<std::vector<SensitivityRecord>, RecordMeta> out;
  {
    std::ifstream in(meta_path(path));
    if (!in) throw ParseError(meta_path(path).string(), 0, "missing record metadata");
    try {
      const json m = json::parse(in);
      out.second = {m.at("dataset").get<std::string>(), m.at("template").get<std::string>(),
                    m.at("strategy").get<std::string>(), m.at("backend").get<std::string>(),
                    m.at("seed").get<std::uint64_t>()};
    } catch (const json::exception& e) {
      throw ParseError(meta_path(path).string(), 0, e.what());
    }
  }
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open record file");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.first.push_back(sensitivity_record_from_json(line));
    } catch (const InvalidArgument& e) {
      throw ParseError(path.string(), lineno, e.what());
    }
  }
  return out;
}

}  // namespace promptsens
