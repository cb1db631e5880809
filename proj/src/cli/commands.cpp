#include "promptsens/cli/commands.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <set>

#include "json.hpp"
#include "promptsens/analysis/analysis.hpp"
#include "promptsens/backends/factory.hpp"
#include "promptsens/backends/fanout.hpp"
#include "promptsens/backends/interchange.hpp"
#include "promptsens/core/hash.hpp"
#include "promptsens/datasets/cache.hpp"
#include "promptsens/datasets/dataset.hpp"
#include "promptsens/decoding/decoding.hpp"
#include "promptsens/error.hpp"
#include "promptsens/prompts/prompts.hpp"
#include "promptsens/saliency/saliency.hpp"
#include "promptsens/sensitivity/sensitivity.hpp"

namespace promptsens {

namespace fs = std::filesystem;
using nlohmann::json;

std::string path_safe(const std::string& id) {
  std::string out;
  for (char c : id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_' || c == '@';
    out += ok ? c : '_';
  }
  return out.empty() ? "_" : out;
}

void apply_overrides(RunManifest& m, const ManifestOverrides& o) {
  if (o.backend) m.backend = *o.backend;
  if (o.template_id) {
    m.template_id = *o.template_id;
    m.template_file.clear();
  }
  if (o.alpha_grid) m.alpha_grid = *o.alpha_grid;
  if (o.seeds) m.seeds = *o.seeds;
  if (o.out_dir) m.out_dir = *o.out_dir;
  if (o.parallel) m.parallel = *o.parallel;
  m.validate();
}

namespace {

struct Context {
  RunManifest m;
  std::string dataset_name;
  std::vector<Instance> instances;
  std::string target_field;
  PromptTemplate tmpl;
  std::vector<Instance> exemplars;
};

Context load_context(const RunManifest& m) {
  m.validate();
  Context c;
  c.m = m;
  c.dataset_name = m.dataset.stem().string();
  c.instances = load_dataset(m.dataset, m.dataset_format);
  c.target_field = m.perturbation.target_field.empty() ? default_target_field(m.dataset_format)
                                                       : m.perturbation.target_field;
  c.tmpl = m.template_file.empty() ? builtin_template(m.template_id, c.instances.front(), m.instruction)
                                   : load_template(m.template_file);
  if (!m.exemplars.empty()) {
    c.exemplars = load_exemplars(m.exemplars, m.dataset_format, static_cast<std::size_t>(m.exemplar_count));
  }
  return c;
}

std::vector<std::string> original_prompts(const Context& c) {
  std::vector<std::string> out;
  for (const Instance& inst : c.instances) out.push_back(render(c.tmpl, inst, c.exemplars).text);
  return out;
}

struct Synthesized {
  std::vector<std::optional<PerturbationSet>> sets;  // nullopt: skipped
  std::vector<std::string> skipped;
  fs::path cache_path;
};

Synthesized synthesize_all(const Context& c, std::uint64_t seed) {
  const RunManifest& m = c.m;
  Synthesized out;
  out.sets.resize(c.instances.size());
  if (m.n_variants == 0) {
    for (std::size_t i = 0; i < c.instances.size(); ++i) {
      out.sets[i] = PerturbationSet{c.instances[i], {}, {}, c.target_field};
    }
    return out;
  }
  out.cache_path = perturbation_cache_path(m.out_dir, seed, m.n_variants, m.perturbation.k, m.perturbation.strategy,
                                           c.target_field);
  PerturbationCache cache = PerturbationCache::load(out.cache_path);
  std::optional<ReplacementVocabulary> vocab;
  bool changed = false;
  for (std::size_t i = 0; i < c.instances.size(); ++i) {
    const Instance& inst = c.instances[i];
    const PerturbationKey key{inst.id, seed, m.n_variants, m.perturbation.k, m.perturbation.strategy};
    if (const json* rec = cache.find(key)) {
      if (auto set = perturbation_from_json(*rec, inst)) {
        out.sets[i] = std::move(*set);
        continue;
      }
    }
    try {
      if (!vocab) vocab = build_replacement_vocab(c.instances, c.target_field);
      Rng rng(instance_seed(seed, inst.id));
      PerturbationSet set = synthesize_perturbations(inst, *vocab, m.n_variants, m.perturbation.k,
                                                     m.perturbation.strategy, rng, c.target_field);
      cache.put(set, key);
      changed = true;
      out.sets[i] = std::move(set);
    } catch (const PerturbationError& e) {
      out.skipped.push_back(inst.id + ": " + e.what());
    } catch (const DatasetError& e) {
      out.skipped.push_back(inst.id + ": " + e.what());
    }
  }
  if (changed || (!fs::exists(out.cache_path) && cache.size() > 0)) cache.save(out.cache_path);
  return out;
}

std::unique_ptr<Backend> backend_for(const Context& c) {
  return make_backend(c.m.backend, c.m.backend_config, original_prompts(c));
}

RetryPolicy retry_policy(const RunManifest& m) {
  return RetryPolicy{m.retries, std::chrono::milliseconds(m.backoff_ms), 2.0};
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  const std::string tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << content;
    if (!out) throw Error("write failed: " + tmp);
  }
  fs::rename(tmp, path);
}

std::string row_line(const ReportRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%s %s %s n=%zu accuracy=%.4f sensitivity=%.4f compliance=%.4f\n", r.dataset.c_str(),
                r.template_id.c_str(), r.strategy.c_str(), r.n, r.accuracy, r.sensitivity, r.compliance);
  return buf;
}

std::string correlation_line(const Correlation& c) {
  if (!c.r) return "correlation: " + c.note + "\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "correlation: r=%.4f p=%.3g over %zu rows\n", *c.r, *c.p, c.points);
  return buf;
}

std::vector<fs::path> write_all_reports(const RunReport& report, const fs::path& dir) {
  return {write_report(report, ReportFormat::csv, dir), write_report(report, ReportFormat::json, dir),
          write_report(report, ReportFormat::svg_scatter, dir)};
}

std::string failure_block(const std::vector<std::string>& failures) {
  std::string out;
  for (const auto& f : failures) out += "  failed " + f + "\n";
  return out;
}

json prediction_json(const PredictionRecord& p) {
  json lp = p.candidate_logprobs ? json(*p.candidate_logprobs) : json(nullptr);
  return {{"id", p.prompt_id}, {"label", p.label.value()}, {"raw", p.raw}, {"candidate_logprobs", std::move(lp)}};
}

json meta_json(const RecordMeta& meta) {
  return {{"dataset", meta.dataset}, {"template", meta.template_id}, {"strategy", meta.strategy},
          {"backend", meta.backend}, {"seed", meta.seed}};
}

}  // namespace

CommandOutcome cmd_synth(const RunManifest& manifest) {
  const Context c = load_context(manifest);
  CommandOutcome out;
  std::size_t total_skipped = 0, total_violations = 0;
  for (std::uint64_t seed : c.m.seeds) {
    const Synthesized syn = synthesize_all(c, seed);
    std::size_t variants = 0, noisy = 0, violations = 0, sets = 0;
    for (const auto& set : syn.sets) {
      if (!set) continue;
      ++sets;
      variants += set->variants.size();
      const PerturbationReport report = validate_perturbation_set(*set);
      noisy += report.noisy;
      violations += report.violations;
    }
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s seed %llu: %zu variants over %zu instances, %zu noisy, %zu violations, %zu skipped\n",
                  c.dataset_name.c_str(), static_cast<unsigned long long>(seed), variants, sets, noisy, violations,
                  syn.skipped.size());
    out.summary += buf;
    for (const auto& s : syn.skipped) out.summary += "  skipped " + s + "\n";
    if (!syn.cache_path.empty()) out.artifacts.push_back(syn.cache_path);
    total_skipped += syn.skipped.size();
    total_violations += violations;
  }
  out.exit_code = (total_skipped > static_cast<std::size_t>(c.m.failure_tolerance) || total_violations) ? 1 : 0;
  return out;
}

CommandOutcome cmd_run(const RunManifest& manifest) {
  const Context c = load_context(manifest);
  const RunManifest& m = c.m;
  auto backend = backend_for(c);
  ThrottledBackend throttled(*backend, m.parallel, retry_policy(m));
  const std::string backend_id = backend->id();
  const fs::path record_dir = m.out_dir / "records" / path_safe(c.dataset_name) / path_safe(c.tmpl.id) /
                              path_safe(m.strategy.name + "@" + backend_id);

  CommandOutcome out;
  std::vector<RecordSet> sets;
  for (std::uint64_t seed : m.seeds) {
    const RecordMeta meta{c.dataset_name, c.tmpl.id, m.strategy.name, backend_id, seed};
    const fs::path path = record_dir / ("seed-" + std::to_string(seed) + ".jsonl");
    const Synthesized syn = synthesize_all(c, seed);

    std::set<std::string> expected;
    for (const auto& s : syn.sets) {
      if (s) expected.insert(s->original.id);
    }
    if (fs::exists(path) && fs::exists(path.string() + ".meta.json")) {
      auto [records, stored] = read_sensitivity_records(path);
      std::set<std::string> ids;
      for (const auto& r : records) ids.insert(r.id);
      if (stored == meta && ids == expected && syn.skipped.empty()) {
        sets.push_back({meta, std::move(records)});
        out.artifacts.push_back(path);
        continue;
      }
    }

    // Checkpoint of finished instances, replayed on rerun.
    const fs::path partial = path.string() + ".partial";
    std::map<std::string, json> done;
    {
      std::ifstream in(partial);
      std::string line;
      bool meta_ok = false;
      for (std::size_t lineno = 0; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        try {
          json j = json::parse(line);
          if (lineno == 0) {
            meta_ok = j == json{{"meta", meta_json(meta)}};
            if (!meta_ok) break;
            continue;
          }
          const std::string id = j.at("record").at("id").get<std::string>();
          done[id] = std::move(j);
        } catch (const json::exception&) {
          // A line cut short by an interrupted write; the instance reruns.
        }
      }
      if (!meta_ok) done.clear();
    }
    fs::create_directories(record_dir);
    std::ofstream log(partial, std::ios::binary | std::ios::trunc);
    log << json{{"meta", meta_json(meta)}}.dump() << '\n';
    for (const auto& [id, j] : done) log << j.dump() << '\n';
    log.flush();

    std::vector<std::optional<json>> results(c.instances.size());
    std::vector<std::string> failures = syn.skipped;
    std::mutex mu;
    InferenceOptions opts;
    opts.seed = seed;
    opts.candidates = m.candidates;
    opts.max_new_tokens = m.max_new_tokens;
    parallel_for(c.instances.size(), m.parallel, [&](std::size_t i) {
      const Instance& inst = c.instances[i];
      if (!syn.sets[i]) return;
      if (auto it = done.find(inst.id); it != done.end()) {
        results[i] = it->second;
        return;
      }
      try {
        const SensitivityEstimate est =
            estimate_sensitivity(inst, *syn.sets[i], c.tmpl, c.exemplars, throttled, m.strategy, opts);
        json preds = json::array();
        for (const auto& p : est.predictions) preds.push_back(prediction_json(p));
        json line = {{"record", json::parse(sensitivity_record_to_json(est.record))}, {"predictions", std::move(preds)}};
        std::lock_guard lock(mu);
        log << line.dump() << '\n';
        log.flush();
        results[i] = std::move(line);
      } catch (const Error& e) {
        std::lock_guard lock(mu);
        failures.push_back(inst.id + ": " + e.what());
      }
    });
    log.close();

    if (failures.size() > static_cast<std::size_t>(m.failure_tolerance)) {
      out.exit_code = 1;
      out.summary += c.dataset_name + " seed " + std::to_string(seed) + ": " + std::to_string(failures.size()) +
                     " instance failures exceed the tolerance of " + std::to_string(m.failure_tolerance) +
                     "; no report written\n" + failure_block(failures);
      return out;
    }

    std::vector<SensitivityRecord> records;
    std::string predictions;
    for (const auto& r : results) {
      if (!r) continue;
      records.push_back(sensitivity_record_from_json(r->at("record").dump()));
      for (const auto& p : r->at("predictions")) predictions += p.dump() + "\n";
    }
    if (records.empty()) {
      out.exit_code = 1;
      out.summary += c.dataset_name + " seed " + std::to_string(seed) + ": no instance completed\n" + failure_block(failures);
      return out;
    }
    write_sensitivity_records(path, records, meta);
    fs::path pred_path = path;
    pred_path.replace_extension(".predictions.jsonl");
    write_file(pred_path, predictions);
    fs::remove(partial);
    out.artifacts.push_back(path);
    out.artifacts.push_back(pred_path);
    if (!failures.empty()) out.summary += failure_block(failures);
    sets.push_back({meta, std::move(records)});
  }

  const RunReport report = build_report(sets);
  for (const auto& p : write_all_reports(report, m.out_dir / "reports")) out.artifacts.push_back(p);
  for (const auto& row : report.rows) out.summary += row_line(row);
  return out;
}

CommandOutcome cmd_decode(const RunManifest& manifest) {
  const Context c = load_context(manifest);
  const RunManifest& m = c.m;
  CommandOutcome out;
  if (m.n_variants < 2) {
    out.exit_code = 2;
    out.summary = "decode needs n_variants >= 2 to estimate candidate dispersion\n";
    return out;
  }
  auto backend = backend_for(c);
  ThrottledBackend throttled(*backend, m.parallel, retry_policy(m));
  const std::string backend_id = backend->id();
  const fs::path dir = m.out_dir / "decode" / path_safe(c.dataset_name) / path_safe(c.tmpl.id) / path_safe(backend_id);

  std::vector<SweepInstance> pooled;
  for (std::uint64_t seed : m.seeds) {
    const Synthesized syn = synthesize_all(c, seed);
    std::vector<std::optional<SweepInstance>> prepared(c.instances.size());
    std::vector<std::string> failures = syn.skipped;
    std::mutex mu;
    parallel_for(c.instances.size(), m.parallel, [&](std::size_t i) {
      const Instance& inst = c.instances[i];
      if (!syn.sets[i]) return;
      try {
        const auto candidates = scoring_candidates(inst, m.candidates);
        if (candidates.empty()) throw EstimationError("no scoring candidates for '" + inst.id + "'");
        std::vector<std::string> prompts{render(c.tmpl, inst, c.exemplars).text};
        for (const Instance& v : syn.sets[i]->variants) prompts.push_back(render(c.tmpl, v, c.exemplars).text);
        throttled.observe_instance(prompts.front(), std::vector<std::string>(prompts.begin() + 1, prompts.end()),
                                   inst.gold_label(), inst.options.size());
        std::vector<CandidateScores> scores;
        for (const std::string& prompt : prompts) {
          CompletionRequest req;
          req.prompt = prompt;
          req.max_new_tokens = m.max_new_tokens.value_or(c.tmpl.max_new_tokens);
          req.candidate_set = candidates;
          req.seed = mix_seed(seed, fnv1a64(prompt));
          const CompletionResult res = throttled.complete(req);
          if (!res.candidate_logprobs) throw ScoringUnsupported("backend '" + backend_id + "' returned no candidate scores");
          scores.push_back(make_candidate_scores(candidates, *res.candidate_logprobs));
        }
        std::vector<std::vector<double>> synthetic;
        for (std::size_t j = 1; j < scores.size(); ++j) synthetic.push_back(scores[j].raw_logprobs);
        prepared[i] = SweepInstance{inst.id, scores.front(), candidate_dispersion(candidates, synthetic), inst.gold_label()};
      } catch (const Error& e) {
        std::lock_guard lock(mu);
        failures.push_back(inst.id + ": " + e.what());
      }
    });
    if (failures.size() > static_cast<std::size_t>(m.failure_tolerance)) {
      out.exit_code = 1;
      out.summary += c.dataset_name + " seed " + std::to_string(seed) + ": " + std::to_string(failures.size()) +
                     " instance failures exceed the tolerance\n" + failure_block(failures);
      return out;
    }
    std::vector<SweepInstance> instances;
    for (auto& p : prepared) {
      if (p) instances.push_back(std::move(*p));
    }
    const SweepResult sweep = alpha_sweep(instances, m.alpha_grid);
    const fs::path path = dir / ("seed-" + std::to_string(seed) + ".csv");
    write_file(path, sweep_to_csv(sweep));
    out.artifacts.push_back(path);
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s seed %llu: greedy=%.4f best sad=%.4f at alpha=%.2f over %zu instances\n",
                  c.dataset_name.c_str(), static_cast<unsigned long long>(seed), sweep.greedy_accuracy,
                  sweep.best_accuracy, sweep.best_alpha, instances.size());
    out.summary += buf;
    if (!failures.empty()) out.summary += failure_block(failures);
    pooled.insert(pooled.end(), instances.begin(), instances.end());
  }
  if (m.seeds.size() > 1) {
    const SweepResult sweep = alpha_sweep(pooled, m.alpha_grid);
    const fs::path path = dir / "pooled.csv";
    write_file(path, sweep_to_csv(sweep));
    out.artifacts.push_back(path);
    char buf[200];
    std::snprintf(buf, sizeof buf, "pooled: greedy=%.4f best sad=%.4f at alpha=%.2f\n", sweep.greedy_accuracy,
                  sweep.best_accuracy, sweep.best_alpha);
    out.summary += buf;
  }
  return out;
}

CommandOutcome cmd_saliency(const RunManifest& manifest) {
  const Context c = load_context(manifest);
  const RunManifest& m = c.m;
  CommandOutcome out;
  auto backend = backend_for(c);
  const bool from_backend = backend->supports_gradients();
  if (!from_backend && m.gradients.empty()) {
    out.exit_code = 2;
    out.summary = "backend '" + backend->id() +
                  "' exposes no input gradients; export them with the gradient-bridge tool and point the manifest's "
                  "\"gradients\" field at the resulting JSONL file\n";
    return out;
  }

  std::vector<std::string> failures;
  std::map<std::string, const InterchangeRecord*> by_id;
  InterchangeFile file;
  if (!from_backend) {
    file = load_interchange(m.gradients);
    for (const auto& r : file.rejected) {
      failures.push_back(m.gradients.filename().string() + ":" + std::to_string(r.line) + ": " + r.reason);
    }
    for (const auto& r : file.records) by_id.emplace(r.instance_id, &r);
  }

  std::vector<std::optional<SegmentedSaliency>> segs(c.instances.size());
  std::mutex mu;
  parallel_for(c.instances.size(), m.parallel, [&](std::size_t i) {
    const Instance& inst = c.instances[i];
    try {
      const RenderedPrompt rendered = render(c.tmpl, inst, c.exemplars);
      GradientMap gmap;
      if (from_backend) {
        const auto candidates = scoring_candidates(inst, m.candidates);
        std::string target;
        CompletionRequest req;
        req.prompt = rendered.text;
        req.max_new_tokens = m.max_new_tokens.value_or(c.tmpl.max_new_tokens);
        if (!candidates.empty()) {
          req.candidate_set = candidates;
          const CompletionResult res = backend->complete(req);
          if (!res.candidate_logprobs) throw ScoringUnsupported("no candidate scores for the saliency target");
          target = candidates[greedy_index(make_candidate_scores(candidates, *res.candidate_logprobs))];
        } else {
          const CanonicalLabel label = extract_answer(backend->complete(req).text, c.tmpl, inst);
          if (!label.compliant()) throw EstimationError("greedy output has no answer to explain");
          target = label.value();
        }
        gmap = backend->gradients(rendered.text, target);
      } else {
        auto it = by_id.find(inst.id);
        if (it == by_id.end()) throw EstimationError("no gradient record in " + m.gradients.filename().string());
        gmap = it->second->map;
      }
      SegmentedSaliency seg;
      try {
        seg = segmented_saliency(gmap, rendered, inst.id);
      } catch (const InvalidArgument& e) {
        throw EstimationError(std::string("offset mismatch: ") + e.what());
      }
      segs[i] = std::move(seg);
    } catch (const Error& e) {
      std::lock_guard lock(mu);
      failures.push_back(inst.id + ": " + e.what());
    }
  });
  std::sort(failures.begin(), failures.end());

  std::vector<SegmentedSaliency> records;
  for (auto& s : segs) {
    if (s) records.push_back(std::move(*s));
  }
  if (failures.size() > static_cast<std::size_t>(m.failure_tolerance) || records.empty()) {
    out.exit_code = 1;
    out.summary = std::to_string(failures.size()) + " instances rejected\n" + failure_block(failures);
    return out;
  }

  // Pair with sensitivity records of the same dataset, template and backend.
  std::vector<SensitivityRecord> sensitivities;
  const std::string source = from_backend ? backend->id() : "interchange";
  const fs::path record_root = m.out_dir / "records" / path_safe(c.dataset_name) / path_safe(c.tmpl.id);
  if (fs::is_directory(record_root)) {
    std::vector<fs::path> candidates;
    for (const auto& e : fs::recursive_directory_iterator(record_root)) {
      if (e.path().filename() == "seed-" + std::to_string(m.seeds.front()) + ".jsonl") candidates.push_back(e.path());
    }
    std::sort(candidates.begin(), candidates.end());
    for (const auto& p : candidates) {
      auto [recs, meta] = read_sensitivity_records(p);
      if (!from_backend || meta.backend == source) {
        sensitivities = std::move(recs);
        break;
      }
    }
  }
  if (!sensitivities.empty()) {
    std::set<std::string> have;
    for (const auto& r : sensitivities) have.insert(r.id);
    for (const auto& r : records) {
      if (!have.count(r.instance_id)) {
        sensitivities.clear();
        out.summary += "sensitivity records do not cover every instance; sensitivity column left empty\n";
        break;
      }
    }
  }

  StatsRow row{c.dataset_name, c.tmpl.id, segment_stats(records, sensitivities), std::nullopt};
  const bool has_target = std::any_of(records.begin(), records.end(),
                                      [](const SegmentedSaliency& s) { return s.means.count(SegmentTag::target) > 0; });
  if (has_target) row.target = target_token_stats(records);

  const fs::path dir = m.out_dir / "saliency" / path_safe(c.dataset_name) / path_safe(c.tmpl.id) / path_safe(source);
  std::string lines;
  for (const auto& r : records) lines += segmented_saliency_to_json(r) + "\n";
  write_file(dir / "saliency.jsonl", lines);
  write_file(dir / "stats.csv", segment_stats_csv({row}));
  out.artifacts = {dir / "saliency.jsonl", dir / "stats.csv"};

  const SegmentStats& s = row.stats;
  out.summary += c.dataset_name + " " + c.tmpl.id + ": input=" + format2(s.means.at(SegmentTag::input)) +
                 " prompt=" + format2(s.means.at(SegmentTag::prompt)) + " delta=" + format2(s.delta) +
                 " ratio=" + (s.ratio ? format2(*s.ratio) : std::string("NA")) + " over " +
                 std::to_string(records.size()) + " instances\n";
  if (!failures.empty()) out.summary += failure_block(failures);
  return out;
}

CommandOutcome cmd_report(const RunManifest& manifest) {
  manifest.validate();
  CommandOutcome out;
  const RunReport report = aggregate_run(manifest.out_dir / "records");
  out.artifacts = write_all_reports(report, manifest.out_dir / "reports");
  for (const auto& row : report.rows) out.summary += row_line(row);
  out.summary += correlation_line(report.correlation);
  return out;
}

}  // namespace promptsens
