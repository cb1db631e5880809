#include "promptsens/core/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "promptsens/error.hpp"

namespace promptsens {

using nlohmann::json;

std::string to_string(SubsetStrategy strategy) {
  return strategy == SubsetStrategy::span ? "span" : "scatter";
}

SubsetStrategy subset_strategy_from_string(const std::string& name) {
  if (name == "span") return SubsetStrategy::span;
  if (name == "scatter") return SubsetStrategy::scatter;
  throw InvalidArgument("unknown perturbation strategy '" + name + "' (expected span|scatter)");
}

void RunManifest::validate() const {
  if (seeds.empty()) throw InvalidArgument("manifest: seeds must be non-empty");
  if (n_variants < 0) throw InvalidArgument("manifest: n_variants must be >= 0");
  if (strategy.requires_sensitivity() && n_variants < 2) {
    // candidate dispersion is a variance over variants
    throw InvalidArgument("manifest: strategy 'sad' needs n_variants >= 2");
  }
  static const std::set<std::string> kStrategies{"greedy", "top_k", "sad"};
  if (!kStrategies.count(strategy.name)) {
    throw InvalidArgument("manifest: unknown strategy '" + strategy.name + "'");
  }
  if (strategy.temperature < 0.0) throw InvalidArgument("manifest: temperature must be >= 0");
  if (strategy.name == "top_k" && (strategy.k < 1 || strategy.temperature <= 0.0)) {
    throw InvalidArgument("manifest: top_k needs k >= 1 and temperature > 0");
  }
  if (strategy.alpha < 0.0 || strategy.alpha > 1.0) throw InvalidArgument("manifest: alpha must be in [0,1]");
  if (perturbation.k < 1) throw InvalidArgument("manifest: perturbation.k must be >= 1");
  if (parallel < 1) throw InvalidArgument("manifest: parallel must be >= 1");
  if (failure_tolerance < 0) throw InvalidArgument("manifest: failure_tolerance must be >= 0");
  if (exemplar_count < 0) throw InvalidArgument("manifest: exemplar_count must be >= 0");
  for (std::size_t i = 0; i < alpha_grid.size(); ++i) {
    if (alpha_grid[i] <= 0.0 || alpha_grid[i] > 1.0) {
      throw InvalidArgument("manifest: alpha_grid values must lie in (0,1]");
    }
    if (i > 0 && alpha_grid[i] <= alpha_grid[i - 1]) {
      throw InvalidArgument("manifest: alpha_grid must be strictly increasing");
    }
  }
}

RunManifest manifest_from_json(const json& doc) {
  if (!doc.is_object()) throw InvalidArgument("manifest: expected a JSON object");
  static const std::set<std::string> kKeys{
      "dataset", "dataset_format", "template", "template_file", "exemplars", "exemplar_count",
      "instruction", "backend", "backend_config", "strategy", "n_variants", "seeds", "out_dir",
      "perturbation", "alpha_grid", "candidates", "gradients", "max_new_tokens", "parallel",
      "failure_tolerance", "retries", "backoff_ms"};
  for (const auto& [key, _] : doc.items()) {
    if (!kKeys.count(key)) throw InvalidArgument("manifest: unknown field '" + key + "'");
  }

  RunManifest m;
  try {
    if (doc.contains("dataset")) m.dataset = doc.at("dataset").get<std::string>();
    m.dataset_format = doc.value("dataset_format", m.dataset_format);
    m.template_id = doc.value("template", m.template_id);
    if (doc.contains("template_file")) m.template_file = doc.at("template_file").get<std::string>();
    if (doc.contains("exemplars")) m.exemplars = doc.at("exemplars").get<std::string>();
    m.exemplar_count = doc.value("exemplar_count", m.exemplar_count);
    m.instruction = doc.value("instruction", m.instruction);
    m.backend = doc.value("backend", m.backend);
    if (doc.contains("backend_config")) m.backend_config = doc.at("backend_config");
    if (doc.contains("strategy")) {
      const json& s = doc.at("strategy");
      m.strategy.name = s.value("name", m.strategy.name);
      m.strategy.temperature = s.value("temperature", m.strategy.temperature);
      m.strategy.k = s.value("k", m.strategy.k);
      m.strategy.alpha = s.value("alpha", m.strategy.alpha);
    }
    m.n_variants = doc.value("n_variants", m.n_variants);
    if (doc.contains("seeds")) m.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
    if (doc.contains("out_dir")) m.out_dir = doc.at("out_dir").get<std::string>();
    if (doc.contains("perturbation")) {
      const json& p = doc.at("perturbation");
      m.perturbation.k = p.value("k", m.perturbation.k);
      if (p.contains("strategy")) m.perturbation.strategy = subset_strategy_from_string(p.at("strategy"));
      m.perturbation.target_field = p.value("target_field", m.perturbation.target_field);
    }
    if (doc.contains("alpha_grid")) m.alpha_grid = doc.at("alpha_grid").get<std::vector<double>>();
    if (doc.contains("candidates")) m.candidates = doc.at("candidates").get<std::vector<std::string>>();
    if (doc.contains("gradients")) m.gradients = doc.at("gradients").get<std::string>();
    if (doc.contains("max_new_tokens")) m.max_new_tokens = doc.at("max_new_tokens").get<int>();
    m.parallel = doc.value("parallel", m.parallel);
    m.failure_tolerance = doc.value("failure_tolerance", m.failure_tolerance);
    m.retries = doc.value("retries", m.retries);
    m.backoff_ms = doc.value("backoff_ms", m.backoff_ms);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

json manifest_to_json(const RunManifest& m) {
  json doc;
  doc["dataset"] = m.dataset.string();
  doc["dataset_format"] = m.dataset_format;
  doc["template"] = m.template_id;
  if (!m.template_file.empty()) doc["template_file"] = m.template_file.string();
  if (!m.exemplars.empty()) doc["exemplars"] = m.exemplars.string();
  doc["exemplar_count"] = m.exemplar_count;
  if (!m.instruction.empty()) doc["instruction"] = m.instruction;
  doc["backend"] = m.backend;
  doc["backend_config"] = m.backend_config;
  doc["strategy"] = {{"name", m.strategy.name},
                     {"temperature", m.strategy.temperature},
                     {"k", m.strategy.k},
                     {"alpha", m.strategy.alpha}};
  doc["n_variants"] = m.n_variants;
  doc["seeds"] = m.seeds;
  doc["out_dir"] = m.out_dir.string();
  json pert = {{"k", m.perturbation.k}, {"strategy", to_string(m.perturbation.strategy)}};
  if (!m.perturbation.target_field.empty()) pert["target_field"] = m.perturbation.target_field;
  doc["perturbation"] = pert;
  doc["alpha_grid"] = m.alpha_grid;
  if (!m.candidates.empty()) doc["candidates"] = m.candidates;
  if (!m.gradients.empty()) doc["gradients"] = m.gradients.string();
  if (m.max_new_tokens) doc["max_new_tokens"] = *m.max_new_tokens;
  doc["parallel"] = m.parallel;
  doc["failure_tolerance"] = m.failure_tolerance;
  doc["retries"] = m.retries;
  doc["backoff_ms"] = m.backoff_ms;
  return doc;
}

RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  RunManifest m = manifest_from_json(doc);
  // Relative paths inside a manifest resolve against the manifest's directory.
  const auto base = path.parent_path();
  auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = (base / p).lexically_normal();
  };
  resolve(m.dataset);
  resolve(m.template_file);
  resolve(m.exemplars);
  resolve(m.gradients);
  resolve(m.out_dir);
  return m;
}

}  // namespace promptsens
