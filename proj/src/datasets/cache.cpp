#include "promptsens/datasets/cache.hpp"

#include <fstream>

#include "promptsens/error.hpp"

namespace promptsens {

using nlohmann::json;

namespace {

json key_to_json(const PerturbationKey& key) {
  return {{"instance_id", key.instance_id},
          {"seed", key.seed},
          {"n", key.n},
          {"k", key.k},
          {"strategy", to_string(key.strategy)}};
}

PerturbationKey key_from_json(const json& j) {
  PerturbationKey key;
  key.instance_id = j.at("instance_id").get<std::string>();
  key.seed = j.at("seed").get<std::uint64_t>();
  key.n = j.at("n").get<int>();
  key.k = j.at("k").get<int>();
  key.strategy = subset_strategy_from_string(j.at("strategy").get<std::string>());
  return key;
}

}  // namespace

json perturbation_to_json(const PerturbationSet& set, const PerturbationKey& key) {
  json variants = json::array();
  for (const Instance& v : set.variants) variants.push_back(v.field(set.target_field));
  return {{"key", key_to_json(key)},
          {"target_field", set.target_field},
          {"original", set.original.field(set.target_field)},
          {"variants", variants},
          {"subsets", set.subsets}};
}

std::optional<PerturbationSet> perturbation_from_json(const json& record, const Instance& original) {
  const std::string field = record.at("target_field").get<std::string>();
  if (!original.has_field(field) || original.field(field) != record.at("original").get<std::string>()) {
    return std::nullopt;
  }
  PerturbationSet set;
  set.original = original;
  set.target_field = field;
  set.subsets = record.at("subsets").get<std::vector<std::vector<std::size_t>>>();
  const auto texts = record.at("variants").get<std::vector<std::string>>();
  if (texts.size() != set.subsets.size()) return std::nullopt;
  for (std::size_t j = 0; j < texts.size(); ++j) {
    Instance v = original;
    v.id = original.id + "#" + std::to_string(j);
    v.fields[field] = texts[j];
    set.variants.push_back(std::move(v));
  }
  return set;
}

PerturbationCache PerturbationCache::load(const std::filesystem::path& path) {
  PerturbationCache cache;
  std::ifstream in(path);
  if (!in) return cache;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.empty()) continue;
    try {
      json rec = json::parse(text);
      PerturbationKey key = key_from_json(rec.at("key"));
      if (!cache.records_.count(key)) cache.order_.push_back(key);
      cache.records_[key] = std::move(rec);
    } catch (const std::exception& e) {
      throw ParseError(path.string(), line, std::string("corrupt perturbation cache: ") + e.what());
    }
  }
  return cache;
}

const json* PerturbationCache::find(const PerturbationKey& key) const {
  auto it = records_.find(key);
  return it == records_.end() ? nullptr : &it->second;
}

void PerturbationCache::put(const PerturbationSet& set, const PerturbationKey& key) {
  if (!records_.count(key)) order_.push_back(key);
  records_[key] = perturbation_to_json(set, key);
}

void PerturbationCache::save(const std::filesystem::path& path) const {
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    for (const PerturbationKey& key : order_) out << records_.at(key).dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

std::filesystem::path perturbation_cache_path(const std::filesystem::path& out_dir, std::uint64_t seed,
                                              int n, int k, SubsetStrategy strategy,
                                              const std::string& target_field) {
  return out_dir / "cache" /
         ("perturb-s" + std::to_string(seed) + "-n" + std::to_string(n) + "-k" + std::to_string(k) + "-" +
          to_string(strategy) + "-" + target_field + ".jsonl");
}

}  // namespace promptsens
