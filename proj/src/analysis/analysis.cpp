#include "promptsens/analysis/analysis.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "promptsens/core/hash.hpp"
#include "promptsens/error.hpp"

namespace promptsens {

namespace {

void require_records(const std::vector<SensitivityRecord>& records, const char* what) {
  if (records.empty()) throw EstimationError(std::string(what) + " of an empty record list");
}

ReportRow make_row(const RecordMeta& meta, std::string strategy, const std::vector<SensitivityRecord>& records) {
  ReportRow row;
  row.dataset = meta.dataset;
  row.template_id = meta.template_id;
  row.strategy = std::move(strategy);
  row.n = records.size();
  row.accuracy = accuracy(records);
  row.sensitivity = mean_sensitivity(records);
  row.compliance = compliance_rate(records);
  return row;
}

}  // namespace

double accuracy(const std::vector<SensitivityRecord>& records) {
  require_records(records, "accuracy");
  std::size_t hits = 0;
  for (const auto& r : records) hits += r.correct;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double compliance_rate(const std::vector<SensitivityRecord>& records) {
  require_records(records, "compliance rate");
  std::size_t ok = 0;
  for (const auto& r : records) ok += r.original().compliant();
  return static_cast<double>(ok) / static_cast<double>(records.size());
}

double mean_sensitivity(const std::vector<SensitivityRecord>& records) {
  require_records(records, "mean sensitivity");
  double sum = 0.0;
  for (const auto& r : records) sum += r.s;
  return sum / static_cast<double>(records.size());
}

RunReport build_report(const std::vector<RecordSet>& sets) {
  if (sets.empty()) throw EstimationError("report: no record sets");
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  struct Pool {
    RecordMeta meta;
    std::vector<SensitivityRecord> all;
    std::map<std::uint64_t, std::vector<SensitivityRecord>> by_seed;
  };
  std::map<Key, Pool> pools;
  std::vector<const RecordSet*> ordered;
  for (const auto& s : sets) ordered.push_back(&s);
  std::stable_sort(ordered.begin(), ordered.end(), [](const RecordSet* a, const RecordSet* b) {
    return std::tie(a->meta.dataset, a->meta.template_id, a->meta.strategy, a->meta.backend, a->meta.seed) <
           std::tie(b->meta.dataset, b->meta.template_id, b->meta.strategy, b->meta.backend, b->meta.seed);
  });

  std::uint64_t h = fnv1a64("");
  for (const RecordSet* s : ordered) {
    const RecordMeta& m = s->meta;
    Pool& pool = pools[{m.dataset, m.template_id, m.strategy, m.backend}];
    pool.meta = m;
    pool.all.insert(pool.all.end(), s->records.begin(), s->records.end());
    auto& seeded = pool.by_seed[m.seed];
    seeded.insert(seeded.end(), s->records.begin(), s->records.end());
    h = fnv1a64(m.dataset + '\x1f' + m.template_id + '\x1f' + m.strategy + '\x1f' + m.backend + '\x1f' +
                    std::to_string(m.seed) + '\x1e',
                h);
    for (const auto& r : s->records) h = fnv1a64(sensitivity_record_to_json(r) + "\n", h);
  }

  RunReport report;
  report.run_id = hex64(h);
  std::vector<double> xs, ys;
  for (const auto& [key, pool] : pools) {
    const std::string strategy = pool.meta.strategy + "@" + pool.meta.backend;
    report.rows.push_back(make_row(pool.meta, strategy, pool.all));
    xs.push_back(report.rows.back().sensitivity);
    ys.push_back(report.rows.back().accuracy);
    if (pool.by_seed.size() > 1) {
      for (const auto& [seed, records] : pool.by_seed) {
        report.rows.push_back(make_row(pool.meta, strategy + "/seed=" + std::to_string(seed), records));
      }
    }
  }
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const ReportRow& a, const ReportRow& b) {
    return std::tie(a.dataset, a.template_id, a.strategy) < std::tie(b.dataset, b.template_id, b.strategy);
  });

  report.correlation.points = xs.size();
  if (xs.size() < 3) {
    report.correlation.note = "not applicable: fewer than 3 rows";
  } else {
    try {
      const PearsonResult pr = pearson(xs, ys);
      report.correlation.r = pr.r;
      report.correlation.p = pr.p;
    } catch (const EstimationError&) {
      report.correlation.note = "not applicable: constant accuracy or sensitivity";
    }
  }
  return report;
}

RunReport aggregate_run(const std::filesystem::path& run_dir) {
  if (!std::filesystem::is_directory(run_dir)) throw ParseError(run_dir.string(), 0, "run directory not found");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".jsonl") continue;
    if (!std::filesystem::exists(entry.path().string() + ".meta.json")) continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw EstimationError("no sensitivity records under " + run_dir.string());
  std::vector<RecordSet> sets;
  for (const auto& f : files) {
    auto [records, meta] = read_sensitivity_records(f);
    sets.push_back({std::move(meta), std::move(records)});
  }
  return build_report(sets);
}

}  // namespace promptsens
