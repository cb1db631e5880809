#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "promptsens/analysis/stats.hpp"
#include "promptsens/sensitivity/sensitivity.hpp"

namespace promptsens {

// Fraction of records whose original prediction is correct. Throws
// EstimationError on empty input; likewise below.
double accuracy(const std::vector<SensitivityRecord>& records);
// Fraction of original predictions that are not NONCOMPLIANT.
double compliance_rate(const std::vector<SensitivityRecord>& records);
double mean_sensitivity(const std::vector<SensitivityRecord>& records);

struct ReportRow {
  std::string dataset;
  std::string template_id;
  // "<strategy>@<backend>", plus "/seed=<n>" on per-seed rows.
  std::string strategy;
  std::size_t n = 0;
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double compliance = 0.0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct Correlation {
  std::optional<double> r;
  std::optional<double> p;
  std::size_t points = 0;
  std::string note;  // why r is absent

  friend bool operator==(const Correlation&, const Correlation&) = default;
};

struct RunReport {
  std::string run_id;
  std::vector<ReportRow> rows;  // sorted by (dataset, template, strategy)
  Correlation correlation;      // over pooled rows

  friend bool operator==(const RunReport&, const RunReport&) = default;
};

struct RecordSet {
  RecordMeta meta;
  std::vector<SensitivityRecord> records;
};

/// Pools record sets by (dataset, template, strategy, backend); when a pool
/// has several seeds, per-seed rows are added next to the pooled row. The
/// correlation uses one (sensitivity, accuracy) point per pooled row.
RunReport build_report(const std::vector<RecordSet>& sets);

// Loads every "*.jsonl" record file (with its .meta.json) under `run_dir`,
// in path order. Throws ParseError on corrupt files, EstimationError when
// none are found.
RunReport aggregate_run(const std::filesystem::path& run_dir);

enum class ReportFormat { csv, json, svg_scatter };

std::string render_report(const RunReport& report, ReportFormat format);
RunReport report_from_json(const std::string& text);

// Writes <dir>/report-<run_id>.<ext> and returns its path.
std::filesystem::path write_report(const RunReport& report, ReportFormat format, const std::filesystem::path& dir);

// Shortest text that parses back to the same double.
std::string format_double(double value);

}  // namespace promptsens
