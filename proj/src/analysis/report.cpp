#include <charconv>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "promptsens/analysis/analysis.hpp"
#include "promptsens/error.hpp"

namespace promptsens {

using nlohmann::json;

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_csv(const RunReport& report) {
  std::string out = "dataset,template,strategy,n,accuracy,sensitivity,compliance\n";
  for (const auto& r : report.rows) {
    out += csv_escape(r.dataset) + "," + csv_escape(r.template_id) + "," + csv_escape(r.strategy) + "," +
           std::to_string(r.n) + "," + format_double(r.accuracy) + "," + format_double(r.sensitivity) + "," +
           format_double(r.compliance) + "\n";
  }
  return out;
}

json to_json(const RunReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"dataset", r.dataset},
                    {"template", r.template_id},
                    {"strategy", r.strategy},
                    {"n", r.n},
                    {"accuracy", r.accuracy},
                    {"sensitivity", r.sensitivity},
                    {"compliance", r.compliance}});
  }
  const Correlation& c = report.correlation;
  json corr = {{"points", c.points},
               {"r", c.r ? json(*c.r) : json(nullptr)},
               {"p", c.p ? json(*c.p) : json(nullptr)},
               {"note", c.note}};
  return {{"run_id", report.run_id}, {"rows", std::move(rows)}, {"correlation", std::move(corr)}};
}

std::string render_svg(const RunReport& report) {
  constexpr double kW = 480, kH = 360, kPad = 48;
  const double pw = kW - 2 * kPad, ph = kH - 2 * kPad;
  char buf[512];
  std::string out;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                kW, kH, kW, kH);
  out += buf;
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<g stroke=\"black\"><line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\"/>"
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\"/></g>\n",
                kPad, kH - kPad, kW - kPad, kH - kPad, kPad, kPad, kPad, kH - kPad);
  out += buf;
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" text-anchor=\"middle\">%.2f</text>"
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" text-anchor=\"end\">%.2f</text>\n",
                  kPad + v * pw, kH - kPad + 14, v, kPad - 4, kH - kPad - v * ph + 3, v);
    out += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\">sensitivity</text>\n"
                "<text x=\"14\" y=\"%.1f\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 %.1f)\">"
                "accuracy</text>\n",
                kW / 2, kH - 10, kH / 2, kH / 2);
  out += buf;
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "<circle class=\"mark\" cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"steelblue\">",
                  kPad + r.sensitivity * pw, kH - kPad - r.accuracy * ph);
    out += buf;
    out += "<title>" + xml_escape(r.dataset + " " + r.template_id + " " + r.strategy) + "</title></circle>\n";
  }
  if (report.correlation.r) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">r = %.4f</text>\n",
                  kW - kPad, kPad - 8, *report.correlation.r);
    out += buf;
  }
  out += "</svg>\n";
  return out;
}

}  // namespace

std::string render_report(const RunReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::csv: return render_csv(report);
    case ReportFormat::json: return to_json(report).dump(2) + "\n";
    case ReportFormat::svg_scatter: return render_svg(report);
  }
  throw InvalidArgument("unknown report format");
}

RunReport report_from_json(const std::string& text) {
  RunReport report;
  try {
    const json j = json::parse(text);
    report.run_id = j.at("run_id").get<std::string>();
    for (const auto& r : j.at("rows")) {
      report.rows.push_back({r.at("dataset").get<std::string>(), r.at("template").get<std::string>(),
                             r.at("strategy").get<std::string>(), r.at("n").get<std::size_t>(),
                             r.at("accuracy").get<double>(), r.at("sensitivity").get<double>(),
                             r.at("compliance").get<double>()});
    }
    const json& c = j.at("correlation");
    report.correlation.points = c.at("points").get<std::size_t>();
    if (!c.at("r").is_null()) report.correlation.r = c["r"].get<double>();
    if (!c.at("p").is_null()) report.correlation.p = c["p"].get<double>();
    report.correlation.note = c.at("note").get<std::string>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("report JSON: ") + e.what());
  }
  return report;
}

std::filesystem::path write_report(const RunReport& report, ReportFormat format, const std::filesystem::path& dir) {
  const char* ext = format == ReportFormat::csv ? "csv" : format == ReportFormat::json ? "json" : "svg";
  std::filesystem::create_directories(dir);
  const auto path = dir / ("report-" + report.run_id + "." + ext);
  const std::string tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp);
    out << render_report(report, format);
    if (!out) throw Error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
  return path;
}

}  // namespace promptsens
