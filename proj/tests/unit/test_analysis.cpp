#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "json.hpp"
#include "promptsens/analysis/analysis.hpp"
#include "promptsens/error.hpp"

#if defined(PROMPTSENS_HAVE_BOOST_MATH)
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#endif

using namespace promptsens;

namespace {

double direct_r(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

// Two-sided tail of Student's t by Simpson's rule on the density.
double simpson_t_tail(double t, double df) {
  const double c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PI);
  auto pdf = [&](double x) { return c * std::pow(1 + x * x / df, -(df + 1) / 2); };
  const int n = 200000;
  const double a = 0.0, b = std::abs(t), h = (b - a) / n;
  double s = pdf(a) + pdf(b);
  for (int i = 1; i < n; ++i) s += pdf(a + i * h) * (i % 2 ? 4 : 2);
  return 1.0 - 2.0 * s * h / 3.0;
}

SensitivityRecord rec(const std::string& id, std::vector<const char*> labels, const char* gold) {
  std::vector<CanonicalLabel> ls;
  for (const char* l : labels) ls.emplace_back(l);
  return make_sensitivity_record(id, ls, CanonicalLabel(gold));
}

RecordSet set_of(std::string tmpl, std::string strategy, std::uint64_t seed, std::vector<SensitivityRecord> rs) {
  return RecordSet{RecordMeta{"cola", std::move(tmpl), std::move(strategy), "mock:constant", seed}, std::move(rs)};
}

}  // namespace

TEST_CASE("pearson r matches the direct formula") {
  const std::vector<double> x{0.1, 0.25, 0.3, 0.42, 0.5, 0.61, 0.7};
  const std::vector<double> y{0.9, 0.82, 0.85, 0.7, 0.66, 0.5, 0.48};
  const auto pr = pearson(x, y);
  CHECK(pr.n == 7);
  CHECK(pr.r == doctest::Approx(direct_r(x, y)).epsilon(1e-12));
  const double t = pr.r * std::sqrt(5.0 / (1 - pr.r * pr.r));
  CHECK(pr.p == doctest::Approx(simpson_t_tail(t, 5.0)).epsilon(1e-7));
  CHECK(pearson(x, x).r == doctest::Approx(1.0));
  CHECK(pearson(x, x).p == std::numeric_limits<double>::denorm_min());

  CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}), EstimationError);
  CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2, 3}), EstimationError);
  CHECK_THROWS_AS(pearson(x, std::vector<double>(7, 0.5)), EstimationError);
}

TEST_CASE("student t tail against numerical integration") {
  for (double df : {1.0, 3.0, 8.0, 30.0}) {
    for (double t : {0.3, 1.0, 2.5, 6.0}) {
      CAPTURE(df);
      CAPTURE(t);
      CHECK(student_t_two_sided_p(t, df) == doctest::Approx(simpson_t_tail(t, df)).epsilon(1e-7));
      CHECK(student_t_two_sided_p(-t, df) == student_t_two_sided_p(t, df));
    }
  }
  CHECK(student_t_two_sided_p(0.0, 4.0) == doctest::Approx(1.0));
}

TEST_CASE("incomplete beta identities") {
  CHECK(regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  // I_x(1, b) = 1 - (1-x)^b and I_x(a, 1) = x^a.
  CHECK(regularized_incomplete_beta(1.0, 4.0, 0.3) == doctest::Approx(1 - std::pow(0.7, 4)).epsilon(1e-13));
  CHECK(regularized_incomplete_beta(2.5, 1.0, 0.6) == doctest::Approx(std::pow(0.6, 2.5)).epsilon(1e-13));
  CHECK(regularized_incomplete_beta(3.0, 5.0, 0.4) + regularized_incomplete_beta(5.0, 3.0, 0.6) ==
        doctest::Approx(1.0).epsilon(1e-13));
}

#if defined(PROMPTSENS_HAVE_BOOST_MATH)
TEST_CASE("incomplete beta and t tail against boost") {
  for (double a : {0.5, 1.5, 4.0, 12.5}) {
    for (double b : {0.5, 2.0, 7.0}) {
      for (double x : {0.01, 0.2, 0.5, 0.77, 0.99}) {
        CHECK(regularized_incomplete_beta(a, b, x) == doctest::Approx(boost::math::ibeta(a, b, x)).epsilon(1e-12));
      }
    }
  }
  for (double df : {1.0, 2.0, 13.0, 100.0}) {
    const boost::math::students_t dist(df);
    for (double t : {0.1, 1.7, 4.2, 20.0}) {
      const double expect = 2 * boost::math::cdf(boost::math::complement(dist, t));
      CHECK(student_t_two_sided_p(t, df) == doctest::Approx(expect).epsilon(1e-10));
    }
  }
}
#endif

TEST_CASE("record summaries") {
  const std::vector<SensitivityRecord> rs{rec("a", {"1", "1", "0"}, "1"), rec("b", {"NONCOMPLIANT", "0", "0"}, "0"),
                                          rec("c", {"0", "0", "0"}, "1")};
  CHECK(accuracy(rs) == doctest::Approx(1.0 / 3.0));
  CHECK(compliance_rate(rs) == doctest::Approx(2.0 / 3.0));
  CHECK(mean_sensitivity(rs) == doctest::Approx((1.0 / 3.0 + 1.0 / 3.0 + 0.0) / 3.0));
  CHECK_THROWS_AS(accuracy({}), EstimationError);
}

TEST_CASE("reports pool seeds and keep per-seed rows") {
  const std::vector<RecordSet> sets{
      set_of("base_b", "greedy", 105, {rec("a", {"1", "1", "0"}, "1"), rec("b", {"0", "0", "0"}, "1")}),
      set_of("base_b", "greedy", 2266, {rec("a", {"1", "1", "1"}, "1"), rec("b", {"1", "0", "1"}, "1")}),
      set_of("cfp", "greedy", 2266, {rec("a", {"0", "1", "1"}, "1")}),
  };
  const RunReport r = build_report(sets);
  REQUIRE(r.rows.size() == 4);
  CHECK(r.rows[0].strategy == "greedy@mock:constant");
  CHECK(r.rows[0].n == 4);
  CHECK(r.rows[0].accuracy == 0.75);
  CHECK(r.rows[1].strategy == "greedy@mock:constant/seed=105");
  CHECK(r.rows[2].strategy == "greedy@mock:constant/seed=2266");
  CHECK(r.rows[3].template_id == "cfp");
  CHECK(r.correlation.points == 2);
  CHECK_FALSE(r.correlation.r.has_value());
  CHECK(r.correlation.note.find("fewer than 3") != std::string::npos);

  std::vector<RecordSet> reversed(sets.rbegin(), sets.rend());
  CHECK(build_report(reversed) == r);
  std::vector<RecordSet> edited = sets;
  edited[2].records[0] = rec("a", {"1", "1", "1"}, "1");
  CHECK(build_report(edited).run_id != r.run_id);
  CHECK_THROWS_AS(build_report({}), EstimationError);
}

TEST_CASE("report formats") {
  const std::vector<RecordSet> sets{
      set_of("base_b", "greedy", 1, {rec("a", {"1", "1", "0"}, "1"), rec("b", {"0", "0", "0"}, "1")}),
      set_of("cfp", "greedy", 1, {rec("a", {"0", "1", "2"}, "1"), rec("b", {"1", "1", "1"}, "1")}),
      set_of("zero_b", "greedy", 1, {rec("a", {"1", "1", "1"}, "1"), rec("b", {"1", "1", "1"}, "1")}),
  };
  const RunReport r = build_report(sets);
  REQUIRE(r.correlation.r.has_value());
  CHECK(*r.correlation.r == doctest::Approx(direct_r({1.0 / 6.0, 1.0 / 3.0, 0.0}, {0.5, 0.5, 1.0})));

  const std::string csv = render_report(r, ReportFormat::csv);
  CHECK(csv ==
        "dataset,template,strategy,n,accuracy,sensitivity,compliance\n"
        "cola,base_b,greedy@mock:constant,2,0.5,0.16666666666666669,1\n"
        "cola,cfp,greedy@mock:constant,2,0.5,0.33333333333333337,1\n"
        "cola,zero_b,greedy@mock:constant,2,1,0,1\n");
  CHECK(report_from_json(render_report(r, ReportFormat::json)) == r);
  const std::string svg = render_report(r, ReportFormat::svg_scatter);
  std::size_t circles = 0;
  for (std::size_t at = svg.find("<circle"); at != std::string::npos; at = svg.find("<circle", at + 1)) ++circles;
  CHECK(circles == 3);
  CHECK_THROWS_AS(report_from_json("{\"rows\":[]}"), InvalidArgument);

  const auto dir = std::filesystem::temp_directory_path() / "promptsens-unit-reports";
  std::filesystem::remove_all(dir);
  const auto path = write_report(r, ReportFormat::csv, dir);
  CHECK(path.filename() == "report-" + r.run_id + ".csv");
  CHECK(std::filesystem::exists(path));
}

TEST_CASE("aggregate a run directory") {
  const auto dir = std::filesystem::temp_directory_path() / "promptsens-unit-run";
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(aggregate_run(dir), ParseError);
  std::filesystem::create_directories(dir);
  CHECK_THROWS_AS(aggregate_run(dir), EstimationError);
  const std::vector<RecordSet> sets{
      set_of("base_b", "greedy", 1, {rec("a", {"1", "1", "0"}, "1")}),
      set_of("base_b", "greedy", 2, {rec("a", {"0", "1", "0"}, "1")}),
  };
  write_sensitivity_records(dir / "x" / "seed-1.jsonl", sets[0].records, sets[0].meta);
  write_sensitivity_records(dir / "x" / "seed-2.jsonl", sets[1].records, sets[1].meta);
  CHECK(aggregate_run(dir) == build_report(sets));
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0 / 3.0) == "0.3333333333333333");
}
