#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "promptsens/backends/interchange.hpp"
#include "promptsens/cli/commands.hpp"
#include "promptsens/datasets/dataset.hpp"
#include "promptsens/error.hpp"
#include "promptsens/prompts/prompts.hpp"
#include "promptsens/saliency/saliency.hpp"
#include "promptsens/sensitivity/sensitivity.hpp"

using namespace promptsens;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("promptsens-unit-cli-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunManifest sample_manifest(const fs::path& out) {
  RunManifest m;
  m.dataset = fs::path(PROMPTSENS_TEST_DATA) / "examples" / "cola_sample.jsonl";
  m.dataset_format = "cola";
  m.backend_config = {{"kind", "constant"}, {"text", " 1"}};
  m.n_variants = 3;
  m.seeds = {2266};
  m.out_dir = out;
  m.parallel = 2;
  m.retries = 0;
  return m;
}

bool mentions(const CommandOutcome& o, const std::string& suffix) {
  for (const auto& p : o.artifacts) {
    if (p.string().find(suffix) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("path components and overrides") {
  CHECK(path_safe("greedy@mock:instability:0.20") == "greedy@mock_instability_0.20");
  CHECK(path_safe("a/b c") == "a_b_c");
  CHECK(path_safe("") == "_");

  RunManifest m = sample_manifest("out");
  m.template_file = "custom.json";
  ManifestOverrides o;
  o.template_id = "cfp";
  o.seeds = std::vector<std::uint64_t>{1, 2};
  o.alpha_grid = std::vector<double>{0.5, 1.0};
  o.parallel = 3;
  apply_overrides(m, o);
  CHECK(m.template_id == "cfp");
  CHECK(m.template_file.empty());
  CHECK(m.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(m.parallel == 3);
  ManifestOverrides bad;
  bad.alpha_grid = std::vector<double>{0.0};
  CHECK_THROWS_AS(apply_overrides(m, bad), InvalidArgument);
}

TEST_CASE("synth then run then report") {
  const fs::path out = fresh_dir("run");
  RunManifest m = sample_manifest(out);
  m.seeds = {2266, 105};

  const CommandOutcome synth = cmd_synth(m);
  CHECK(synth.exit_code == 0);
  CHECK(synth.summary.find("72 variants over 24 instances") != std::string::npos);
  CHECK(synth.artifacts.size() == 2);

  const CommandOutcome run = cmd_run(m);
  CHECK(run.exit_code == 0);
  const fs::path records = out / "records" / "cola_sample" / "base_b" / "greedy@mock_constant";
  CHECK(fs::exists(records / "seed-2266.jsonl"));
  CHECK(fs::exists(records / "seed-105.predictions.jsonl"));
  CHECK_FALSE(fs::exists(records / "seed-2266.jsonl.partial"));
  CHECK(mentions(run, ".svg"));
  CHECK(run.summary.find("greedy@mock:constant n=48 accuracy=") != std::string::npos);
  const auto [recs, meta] = read_sensitivity_records(records / "seed-2266.jsonl");
  CHECK(recs.size() == 24);
  for (const auto& r : recs) CHECK(r.s == 0.0);

  // Completed files are reused as they are.
  const std::string before = slurp(records / "seed-2266.jsonl");
  CHECK(cmd_run(m).exit_code == 0);
  CHECK(slurp(records / "seed-2266.jsonl") == before);

  const CommandOutcome report = cmd_report(m);
  CHECK(report.exit_code == 0);
  CHECK(report.artifacts.size() == 3);
  CHECK(report.summary.find("correlation: not applicable") != std::string::npos);
}

TEST_CASE("run resumes from a checkpoint") {
  const fs::path out = fresh_dir("resume");
  const RunManifest m = sample_manifest(out);
  const fs::path records = out / "records" / "cola_sample" / "base_b" / "greedy@mock_constant";
  fs::create_directories(records);
  const json meta = {{"dataset", "cola_sample"}, {"template", "base_b"}, {"strategy", "greedy"},
                     {"backend", "mock:constant"}, {"seed", 2266}};
  // A finished instance whose stored labels differ from what the backend would give.
  const SensitivityRecord planted = make_sensitivity_record(
      "cola-001", {CanonicalLabel("0"), CanonicalLabel("0"), CanonicalLabel("1"), CanonicalLabel("0")},
      CanonicalLabel("1"));
  {
    std::ofstream partial(records / "seed-2266.jsonl.partial");
    partial << json{{"meta", meta}}.dump() << "\n";
    partial << json{{"record", json::parse(sensitivity_record_to_json(planted))}, {"predictions", json::array()}}.dump()
            << "\n";
    partial << "{\"record\":{\"id\":\"cola-00";  // torn write
  }
  REQUIRE(cmd_run(m).exit_code == 0);
  const auto [recs, stored] = read_sensitivity_records(records / "seed-2266.jsonl");
  REQUIRE(recs.size() == 24);
  CHECK(recs[0] == planted);
  CHECK(recs[1].labels.front().value() == "1");
  CHECK_FALSE(fs::exists(records / "seed-2266.jsonl.partial"));
}

TEST_CASE("run failures beyond the tolerance") {
  const fs::path out = fresh_dir("fail");
  RunManifest m = sample_manifest(out);
  m.backend_config = {{"kind", "table"}, {"answers", json::object()}};
  const CommandOutcome o = cmd_run(m);
  CHECK(o.exit_code == 1);
  CHECK(o.summary.find("exceed the tolerance") != std::string::npos);
  CHECK(o.summary.find("failed cola-001") != std::string::npos);
  CHECK_FALSE(fs::exists(out / "reports"));
}

TEST_CASE("decode sweeps alpha") {
  const fs::path out = fresh_dir("decode");
  RunManifest m = sample_manifest(out);
  m.backend_config = {{"kind", "instability"}, {"q", 0.3}, {"seed", 5}};
  m.alpha_grid = {0.25, 0.5, 1.0};
  m.seeds = {1, 2};
  const CommandOutcome o = cmd_decode(m);
  REQUIRE(o.exit_code == 0);
  const fs::path dir = out / "decode" / "cola_sample" / "base_b" / "mock_instability_0.30";
  const std::string csv = slurp(dir / "pooled.csv");
  CHECK(csv.rfind("alpha,accuracy\n0.25,", 0) == 0);
  CHECK(csv.find("\ngreedy,") != std::string::npos);
  CHECK(fs::exists(dir / "seed-1.csv"));

  m.n_variants = 1;
  CHECK(cmd_decode(m).exit_code == 2);
}

TEST_CASE("saliency needs a gradient source") {
  const fs::path out = fresh_dir("nograd");
  const CommandOutcome o = cmd_saliency(sample_manifest(out));
  CHECK(o.exit_code == 2);
  CHECK(o.summary.find("gradient-bridge") != std::string::npos);
  CHECK(o.summary.find("\"gradients\"") != std::string::npos);
}

TEST_CASE("saliency from the tiny model") {
  const fs::path out = fresh_dir("tiny");
  RunManifest m = sample_manifest(out);
  m.backend = "tiny-lm";
  m.backend_config = {{"seed", 3}, {"dim", 8}, {"context", 96}};
  m.template_id = "zero_b";
  const CommandOutcome o = cmd_saliency(m);
  REQUIRE(o.exit_code == 0);
  const fs::path dir = out / "saliency" / "cola_sample" / "zero_b" / "tiny-lm";
  const std::string stats = slurp(dir / "stats.csv");
  CHECK(stats.find("cola_sample,zero_b,24,") != std::string::npos);
  std::ifstream in(dir / "saliency.jsonl");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) {
    const json j = json::parse(line);
    double sum = 0.0;
    for (const auto& t : j.at("tokens")) {
      if (!t.at("excluded").get<bool>()) sum += t.at("score").get<double>();
    }
    CHECK(sum == doctest::Approx(1000.0));
    ++lines;
  }
  CHECK(lines == 24);
}

TEST_CASE("saliency from an interchange file") {
  const fs::path out = fresh_dir("interchange");
  RunManifest m = sample_manifest(out);
  m.template_id = "base_b";
  const auto instances = load_dataset(m.dataset, "cola");
  const fs::path grads = out / "grads.jsonl";
  {
    std::ofstream f(grads);
    for (const Instance& inst : instances) {
      const RenderedPrompt p = render(builtin_template("base_b", inst), inst);
      InterchangeRecord rec{inst.id, "1", {}};
      // one token per character, heavier on the prompt text
      for (std::size_t i = 0; i < p.text.size(); ++i) {
        rec.map.tokens.push_back({p.text.substr(i, 1), i, i + 1});
        const bool input = i >= p.spans[1].begin && i < p.spans[1].end;
        rec.map.grads.push_back({input ? 0.5 : 2.0, input ? -0.5 : 1.0});
      }
      f << interchange_to_json(rec) << "\n";
    }
    f << "{\"instance_id\":\"broken\"}\n";
  }
  m.gradients = grads;
  CHECK(cmd_saliency(m).exit_code == 1);
  m.failure_tolerance = 1;
  const CommandOutcome o = cmd_saliency(m);
  REQUIRE(o.exit_code == 0);
  CHECK(o.summary.find("failed grads.jsonl:25") != std::string::npos);
  // Per instance: input tokens weigh 1, prompt tokens 3.
  const std::string stats = slurp(out / "saliency" / "cola_sample" / "base_b" / "interchange" / "stats.csv");
  std::istringstream rows(stats);
  std::string header, row;
  std::getline(rows, header);
  std::getline(rows, row);
  std::vector<std::string> cells;
  std::istringstream cs(row);
  for (std::string cell; std::getline(cs, cell, ',');) cells.push_back(cell);
  REQUIRE(cells.size() >= 10);
  const double input = std::stod(cells[3]), prompt = std::stod(cells[4]);
  CHECK(prompt == doctest::Approx(3.0 * input).epsilon(0.01));
  CHECK(cells[9] == format2(input / prompt * 100.0));
}
