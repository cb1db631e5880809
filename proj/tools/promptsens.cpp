#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "promptsens/cli/commands.hpp"
#include "promptsens/error.hpp"

using namespace promptsens;

int main(int argc, char** argv) {
  CLI::App app{"Prompt sensitivity toolkit"};
  app.require_subcommand(1);

  std::string manifest_path;
  std::string backend, template_id;
  std::vector<double> alpha_grid;
  std::vector<std::uint64_t> seeds;
  std::string out_dir;
  int parallel = 0;

  std::vector<CLI::App*> subs;
  const std::pair<const char*, const char*> commands[] = {
      {"synth", "write and audit the perturbation cache"},
      {"run", "estimate sensitivity and accuracy"},
      {"decode", "sweep sensitivity-aware decoding over alpha"},
      {"saliency", "per-segment gradient saliency"},
      {"report", "aggregate every record set under the output directory"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-m,--manifest", manifest_path, "run manifest (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--backend", backend, "backend id");
    sub->add_option("--template", template_id, "builtin template id");
    sub->add_option("--alpha-grid", alpha_grid, "alpha values for decode")->delimiter(',');
    sub->add_option("--seed", seeds, "run seeds")->delimiter(',');
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--parallel", parallel, "concurrent requests")->check(CLI::PositiveNumber);
    subs.push_back(sub);
  }
  CLI11_PARSE(app, argc, argv);

  try {
    RunManifest manifest = load_manifest(manifest_path);
    ManifestOverrides o;
    if (!backend.empty()) o.backend = backend;
    if (!template_id.empty()) o.template_id = template_id;
    if (!alpha_grid.empty()) o.alpha_grid = alpha_grid;
    if (!seeds.empty()) o.seeds = seeds;
    if (!out_dir.empty()) o.out_dir = out_dir;
    if (parallel > 0) o.parallel = parallel;
    apply_overrides(manifest, o);

    CommandOutcome outcome;
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cmd == "synth") outcome = cmd_synth(manifest);
    else if (cmd == "run") outcome = cmd_run(manifest);
    else if (cmd == "decode") outcome = cmd_decode(manifest);
    else if (cmd == "saliency") outcome = cmd_saliency(manifest);
    else outcome = cmd_report(manifest);

    std::cout << outcome.summary;
    for (const auto& p : outcome.artifacts) std::cout << "wrote " << p.string() << "\n";
    return outcome.exit_code;
  } catch (const Error& e) {
    std::cerr << "promptsens: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "promptsens: unexpected error: " << e.what() << "\n";
    return 1;
  }
}
