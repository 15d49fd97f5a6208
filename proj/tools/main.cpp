#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gradmod/config.hpp"
#include "gradmod/experiment.hpp"

namespace {

// Turns leftover "--section.key=value" / "--section.key value" arguments
// into config overrides.
std::vector<std::pair<std::string, std::string>> overrides_from(const std::vector<std::string>& extras) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.find('.') == std::string::npos)
      throw gradmod::ConfigError("unrecognised argument '" + arg + "' (config overrides look like --section.key=value)");
    const std::string body = arg.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw gradmod::ConfigError("missing value for '" + arg + "'");
      out.emplace_back(body, extras[++i]);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient-modification GAN inversion on a toy style-based generator"};
  app.require_subcommand(1);

  std::string config_path, preset, output_dir;
  bool dry_run = false;
  std::vector<CLI::App*> subs;
  const std::vector<std::pair<const char*, const char*>> commands{
      {"invert", "train the gradient-modification modules (or the arm named by experiment.arm)"},
      {"baseline", "fine-tune the generator layers directly"},
      {"compare", "run both arms on the same target and summarise"},
      {"edit", "invert, then apply a latent edit under theta and theta'"},
      {"project", "latent projection only"},
      {"selftest", "finite-difference gradient checks"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->allow_extras();
    sub->add_option("--config", config_path, "INI config file");
    sub->add_option("--preset", preset, "named preset: faces, afhq, cars, horses, church");
    sub->add_option("--output-dir", output_dir, "output directory (overrides everything else)");
    sub->add_flag("--dry-run", dry_run, "print the resolved config and exit");
    subs.push_back(sub);
  }
  app.footer(
      "Any config key can be overridden as --section.key=value, e.g. --loss.lambda_l=0 --gmm.blocks=2.\n"
      "Precedence: preset < config file < GRADMOD_OUTPUT_DIR < command-line overrides.");
  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* chosen = nullptr;
    for (CLI::App* s : subs)
      if (s->parsed()) chosen = s;
    const gradmod::Command command = gradmod::command_from_string(chosen->get_name());

    gradmod::ConfigSources sources;
    if (!preset.empty()) sources.preset = preset;
    if (!config_path.empty()) sources.file = config_path;
    if (const char* env = std::getenv("GRADMOD_OUTPUT_DIR"); env && *env) sources.env_output_dir = env;
    sources.overrides = overrides_from(chosen->remaining());
    if (!output_dir.empty()) sources.overrides.emplace_back("experiment.output_dir", output_dir);
    // selftest needs no experiment settings.
    if (command == gradmod::Command::Selftest && !sources.preset && !sources.file) sources.preset = "faces";

    const gradmod::ExperimentConfig config = gradmod::parse_config(sources);
    return gradmod::run_experiment(config, command, dry_run, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
