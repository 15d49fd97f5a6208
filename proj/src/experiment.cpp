#include "gradmod/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <ostream>

#include "gradmod/checkpoint.hpp"
#include "gradmod/gradcheck.hpp"
#include "gradmod/image_io.hpp"
#include "gradmod/inversion.hpp"
#include "gradmod/metrics.hpp"

namespace gradmod {

namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

struct Setup {
  Generator gen;
  Extractors fx;
  Target target;
  LatentCode w;
  double initial_mse = 0.0;
};

Setup prepare(const ExperimentConfig& c) {
  Setup s{make_generator(c.generator, c.seeds.generator), Extractors::standard(c.seeds.extractors), {}, {}, 0.0};
  s.target = make_synthetic_target(s.gen, c.init.space, c.seeds.target, c.seeds.noise, c.target_noise);
  s.w = init_latent(s.target, s.gen, c.init, s.fx, c.seeds.perturbation, c.seeds.noise);
  s.initial_mse = mse(s.target.image, synthesize(c.generator, s.w, s.gen.params, c.seeds.noise));
  return s;
}

std::string run_id(const ExperimentConfig& c) {
  return (c.preset.empty() ? std::string("custom") : c.preset) + "-t" + std::to_string(c.seeds.target);
}

struct ArmOutcome {
  std::string arm;
  InversionResult result;
};

ArmOutcome run_arm(const ExperimentConfig& c, const Setup& s, bool gmm_arm, const fs::path& dir) {
  InversionSettings settings = inversion_settings(c);
  if (c.match_factor > 0) settings.match_mse = s.initial_mse / c.match_factor;
  ArmOutcome o;
  if (gmm_arm) {
    o.arm = "gmm";
    GmmSet gmms = build_gmm_set(c.generator, s.gen.params, c.gmm, c.seeds.gmm);
    o.result = run_inversion(s.gen, s.target.image, s.w, gmms, settings, s.fx);
    save_gmm_set(gmms, dir / "gmm_psi.gmodc");
  } else {
    o.arm = "baseline";
    settings.optimizer.lr = c.baseline_lr;
    o.result = run_baseline_pti(s.gen, s.target.image, s.w, settings, s.fx);
  }
  std::string trace = std::string(kTraceCsvHeader) + "\n";
  for (const auto& row : o.result.trace) trace += format_trace_row(row) + "\n";
  write_text(dir / (o.arm + "_trace.csv"), trace);
  write_image(synthesize(c.generator, s.w, o.result.theta_prime, c.seeds.noise), dir / (o.arm + "_final.ppm"));
  save_generator(Generator{c.generator, o.result.theta_prime}, dir / (o.arm + "_theta.gmodc"));
  return o;
}

void write_metrics(const ExperimentConfig& c, const Setup& s, const std::vector<ArmOutcome>& arms,
                   const fs::path& dir) {
  std::string text = std::string(kMetricsCsvHeader) + "\n";
  const MetricReport initial =
      evaluate(s.target.image, synthesize(c.generator, s.w, s.gen.params, c.seeds.noise), s.fx);
  for (const auto& a : arms) {
    MetricRow first{run_id(c), a.arm, c.seeds.target, 0, initial, 0.0};
    text += format_metric_row(first) + "\n";
    const MetricReport final_report =
        evaluate(s.target.image, synthesize(c.generator, s.w, a.result.theta_prime, c.seeds.noise), s.fx);
    MetricRow last{run_id(c), a.arm, c.seeds.target, a.result.trace.size(), final_report, a.result.locality};
    text += format_metric_row(last) + "\n";
  }
  write_text(dir / "metrics.csv", text);
}

void write_compare(const std::vector<ArmOutcome>& arms, const fs::path& dir, std::ostream& out) {
  std::string text = "arm,initial_mse,final_mse,locality_score,matched_iteration,matched_locality_score\n";
  for (const auto& a : arms) {
    const auto& r = a.result;
    text += a.arm + "," + format_double(r.initial_mse) + "," + format_double(r.final_mse) + "," +
            format_double(r.locality) + "," + (r.matched_iteration ? std::to_string(*r.matched_iteration) : "") + "," +
            (r.matched_locality ? format_double(*r.matched_locality) : "") + "\n";
  }
  write_text(dir / "compare.csv", text);
  out << text;
}

int selftest(std::ostream& out) {
  bool ok = true;
  for (const auto& r : gradcheck_suite(1)) {
    out << (r.passed() ? "ok   " : "FAIL ") << r.name << " probes=" << r.probes << " redrawn=" << r.redrawn
        << " max_rel_err=" << r.max_rel_error << "\n";
    ok = ok && r.passed();
  }
  out << (ok ? "all gradient checks passed\n" : "gradient checks FAILED\n");
  return ok ? 0 : 1;
}

}  // namespace

std::string to_string(Command c) {
  switch (c) {
    case Command::Invert: return "invert";
    case Command::Baseline: return "baseline";
    case Command::Compare: return "compare";
    case Command::Edit: return "edit";
    case Command::Project: return "project";
    case Command::Selftest: return "selftest";
  }
  return "?";
}

Command command_from_string(const std::string& s) {
  for (Command c : {Command::Invert, Command::Baseline, Command::Compare, Command::Edit, Command::Project,
                    Command::Selftest})
    if (to_string(c) == s) return c;
  throw ConfigError("unknown command '" + s + "'");
}

int run_experiment(const ExperimentConfig& config, Command command, bool dry_run, std::ostream& out,
                   std::ostream& err) {
  try {
    config.validate();
    if (dry_run) {
      out << to_ini(config);
      return 0;
    }
    if (command == Command::Selftest) return selftest(out);

    const fs::path dir = config.output_dir;
    fs::create_directories(dir);
    write_text(dir / "config.ini", to_ini(config));

    if (command == Command::Project) {
      ExperimentConfig c = config;
      c.init.mode = InitMode::Projection;
      const Generator gen = make_generator(c.generator, c.seeds.generator);
      const Extractors fx = Extractors::standard(c.seeds.extractors);
      const Target target = make_synthetic_target(gen, c.init.space, c.seeds.target, c.seeds.noise, c.target_noise);
      const ProjectionResult p = project_latent(target.image, gen, c.init, fx, c.seeds.noise);
      write_image(target.image, dir / "target.ppm");
      write_image(synthesize(c.generator, p.code, gen.params, c.seeds.noise), dir / "projected.ppm");
      const std::string summary = "initial_loss,final_loss\n" + format_double(p.initial_loss) + "," +
                                  format_double(p.final_loss) + "\n";
      write_text(dir / "projection.csv", summary);
      out << summary;
      return 0;
    }

    const Setup s = prepare(config);
    write_image(s.target.image, dir / "target.ppm");
    write_image(synthesize(config.generator, s.w, s.gen.params, config.seeds.noise), dir / "initial.ppm");

    std::vector<ArmOutcome> arms;
    const bool both = command == Command::Compare || (command != Command::Baseline && config.arm == Arm::Both);
    const bool gmm = command == Command::Edit || both || (command == Command::Invert && config.arm != Arm::Baseline);
    const bool baseline = both || command == Command::Baseline || (command == Command::Invert && config.arm == Arm::Baseline);
    if (gmm) arms.push_back(run_arm(config, s, true, dir));
    if (baseline) arms.push_back(run_arm(config, s, false, dir));
    write_metrics(config, s, arms, dir);
    if (arms.size() > 1) write_compare(arms, dir, out);

    if (command == Command::Edit) {
      const auto dirs = orthonormal_directions(config.generator.style_dim, config.edit.directions,
                                               config.seeds.directions);
      const Tensor& v = dirs[config.edit.direction_index];
      const LatentCode edited =
          edit_latent(s.w, v, config.edit.magnitude, config.edit.first_layer, config.edit.last_layer);
      const GeneratorParams& tuned = arms.front().result.theta_prime;
      write_image(synthesize(config.generator, edited, s.gen.params, config.seeds.noise), dir / "edit_theta.ppm");
      write_image(synthesize(config.generator, edited, tuned, config.seeds.noise), dir / "edit_theta_prime.ppm");
    }
    for (const auto& a : arms)
      out << a.arm << ": initial_mse=" << format_double(a.result.initial_mse)
          << " final_mse=" << format_double(a.result.final_mse)
          << " locality=" << format_double(a.result.locality) << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace gradmod
