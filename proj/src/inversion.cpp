#include "gradmod/inversion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gradmod/metrics.hpp"

namespace gradmod {

namespace {

constexpr std::size_t kMeanLatentSamples = 256;
constexpr double kProjectionPerceptual = 0.8;

std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::string breakdown(std::size_t iteration, const TotalLoss& loss) {
  std::ostringstream os;
  auto term = [&](const char* name, const std::optional<double>& v) {
    if (v) os << ' ' << name << '=' << format_double(*v);
  };
  os << "non-finite loss at iteration " << iteration << ": total=" << format_double(loss.total.item())
     << " image=" << format_double(loss.image.total.item());
  term("rec", loss.image.rec);
  term("lpips", loss.image.lpips);
  term("sim", loss.image.sim);
  term("fp", loss.image.fp);
  if (loss.localization) {
    os << " localization=" << format_double(loss.localization->total.item());
    term("loc_rec", loss.localization->rec);
    term("loc_lpips", loss.localization->lpips);
    term("loc_sim", loss.localization->sim);
    term("loc_fp", loss.localization->fp);
  }
  return os.str();
}

TraceRow trace_row(std::size_t iteration, const TotalLoss& loss, const Tensor& target) {
  TraceRow row;
  row.iteration = iteration;
  row.total = loss.total.item();
  row.image_loss = loss.image.total.item();
  if (loss.localization) row.localization_loss = loss.localization->total.item();
  row.rec = loss.image.rec;
  row.lpips = loss.image.lpips;
  row.sim = loss.image.sim;
  row.fp = loss.image.fp;
  row.recon_mse = mse(target, loss.reconstruction);
  return row;
}

// Shared optimization loop. `make_theta_prime` builds the differentiable
// tuned parameters from the current trainable state.
template <class MakeThetaPrime>
InversionResult optimize(const Generator& gen, const Tensor& target, const LatentCode& w,
                         const InversionSettings& settings, const Extractors& fx,
                         std::vector<std::pair<std::string, Tensor>> trainable, MakeThetaPrime make_theta_prime) {
  settings.validate();
  InversionResult result;
  result.initial_mse = mse(target, synthesize(gen.config, w, gen.params, settings.noise_seed));

  Optimizer opt(settings.optimizer, std::move(trainable));
  Rng loc_rng = make_rng(settings.localization_seed, Stream::Localization);
  auto score = [&](const GeneratorParams& tp) {
    return locality_score(gen.config, gen.params, tp, settings.locality_samples, settings.evaluation_seed,
                          settings.noise_seed);
  };

  for (std::size_t it = 0; it < settings.iterations; ++it) {
    const GeneratorParams theta_prime = make_theta_prime();
    TotalLoss loss = total_loss(target, w, gen.config, gen.params, theta_prime, settings.weights, fx, loc_rng,
                                settings.noise_seed, settings.localization_batch);
    if (!std::isfinite(loss.total.item())) throw NumericalError(breakdown(it, loss));
    TraceRow row = trace_row(it, loss, target);

    const bool matched = settings.match_mse && !result.matched_iteration && row.recon_mse <= *settings.match_mse;
    if (matched) {
      result.matched_iteration = it;
      result.matched_theta = detach(theta_prime);
      result.matched_locality = score(*result.matched_theta);
    }
    if (settings.locality_every > 0 && it % settings.locality_every == 0)
      row.locality = matched ? *result.matched_locality : score(detach(theta_prime));
    result.trace.push_back(row);
    if (matched && settings.stop_at_match) break;

    opt.zero_grad();
    loss.total.backward();
    opt.step();
  }

  if (result.matched_iteration && settings.stop_at_match) {
    result.theta_prime = *result.matched_theta;
  } else {
    result.theta_prime = detach(make_theta_prime());
  }
  result.final_mse = mse(target, synthesize(gen.config, w, result.theta_prime, settings.noise_seed));
  result.locality = score(result.theta_prime);
  return result;
}

}  // namespace

GeneratorParams detach(const GeneratorParams& params) {
  GeneratorParams out;
  out.frozen = params.frozen;
  for (const auto& [name, t] : params.tensors) out.tensors[name] = t.clone();
  return out;
}

Target make_synthetic_target(const Generator& gen, LatentSpace space, std::uint64_t seed, std::uint64_t noise_seed,
                             double out_of_range_std) {
  if (space == LatentSpace::Z) throw ConfigError("targets are generated from W or W+ codes");
  if (out_of_range_std < 0) throw ConfigError("out-of-range noise std must be non-negative");
  Rng rng = make_rng(seed, Stream::Target);
  const Tensor z = randn({gen.config.style_dim}, rng);
  LatentCode code{LatentSpace::W, map_style(gen.config, gen.params, z)};
  if (space == LatentSpace::WPlus) code = LatentCode{LatentSpace::WPlus, to_wplus(gen.config, code).values.clone()};
  Tensor image = synthesize(gen.config, code, gen.params, noise_seed);
  if (out_of_range_std > 0) {
    Rng pix = make_rng(seed, Stream::Target, 1);
    const Tensor noise = randn(image.shape(), pix, out_of_range_std);
    std::vector<double> v(image.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(image[i] + noise[i], -1.0, 1.0);
    return {Tensor(image.shape(), std::move(v)), std::nullopt};
  }
  return {image.clone(), code};
}

std::string to_string(InitMode m) { return m == InitMode::Oracle ? "oracle" : "projection"; }

InitMode init_mode_from_string(const std::string& s) {
  if (s == "oracle") return InitMode::Oracle;
  if (s == "projection") return InitMode::Projection;
  throw ConfigError("unknown init mode '" + s + "' (expected oracle or projection)");
}

ProjectionResult project_latent(const Tensor& target, const Generator& gen, const InitOptions& options,
                                const Extractors& fx, std::uint64_t noise_seed) {
  if (options.space == LatentSpace::Z) throw ConfigError("projection works in W or W+");
  if (!fx.perceptual) throw ConfigError("projection needs the perceptual extractor");
  if (options.projection_steps == 0) throw ConfigError("projection needs a positive step budget");
  const auto& cfg = gen.config;

  Rng rng = make_rng(0, Stream::Mapping);
  std::vector<double> mean_w(cfg.style_dim, 0.0);
  for (std::size_t i = 0; i < kMeanLatentSamples; ++i) {
    const Tensor w = map_style(cfg, gen.params, randn({cfg.style_dim}, rng));
    for (std::size_t j = 0; j < cfg.style_dim; ++j) mean_w[j] += w[j] / static_cast<double>(kMeanLatentSamples);
  }
  Tensor start({cfg.style_dim}, mean_w);
  if (options.space == LatentSpace::WPlus) start = to_wplus(cfg, {LatentSpace::W, start}).values.clone();
  Tensor code = start.clone().set_requires_grad(true);

  auto objective = [&](const Tensor& c) {
    const Tensor img = synthesize(cfg, {options.space, c}, gen.params, noise_seed);
    return pixel_loss(target, img, PixelLoss::L2) + kProjectionPerceptual * perceptual_loss(target, img, *fx.perceptual);
  };

  OptimizerConfig oc;
  oc.kind = OptimizerKind::Adam;
  oc.lr = options.projection_lr;
  oc.beta1 = 0.9;
  oc.eps = 1e-8;
  Optimizer opt(oc, {{"code", code}});
  ProjectionResult out;
  for (std::size_t s = 0; s < options.projection_steps; ++s) {
    const Tensor loss = objective(code);
    if (s == 0) out.initial_loss = loss.item();
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  out.final_loss = objective(code).item();
  if (options.projection_steps == 0) out.initial_loss = out.final_loss;
  out.code = {options.space, code.clone()};
  return out;
}

LatentCode init_latent(const Target& target, const Generator& gen, const InitOptions& options, const Extractors& fx,
                       std::uint64_t seed, std::uint64_t noise_seed) {
  if (options.mode == InitMode::Projection) return project_latent(target.image, gen, options, fx, noise_seed).code;
  if (!target.latent) throw ConfigError("oracle initialization needs a synthetic target with a known latent");
  if (options.perturbation_std < 0) throw ConfigError("perturbation std must be non-negative");
  LatentCode code = *target.latent;
  if (options.space == LatentSpace::WPlus && code.space == LatentSpace::W)
    code = LatentCode{LatentSpace::WPlus, to_wplus(gen.config, code).values.clone()};
  else if (options.space != code.space)
    throw ConfigError("oracle initialization cannot turn a " + to_string(code.space) + " code into " +
                      to_string(options.space));
  if (options.perturbation_std == 0) return {code.space, code.values.clone()};
  Rng rng = make_rng(seed, Stream::InitPerturbation);
  return {code.space, (code.values + randn(code.values.shape(), rng, options.perturbation_std)).clone()};
}

void InversionSettings::validate() const {
  weights.validate();
  optimizer.validate();
  gmm.validate();
  if (localization_batch == 0) throw ConfigError("localization batch must be at least 1");
  if (locality_samples == 0) throw ConfigError("locality samples must be at least 1");
  if (stop_at_match && !match_mse) throw ConfigError("stop_at_match needs a match threshold");
}

std::string format_trace_row(const TraceRow& row) {
  return std::to_string(row.iteration) + "," + format_double(row.total) + "," + format_double(row.image_loss) + "," +
         opt_field(row.localization_loss) + "," + opt_field(row.rec) + "," + opt_field(row.lpips) + "," +
         opt_field(row.sim) + "," + opt_field(row.fp) + "," + format_double(row.recon_mse) + "," +
         opt_field(row.locality);
}

LayerGrads probe_gradients(const Tensor& target, const LatentCode& w, const Generator& gen,
                           const std::vector<std::string>& layers, const LossWeights& weights, const Extractors& fx,
                           std::uint64_t noise_seed) {
  GeneratorParams probe = gen.params;
  probe.frozen = false;
  for (const auto& name : layers) probe.tensors[name] = gen.params.at(name).clone().set_requires_grad(true);
  const LatentCode w_const{w.space, stop_gradient(w.values)};
  const Tensor image = synthesize(gen.config, w_const, probe, noise_seed);
  composite_loss(target, image, weights, fx).total.backward();
  LayerGrads grads;
  for (const auto& name : layers) {
    const Tensor& p = probe.tensors.at(name);
    grads[name] = p.has_grad() ? Tensor(p.shape(), {p.grad().begin(), p.grad().end()}) : Tensor::zeros(p.shape());
  }
  return grads;
}

InversionResult run_inversion(const Generator& gen, const Tensor& target, const LatentCode& w, GmmSet& gmms,
                              const InversionSettings& settings, const Extractors& fx) {
  const std::vector<std::string> layers = gmms.layers();
  for (const auto& name : layers)
    if (!gen.params.contains(name)) throw ConfigError("GMM set names unknown generator layer '" + name + "'");
  auto make_theta_prime = [&]() {
    const LayerGrads grads = probe_gradients(target, w, gen, layers, settings.weights, fx, settings.noise_seed);
    return apply_update(gen.params, gmms, grads);
  };
  return optimize(gen, target, w, settings, fx, gmms.parameters(), make_theta_prime);
}

InversionResult run_baseline_pti(const Generator& gen, const Tensor& target, const LatentCode& w,
                                 const InversionSettings& settings, const Extractors& fx) {
  GeneratorParams tuned = gen.params;
  tuned.frozen = false;
  std::vector<std::pair<std::string, Tensor>> trainable;
  for (const auto& name : tunable_layers(gen.config, settings.gmm.layers)) {
    Tensor t = gen.params.at(name).clone().set_requires_grad(true);
    tuned.tensors[name] = t;
    trainable.emplace_back(name, t);
  }
  return optimize(gen, target, w, settings, fx, std::move(trainable), [&]() { return tuned; });
}

double locality_score(const GeneratorConfig& config, const GeneratorParams& theta, const GeneratorParams& theta_prime,
                      std::size_t n_samples, std::uint64_t seed, std::uint64_t noise_seed) {
  if (n_samples == 0) throw ConfigError("locality_score needs at least one sample");
  Rng rng = make_rng(seed, Stream::Evaluation);
  double total = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const LatentCode wz{LatentSpace::W, map_style(config, theta, randn({config.style_dim}, rng))};
    total += mse(synthesize(config, wz, theta, noise_seed), synthesize(config, wz, theta_prime, noise_seed));
  }
  return total / static_cast<double>(n_samples);
}

LatentCode edit_latent(const LatentCode& w, const Tensor& direction, double magnitude, std::size_t first_layer,
                       std::optional<std::size_t> last_layer) {
  const std::size_t d = w.values.ndim() == 1 ? w.values.numel() : w.values.dim(1);
  if (direction.ndim() != 1 || direction.numel() != d)
    throw ShapeError("edit_latent: direction of shape " + shape_str(direction.shape()) + " for code " +
                     shape_str(w.values.shape()));
  double norm = 0.0;
  for (double v : direction.values()) norm += v * v;
  if (std::abs(std::sqrt(norm) - 1.0) > 1e-9) throw ConfigError("edit_latent: direction must have unit norm");

  std::vector<double> out(w.values.values().begin(), w.values.values().end());
  if (w.space != LatentSpace::WPlus) {
    for (std::size_t j = 0; j < d; ++j) out[j] += magnitude * direction[j];
  } else {
    const std::size_t rows = w.values.dim(0);
    const std::size_t last = last_layer.value_or(rows);
    if (first_layer > last || last > rows) throw ConfigError("edit_latent: layer range out of bounds");
    for (std::size_t r = first_layer; r < last; ++r)
      for (std::size_t j = 0; j < d; ++j) out[r * d + j] += magnitude * direction[j];
  }
  return {w.space, Tensor(w.values.shape(), std::move(out))};
}

std::vector<Tensor> orthonormal_directions(std::size_t d, std::size_t count, std::uint64_t seed) {
  if (count > d) throw ConfigError("cannot build more orthonormal directions than dimensions");
  Rng rng = make_rng(seed, Stream::Directions);
  std::vector<std::vector<double>> basis;
  while (basis.size() < count) {
    const Tensor g = randn({d}, rng);
    std::vector<double> v(g.values().begin(), g.values().end());
    // Two passes of classical Gram-Schmidt keep the basis orthogonal to
    // rounding level.
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& b : basis) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += v[j] * b[j];
        for (std::size_t j = 0; j < d; ++j) v[j] -= dot * b[j];
      }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  std::vector<Tensor> out;
  for (auto& v : basis) out.emplace_back(Shape{d}, std::move(v));
  return out;
}

}  // namespace gradmod
