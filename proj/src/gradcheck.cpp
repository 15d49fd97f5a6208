#include "gradmod/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gradmod/generator.hpp"
#include "gradmod/gmm.hpp"
#include "gradmod/inversion.hpp"
#include "gradmod/losses.hpp"
#include "gradmod/rng.hpp"

namespace gradmod {

namespace {

Tensor leaf(const Shape& shape, Rng& rng) { return rand_uniform(shape, rng, -1.0, 1.0, true); }

// Contracts a tensor to a scalar with fixed random weights so that every
// output element contributes a distinct amount.
class Contract {
 public:
  Contract(const Shape& shape, Rng& rng) : weights_(rand_uniform(shape, rng, -1.0, 1.0)) {}
  Tensor operator()(const Tensor& t) const { return sum(t * weights_); }

 private:
  Tensor weights_;
};

GeneratorConfig small_generator() {
  GeneratorConfig c;
  c.style_dim = 8;
  c.mapping_layers = 2;
  c.base_resolution = 4;
  c.widths = {8, 8, 4};
  return c;
}

// Generator parameters with the named layers replaced by the given tensors.
GeneratorParams with_layers(const GeneratorParams& base, const std::vector<std::string>& names,
                            const std::vector<Tensor>& values) {
  GeneratorParams p = base;
  p.frozen = false;
  for (std::size_t i = 0; i < names.size(); ++i) p.tensors[names[i]] = values[i];
  return p;
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckResult check_gradient(const std::string& name, std::vector<Tensor> inputs, const ScalarFn& f,
                               std::size_t probes, std::uint64_t seed, double tolerance, const ScalarFn& numeric) {
  GradCheckResult result;
  result.name = name;
  result.tolerance = tolerance;
  for (auto& t : inputs) {
    if (!t.is_leaf() || !t.requires_grad())
      throw std::invalid_argument("check_gradient '" + name + "': inputs must be leaves that require grad");
    t.zero_grad();
  }
  const Tensor out = f(inputs);
  if (out.numel() != 1) throw ShapeError("check_gradient '" + name + "': f must return a scalar");
  out.backward();
  const ScalarFn& g = numeric ? numeric : f;

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) coords.emplace_back(k, i);
  Rng rng = make_rng(seed, Stream::Probe);
  // Without replacement while coordinates last, then with replacement.
  std::shuffle(coords.begin(), coords.end(), rng);
  std::uniform_int_distribution<std::size_t> pick(0, coords.size() - 1);
  std::size_t drawn = 0;
  auto next = [&]() { return drawn < coords.size() ? coords[drawn++] : coords[pick(rng)]; };

  auto central = [&](std::size_t k, std::size_t i, double h) {
    auto values = inputs[k].mutable_values();
    const double x0 = values[i];
    values[i] = x0 + h;
    const double up = g(inputs).item();
    values[i] = x0 - h;
    const double down = g(inputs).item();
    values[i] = x0;
    return (up - down) / (2.0 * h);
  };

  while (result.probes < probes && result.redrawn <= probes) {
    const auto [k, i] = next();
    const double numeric_grad = central(k, i, kFdStep);
    if (relative_error(numeric_grad, central(k, i, kFdStep / 10.0)) > tolerance) {
      ++result.redrawn;
      continue;
    }
    const double analytic = inputs[k].has_grad() ? inputs[k].grad()[i] : 0.0;
    result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic, numeric_grad));
    ++result.probes;
  }
  return result;
}

std::vector<GradCheckResult> gradcheck_suite(std::uint64_t seed, std::size_t probes) {
  std::vector<GradCheckResult> results;
  Rng rng = make_rng(seed, Stream::Probe, 1);
  std::uint64_t probe_seed = seed;
  auto run = [&](const std::string& name, std::vector<Tensor> inputs, const ScalarFn& f,
                 const ScalarFn& numeric = nullptr) {
    results.push_back(check_gradient(name, std::move(inputs), f, probes, ++probe_seed, kGradTolerance, numeric));
  };

  // Elementwise and scalar ops.
  {
    const Shape s{4, 6};
    const Contract c(s, rng);
    run("add", {leaf(s, rng), leaf(s, rng)}, [c](const auto& in) { return c(in[0] + in[1]); });
    run("sub", {leaf(s, rng), leaf(s, rng)}, [c](const auto& in) { return c(in[0] - in[1]); });
    run("mul", {leaf(s, rng), leaf(s, rng)}, [c](const auto& in) { return c(in[0] * in[1]); });
    run("div", {leaf(s, rng), leaf(s, rng)}, [c](const auto& in) { return c(in[0] / (in[1] + 2.0)); });
    run("neg", {leaf(s, rng)}, [c](const auto& in) { return c(-in[0]); });
    run("scalar_ops", {leaf(s, rng)}, [c](const auto& in) { return c((3.0 - in[0] * 2.0) / 4.0 + 1.0); });
    run("scalar_tensor_broadcast", {leaf(s, rng), leaf({1}, rng)},
        [c](const auto& in) { return c(in[0] * in[1] + in[1]); });
    run("exp", {leaf(s, rng)}, [c](const auto& in) { return c(exp(in[0])); });
    run("log", {leaf(s, rng)}, [c](const auto& in) { return c(log(in[0] + 2.0)); });
    run("sqrt", {leaf(s, rng)}, [c](const auto& in) { return c(sqrt(in[0] + 2.0)); });
    run("square", {leaf(s, rng)}, [c](const auto& in) { return c(square(in[0])); });
    run("tanh", {leaf(s, rng)}, [c](const auto& in) { return c(tanh(in[0])); });
    run("leaky_relu", {leaf(s, rng)}, [c](const auto& in) { return c(leaky_relu(in[0], 0.01)); });
    run("smooth_l1", {leaf(s, rng)}, [c](const auto& in) { return c(smooth_l1(in[0], 0.1)); });
    run("clamp_min", {leaf(s, rng)}, [c](const auto& in) { return c(clamp_min(in[0], 0.1)); });
  }

  // Reductions and shape ops.
  {
    const Shape s{3, 5, 4};
    run("sum", {leaf(s, rng)}, [](const auto& in) { return sum(square(in[0])); });
    run("mean", {leaf(s, rng)}, [](const auto& in) { return mean(square(in[0])); });
    const Contract c2({3, 4}, rng);
    run("sum_axis", {leaf(s, rng)}, [c2](const auto& in) { return c2(sum_axis(in[0], 1)); });
    run("mean_axis", {leaf(s, rng)}, [c2](const auto& in) { return c2(mean_axis(in[0], 1)); });
    run("l2_norm", {leaf(s, rng)}, [c2](const auto& in) { return c2(l2_norm(in[0], 1)); });
    run("cosine_similarity", {leaf(s, rng), leaf(s, rng)},
        [](const auto& in) { return cosine_similarity(in[0], in[1]); });
    const Contract c3({4, 15}, rng);
    run("reshape", {leaf(s, rng)}, [c3](const auto& in) { return c3(reshape(in[0], {4, 15})); });
    const Contract ct({7, 5}, rng);
    run("transpose", {leaf({5, 7}, rng)}, [ct](const auto& in) { return ct(transpose(in[0])); });
    const Contract cc({5, 7}, rng);
    run("concat", {leaf({2, 7}, rng), leaf({3, 7}, rng)}, [cc](const auto& in) {
      const std::vector<Tensor> parts{in[0], in[1]};
      return cc(concat(parts, 0));
    });
    const Contract cs({5, 4}, rng);
    run("select", {leaf(s, rng)}, [cs](const auto& in) { return cs(select(in[0], 1)); });
    const Contract ce({3, 5, 4}, rng);
    run("expand", {leaf({3, 1, 4}, rng)}, [ce](const auto& in) { return ce(expand(in[0], {3, 5, 4})); });
    const Contract cu({2, 6, 6}, rng);
    run("upsample_nearest2x", {leaf({2, 3, 3}, rng)}, [cu](const auto& in) { return cu(upsample_nearest2x(in[0])); });
    // The oracle differentiates only the unblocked path: the stopped operand
    // is held at its original value.
    const Tensor x = leaf(s, rng);
    const Tensor frozen = x.clone();
    run(
        "stop_gradient_mixed", {x},
        [](const auto& in) { return sum(square(in[0]) * stop_gradient(in[0])) + sum(stop_gradient(exp(in[0]))); },
        [frozen](const auto& in) { return sum(square(in[0]) * frozen); });
  }

  // Linear algebra.
  {
    const Contract cm({3, 2}, rng);
    run("matmul", {leaf({3, 4}, rng), leaf({4, 2}, rng)}, [cm](const auto& in) { return cm(matmul(in[0], in[1])); });
    const Contract cc({3, 5, 5}, rng);
    run("conv2d", {leaf({2, 5, 5}, rng), leaf({3, 2, 3, 3}, rng)},
        [cc](const auto& in) { return cc(conv2d(in[0], in[1], 1, 1)); });
    const Contract cs({3, 3, 3}, rng);
    run("conv2d_stride2", {leaf({2, 5, 5}, rng), leaf({3, 2, 3, 3}, rng)},
        [cs](const auto& in) { return cs(conv2d(in[0], in[1], 2, 1)); });
    const Contract cmod({4, 5, 5}, rng);
    run("modulated_conv", {leaf({3, 5, 5}, rng), leaf({4, 3, 3, 3}, rng), leaf({3}, rng)},
        [cmod](const auto& in) { return cmod(modulated_conv(in[0], in[1], in[2] + 1.5, true)); });
  }

  // Generator.
  {
    const GeneratorConfig cfg = small_generator();
    const Generator gen = make_generator(cfg, seed);
    const Contract cmap({cfg.style_dim}, rng);
    run("map_style", {leaf({cfg.style_dim}, rng)},
        [&gen, cmap](const auto& in) { return cmap(map_style(gen.config, gen.params, in[0])); });
    const std::size_t res = cfg.final_resolution();
    const Contract cimg({3, res, res}, rng);
    run("synthesize_wplus", {leaf({cfg.num_style_layers(), cfg.style_dim}, rng)}, [&gen, cimg](const auto& in) {
      return cimg(synthesize(gen.config, {LatentSpace::WPlus, in[0]}, gen.params, 5));
    });
    const std::vector<std::string> names{"synthesis.const", "synthesis.b1.conv0.weight", "synthesis.b2.conv1.bias",
                                         "synthesis.b1.conv1.affine.weight", "synthesis.b2.torgb.weight",
                                         "mapping.1.weight"};
    std::vector<Tensor> inputs;
    for (const auto& n : names) inputs.push_back(gen.params.at(n).clone().set_requires_grad(true));
    const Tensor z = randn({cfg.style_dim}, rng);
    run("synthesize_params", inputs, [&gen, names, z, cimg](const auto& in) {
      const GeneratorParams p = with_layers(gen.params, names, in);
      return cimg(synthesize(gen.config, {LatentSpace::W, map_style(gen.config, p, z)}, p, 5));
    });
  }

  // Modules.
  {
    const std::size_t rows = 5, d = 6;
    const Contract c({rows, d}, rng);
    run("scale_norm", {leaf({rows, d}, rng), leaf({1}, rng)},
        [c](const auto& in) { return c(scale_norm(in[0], in[1] + 2.0)); });
    run("instance_norm_1d", {leaf({rows, d}, rng)}, [c](const auto& in) { return c(instance_norm_1d(in[0])); });
    for (Norm pre : {Norm::None, Norm::Scale, Norm::Instance})
      for (Norm post : {Norm::None, Norm::Scale, Norm::Instance}) {
        Rng mrng = make_rng(seed, Stream::GmmInit, 17);
        GmmModule m = make_gmm_module(d, 2, pre, post, mrng);
        const Tensor y0 = randn({rows, d}, rng);
        std::vector<Tensor> params;
        for (const auto& [n, t] : m.named_parameters()) params.push_back(t);
        run("gmm_forward_" + to_string(pre) + "_" + to_string(post), params,
            [m, y0, c](const auto&) { return c(gmm_forward(m, y0)); });
      }
  }

  // Losses and the full chain.
  {
    const GeneratorConfig cfg = small_generator();
    const Generator gen = make_generator(cfg, seed);
    const Extractors fx = Extractors::standard(seed);
    const std::size_t res = cfg.final_resolution();
    const Tensor ref = rand_uniform({3, res, res}, rng, -0.9, 0.9);
    run("pixel_l2", {leaf({3, res, res}, rng)}, [ref](const auto& in) { return pixel_loss(ref, in[0], PixelLoss::L2); });
    run("pixel_smooth_l1", {leaf({3, res, res}, rng)},
        [ref](const auto& in) { return pixel_loss(ref, in[0], PixelLoss::SmoothL1, 0.1); });
    run("perceptual", {leaf({3, res, res}, rng)},
        [ref, &fx](const auto& in) { return perceptual_loss(ref, in[0], *fx.perceptual); });
    run("sim", {leaf({3, res, res}, rng)}, [ref, &fx](const auto& in) { return sim_loss(ref, in[0], *fx.identity); });
    run("parsing", {leaf({3, res, res}, rng)},
        [ref, &fx](const auto& in) { return parsing_loss(ref, in[0], *fx.parsing); });

    const Tensor target = synthesize(cfg, {LatentSpace::W, map_style(cfg, gen.params, randn({cfg.style_dim}, rng))},
                                     gen.params, 5);
    const LatentCode w{LatentSpace::WPlus, randn({cfg.num_style_layers(), cfg.style_dim}, rng, 0.5)};
    const LossWeights weights;
    for (Norm pre : {Norm::None, Norm::Scale}) {
      GmmConfig gc;
      gc.pre_norm = pre;
      const GmmSet gmms = build_gmm_set(cfg, gen.params, gc, seed);
      // Fixed layer gradients stand in for the probe pass.
      LayerGrads grads;
      for (const auto& layer : gmms.layers()) grads[layer] = randn(gen.params.at(layer).shape(), rng, 0.01);
      std::vector<Tensor> params;
      for (const auto& [n, t] : gmms.parameters()) params.push_back(t);
      run("full_chain_pre_" + to_string(pre), params, [&, gmms, grads](const auto&) {
        Rng loc = make_rng(seed, Stream::Localization);
        const GeneratorParams theta_prime = apply_update(gen.params, gmms, grads);
        return total_loss(target, w, cfg, gen.params, theta_prime, weights, fx, loc, 5).total;
      });
    }
  }
  // Full chain at the standard generator size with real probe gradients.
  {
    const Generator gen = make_generator(GeneratorConfig{}, seed);
    const auto& cfg = gen.config;
    const Extractors fx = Extractors::standard(seed);
    const Tensor target = synthesize(cfg, {LatentSpace::W, map_style(cfg, gen.params, randn({cfg.style_dim}, rng))},
                                     gen.params, 5);
    const LatentCode w{LatentSpace::WPlus, randn({cfg.num_style_layers(), cfg.style_dim}, rng, 0.5)};
    const LossWeights weights;
    const GmmSet gmms = build_gmm_set(cfg, gen.params, GmmConfig{}, seed);
    const LayerGrads grads = probe_gradients(target, w, gen, gmms.layers(), weights, fx, 5);
    std::vector<Tensor> params;
    for (const auto& [n, t] : gmms.parameters()) params.push_back(t);
    run("full_chain_standard", params, [&, gmms, grads](const auto&) {
      Rng loc = make_rng(seed, Stream::Localization);
      const GeneratorParams theta_prime = apply_update(gen.params, gmms, grads);
      return total_loss(target, w, cfg, gen.params, theta_prime, weights, fx, loc, 5).total;
    });
  }
  return results;
}

}  // namespace gradmod
