#include "gradmod/losses.hpp"

#include <cmath>

namespace gradmod {

namespace {

constexpr double kExtractorSlope = 0.2;
constexpr double kFeatureEps = 1e-8;

struct Architecture {
  std::vector<std::size_t> widths;
  std::vector<std::size_t> taps;
  std::uint64_t salt;
};

Architecture architecture(ExtractorKind kind) {
  switch (kind) {
    case ExtractorKind::Perceptual: return {{16, 32, 32}, {0, 1, 2}, 101};
    case ExtractorKind::Identity: return {{16, 32, 64, 64}, {3}, 202};
    case ExtractorKind::Parsing: return {{8, 16, 32, 32, 32}, {0, 1, 2, 3, 4}, 303};
  }
  return {};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": image shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " differ");
}

Tensor pooled(const Tensor& f) { return mean_axis(reshape(f, {f.dim(0), f.dim(1) * f.dim(2)}), 1); }

// Unit-normalizes every spatial position across channels.
Tensor channel_normalize(const Tensor& f) {
  const Tensor norms = clamp_min(l2_norm(f, 0), kFeatureEps);
  return f / expand(reshape(norms, {1, f.dim(1), f.dim(2)}), f.shape());
}

const FeatureExtractor& need(const std::optional<FeatureExtractor>& fx, const char* what) {
  if (!fx) throw ConfigError(std::string("the ") + what + " loss has a nonzero weight but no extractor is configured");
  return *fx;
}

void accumulate(std::optional<double>& acc, const std::optional<double>& v) {
  if (v) acc = acc.value_or(0.0) + *v;
}

}  // namespace

std::string to_string(PixelLoss p) { return p == PixelLoss::L2 ? "l2" : "smooth_l1"; }

PixelLoss pixel_loss_from_string(const std::string& s) {
  if (s == "l2") return PixelLoss::L2;
  if (s == "smooth_l1") return PixelLoss::SmoothL1;
  throw ConfigError("unknown pixel loss '" + s + "' (expected l2 or smooth_l1)");
}

void LossWeights::validate() const {
  for (double v : {lambda1, lambda2, lambda3, lambda_e, lambda_l})
    if (!(v >= 0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and non-negative");
  if (lambda4 && (!(*lambda4 >= 0) || !std::isfinite(*lambda4)))
    throw ConfigError("loss.lambda4 must be finite and non-negative");
  if (!(lambda1 > 0 || lambda2 > 0 || lambda3 > 0 || lambda4.value_or(0.0) > 0))
    throw ConfigError("at least one of loss.lambda1..lambda4 must be positive");
  if (pixel == PixelLoss::SmoothL1 && !(beta > 0)) throw ConfigError("loss.beta must be positive for smooth_l1");
}

FeatureExtractor::FeatureExtractor(ExtractorKind kind, std::uint64_t seed) : kind_(kind) {
  const Architecture arch = architecture(kind);
  Rng rng = make_rng(seed, Stream::Extractors, arch.salt);
  std::size_t in = 3;
  for (std::size_t out : arch.widths) {
    kernels_.push_back(randn({out, in, 3, 3}, rng, std::sqrt(2.0 / static_cast<double>(in * 9))));
    biases_.push_back(randn({out}, rng, 0.1));
    in = out;
  }
  taps_ = arch.taps;
}

std::vector<Tensor> FeatureExtractor::features(const Tensor& image) const {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw ShapeError("feature extractor expects an RGB image [3 x H x W], got " + shape_str(image.shape()));
  std::vector<Tensor> out;
  Tensor x = image;
  std::size_t next_tap = 0;
  for (std::size_t i = 0; i < kernels_.size() && next_tap < taps_.size(); ++i) {
    x = conv2d(x, kernels_[i], 2, 1);
    x = leaky_relu(x + expand(reshape(biases_[i], {biases_[i].numel(), 1, 1}), x.shape()), kExtractorSlope);
    if (taps_[next_tap] == i) {
      out.push_back(x);
      ++next_tap;
    }
  }
  return out;
}

Tensor FeatureExtractor::embedding(const Tensor& image) const { return pooled(features(image).back()); }

Extractors Extractors::standard(std::uint64_t seed) {
  Extractors fx;
  fx.perceptual.emplace(ExtractorKind::Perceptual, seed);
  fx.identity.emplace(ExtractorKind::Identity, seed);
  fx.parsing.emplace(ExtractorKind::Parsing, seed);
  return fx;
}

Tensor pixel_loss(const Tensor& a, const Tensor& b, PixelLoss kind, double beta) {
  require_same_shape(a, b, "pixel_loss");
  const Tensor diff = a - b;
  return kind == PixelLoss::L2 ? mean(square(diff)) : mean(smooth_l1(diff, beta));
}

Tensor perceptual_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& fx) {
  require_same_shape(a, b, "perceptual_loss");
  if (fx.kind() != ExtractorKind::Perceptual) throw ConfigError("perceptual_loss needs the perceptual extractor");
  const auto fa = fx.features(a);
  const auto fb = fx.features(b);
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < fa.size(); ++i) total = total + mean(square(channel_normalize(fa[i]) - channel_normalize(fb[i])));
  return total / static_cast<double>(fa.size());
}

Tensor sim_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& fx) {
  require_same_shape(a, b, "sim_loss");
  if (fx.kind() != ExtractorKind::Identity) throw ConfigError("sim_loss needs the identity extractor");
  return 1.0 - cosine_similarity(fx.embedding(a), fx.embedding(b), kFeatureEps);
}

Tensor parsing_tap_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& fx, std::size_t tap) {
  require_same_shape(a, b, "parsing_loss");
  if (fx.kind() != ExtractorKind::Parsing) throw ConfigError("parsing_loss needs the parsing extractor");
  const auto fa = fx.features(a);
  const auto fb = fx.features(b);
  if (tap >= fa.size()) throw std::out_of_range("parsing_tap_loss: tap index out of range");
  return 1.0 - cosine_similarity(pooled(fa[tap]), pooled(fb[tap]), kFeatureEps);
}

Tensor parsing_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& fx) {
  require_same_shape(a, b, "parsing_loss");
  if (fx.kind() != ExtractorKind::Parsing) throw ConfigError("parsing_loss needs the parsing extractor");
  const auto fa = fx.features(a);
  const auto fb = fx.features(b);
  Tensor total = Tensor::scalar(0.0);
  for (std::size_t i = 0; i < fa.size(); ++i)
    total = total + (1.0 - cosine_similarity(pooled(fa[i]), pooled(fb[i]), kFeatureEps));
  return total / static_cast<double>(fa.size());
}

CompositeLoss composite_loss(const Tensor& a, const Tensor& b, const LossWeights& w, const Extractors& fx) {
  require_same_shape(a, b, "composite_loss");
  CompositeLoss out;
  Tensor total;
  auto add = [&](double lambda, const Tensor& term, std::optional<double>& slot) {
    slot = term.item();
    const Tensor weighted = term * lambda;
    total = total.defined() ? total + weighted : weighted;
  };
  if (w.lambda1 > 0) add(w.lambda1, pixel_loss(a, b, w.pixel, w.beta), out.rec);
  if (w.lambda2 > 0) add(w.lambda2, perceptual_loss(a, b, need(fx.perceptual, "perceptual")), out.lpips);
  if (w.lambda3 > 0) add(w.lambda3, sim_loss(a, b, need(fx.identity, "identity")), out.sim);
  if (w.lambda4.value_or(0.0) > 0) add(*w.lambda4, parsing_loss(a, b, need(fx.parsing, "face-parsing")), out.fp);
  out.total = total.defined() ? total : Tensor::scalar(0.0);
  return out;
}

TotalLoss total_loss(const Tensor& target, const LatentCode& w, const GeneratorConfig& config,
                     const GeneratorParams& theta, const GeneratorParams& theta_prime, const LossWeights& weights,
                     const Extractors& fx, Rng& rng, std::uint64_t noise_seed, std::size_t batch) {
  if (batch == 0) throw ConfigError("localization batch must be at least 1");
  TotalLoss out;
  out.reconstruction = synthesize(config, w, theta_prime, noise_seed);
  out.image = composite_loss(target, out.reconstruction, weights, fx);
  Tensor total = out.image.total * weights.lambda_e;

  std::vector<Tensor> zs;
  for (std::size_t i = 0; i < batch; ++i) zs.push_back(randn({config.style_dim}, rng));
  if (weights.lambda_l > 0) {
    CompositeLoss loc;
    Tensor loc_total;
    for (const Tensor& z : zs) {
      const LatentCode wz{LatentSpace::W, stop_gradient(map_style(config, theta, z))};
      const Tensor reference = stop_gradient(synthesize(config, wz, theta, noise_seed));
      CompositeLoss term = composite_loss(reference, synthesize(config, wz, theta_prime, noise_seed), weights, fx);
      loc_total = loc_total.defined() ? loc_total + term.total : term.total;
      accumulate(loc.rec, term.rec);
      accumulate(loc.lpips, term.lpips);
      accumulate(loc.sim, term.sim);
      accumulate(loc.fp, term.fp);
    }
    const double inv = 1.0 / static_cast<double>(batch);
    for (auto* slot : {&loc.rec, &loc.lpips, &loc.sim, &loc.fp})
      if (*slot) **slot *= inv;
    loc.total = loc_total * inv;
    total = total + loc.total * weights.lambda_l;
    out.localization = std::move(loc);
  }
  out.total = total;
  return out;
}

}  // namespace gradmod
