#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gradmod/generator.hpp"
#include "gradmod/rng.hpp"
#include "gradmod/tensor.hpp"

namespace gradmod {

enum class PixelLoss { L2, SmoothL1 };

std::string to_string(PixelLoss p);
PixelLoss pixel_loss_from_string(const std::string& s);

/// Coefficients of the four-term image loss and of the two-term objective.
/// A disengaged lambda4 means the face-parsing term is not used at all.
struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 0.8;
  double lambda3 = 0.1;
  std::optional<double> lambda4 = 1.0;
  double lambda_e = 1.0;
  double lambda_l = 0.2;
  PixelLoss pixel = PixelLoss::L2;
  double beta = 0.1;

  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

enum class ExtractorKind { Perceptual, Identity, Parsing };

/// Fixed random-weight convnet (3x3 kernels, stride 2, leaky ReLU) that stands
/// in for a pretrained feature network. Its weights never require gradients.
class FeatureExtractor {
 public:
  FeatureExtractor(ExtractorKind kind, std::uint64_t seed);

  ExtractorKind kind() const { return kind_; }
  std::size_t depth() const { return kernels_.size(); }
  const std::vector<std::size_t>& taps() const { return taps_; }

  /// Activations at the tap points for an image [3 x H x W].
  std::vector<Tensor> features(const Tensor& image) const;
  /// Spatially pooled final activation.
  Tensor embedding(const Tensor& image) const;

 private:
  ExtractorKind kind_;
  std::vector<Tensor> kernels_;
  std::vector<Tensor> biases_;
  std::vector<std::size_t> taps_;
};

struct Extractors {
  std::optional<FeatureExtractor> perceptual;
  std::optional<FeatureExtractor> identity;
  std::optional<FeatureExtractor> parsing;

  /// All three kinds, each from its own sub-seed of `seed`.
  static Extractors standard(std::uint64_t seed);
};

Tensor pixel_loss(const Tensor& a, const Tensor& b, PixelLoss kind, double beta = 0.1);
Tensor perceptual_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& fx);
Tensor sim_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& fx);
Tensor parsing_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& fx);
/// 1 - cos on the pooled activations of a single tap point.
Tensor parsing_tap_loss(const Tensor& a, const Tensor& b, const FeatureExtractor& fx, std::size_t tap);

/// Value of the four-term loss plus its individual terms. Terms that were not
/// evaluated (zero or disabled weight) are empty.
struct CompositeLoss {
  Tensor total;
  std::optional<double> rec;
  std::optional<double> lpips;
  std::optional<double> sim;
  std::optional<double> fp;
};

/// lambda1 rec + lambda2 lpips + lambda3 sim + lambda4 FP between a reference
/// image `a` and a candidate `b`.
CompositeLoss composite_loss(const Tensor& a, const Tensor& b, const LossWeights& w, const Extractors& fx);

/// Two-term objective evaluated for one draw of localization latents.
struct TotalLoss {
  Tensor total;
  CompositeLoss image;                        // L(I, G(w, theta'))
  std::optional<CompositeLoss> localization;  // L(G(f(z), theta), G(f(z), theta')), averaged over the batch
  Tensor reconstruction;                      // G(w, theta')
};

/// lambda_e L(I, G(w,theta')) + lambda_l L(G(f(z),theta), G(f(z),theta')).
/// `batch` latents z ~ N(0, I) are drawn from `rng` on every call, even when
/// lambda_l is zero, so that the random stream does not depend on the weights.
TotalLoss total_loss(const Tensor& target, const LatentCode& w, const GeneratorConfig& config,
                     const GeneratorParams& theta, const GeneratorParams& theta_prime, const LossWeights& weights,
                     const Extractors& fx, Rng& rng, std::uint64_t noise_seed, std::size_t batch = 1);

}  // namespace gradmod
