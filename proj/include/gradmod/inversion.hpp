#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gradmod/generator.hpp"
#include "gradmod/gmm.hpp"
#include "gradmod/losses.hpp"
#include "gradmod/optimizer.hpp"
#include "gradmod/tensor.hpp"

namespace gradmod {

/// Raised when a loss turns NaN or infinite during an inversion run.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Image to invert. Synthetic targets remember the code that produced them.
struct Target {
  Tensor image;
  std::optional<LatentCode> latent;
};

/// Target synthesized from a held-out latent z drawn from `seed`. For W+ the
/// mapped code is replicated to every layer. A positive `out_of_range_std`
/// adds pixel noise (then clamps to [-1, 1]) so the target leaves the
/// generator's range.
Target make_synthetic_target(const Generator& gen, LatentSpace space, std::uint64_t seed, std::uint64_t noise_seed,
                             double out_of_range_std = 0.0);

enum class InitMode { Oracle, Projection };

std::string to_string(InitMode m);
InitMode init_mode_from_string(const std::string& s);

struct InitOptions {
  InitMode mode = InitMode::Oracle;
  LatentSpace space = LatentSpace::WPlus;
  /// Oracle mode: std of the Gaussian perturbation added to the true code.
  double perturbation_std = 0.5;
  /// Projection mode: descent steps and Adam learning rate.
  std::size_t projection_steps = 200;
  double projection_lr = 0.01;

  bool operator==(const InitOptions&) const = default;
};

struct ProjectionResult {
  LatentCode code;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Plain latent descent on pixel L2 + 0.8 perceptual with theta frozen,
/// starting from the mean mapped code.
ProjectionResult project_latent(const Tensor& target, const Generator& gen, const InitOptions& options,
                                const Extractors& fx, std::uint64_t noise_seed);

/// Initial code for an inversion. Oracle mode needs a synthetic target.
LatentCode init_latent(const Target& target, const Generator& gen, const InitOptions& options, const Extractors& fx,
                       std::uint64_t seed, std::uint64_t noise_seed);

struct InversionSettings {
  std::size_t iterations = 300;
  LossWeights weights;
  OptimizerConfig optimizer;
  GmmConfig gmm;
  std::size_t localization_batch = 1;
  std::uint64_t localization_seed = 0;
  std::uint64_t noise_seed = 0;
  std::uint64_t evaluation_seed = 0;
  std::size_t locality_samples = 8;
  /// Locality is scored every `locality_every` iterations (0: never inside
  /// the loop) and always on the returned parameters.
  std::size_t locality_every = 0;
  /// Reconstruction MSE threshold for the matched-loss comparison.
  std::optional<double> match_mse;
  /// Stop at the first iteration whose reconstruction MSE reaches match_mse.
  bool stop_at_match = false;

  void validate() const;
};

/// One optimization step. Losses are those evaluated before the update.
struct TraceRow {
  std::size_t iteration = 0;
  double total = 0.0;
  double image_loss = 0.0;
  std::optional<double> localization_loss;
  std::optional<double> rec, lpips, sim, fp;
  double recon_mse = 0.0;
  std::optional<double> locality;
};

inline constexpr const char* kTraceCsvHeader =
    "iteration,total,image_loss,localization_loss,rec,lpips,sim,fp,recon_mse,locality_score";

std::string format_trace_row(const TraceRow& row);

struct InversionResult {
  /// Tuned parameters (detached copies). When the run stopped at the match
  /// threshold these are the parameters that reached it.
  GeneratorParams theta_prime;
  std::vector<TraceRow> trace;
  double initial_mse = 0.0;  // MSE(I, G(w, theta))
  double final_mse = 0.0;    // MSE(I, G(w, theta_prime))
  double locality = 0.0;     // locality_score of theta_prime
  std::optional<std::size_t> matched_iteration;
  std::optional<GeneratorParams> matched_theta;
  std::optional<double> matched_locality;
};

/// Gradient of the image loss L(I, G(w, theta)) with respect to each layer.
LayerGrads probe_gradients(const Tensor& target, const LatentCode& w, const Generator& gen,
                           const std::vector<std::string>& layers, const LossWeights& weights, const Extractors& fx,
                           std::uint64_t noise_seed);

/// Gradient-modification inversion. `gmms` is trained in place; theta and w
/// are never modified.
InversionResult run_inversion(const Generator& gen, const Tensor& target, const LatentCode& w, GmmSet& gmms,
                              const InversionSettings& settings, const Extractors& fx);

/// Direct fine-tuning of the selected layers with the same objective and
/// optimizer.
InversionResult run_baseline_pti(const Generator& gen, const Tensor& target, const LatentCode& w,
                                 const InversionSettings& settings, const Extractors& fx);

/// Mean MSE between G(f(z), theta) and G(f(z), theta_prime) over held-out z
/// drawn from the evaluation stream of `seed`.
double locality_score(const GeneratorConfig& config, const GeneratorParams& theta, const GeneratorParams& theta_prime,
                      std::size_t n_samples, std::uint64_t seed, std::uint64_t noise_seed);

/// w + magnitude * direction. For W+ codes only rows [first_layer, last_layer)
/// move (all rows by default).
LatentCode edit_latent(const LatentCode& w, const Tensor& direction, double magnitude, std::size_t first_layer = 0,
                       std::optional<std::size_t> last_layer = std::nullopt);

/// `count` orthonormal directions in R^d (Gram-Schmidt on Gaussian draws).
std::vector<Tensor> orthonormal_directions(std::size_t d, std::size_t count, std::uint64_t seed);

/// Detached copy of every tensor.
GeneratorParams detach(const GeneratorParams& params);

}  // namespace gradmod
