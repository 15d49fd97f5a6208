#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gradmod/generator.hpp"
#include "gradmod/rng.hpp"
#include "gradmod/tensor.hpp"

namespace gradmod {

enum class Norm { None, Scale, Instance };

std::string to_string(Norm n);
Norm norm_from_string(const std::string& s);

inline constexpr double kNormEps = 1e-6;
inline constexpr double kGmmSlope = 0.01;

/// Row-wise g * r / max(|r|_2, eps) for y [rows x d]; `g` holds one element.
Tensor scale_norm(const Tensor& y, const Tensor& g);

/// Row-wise (r - mean(r)) / max(std(r), eps), population std, no affine.
Tensor instance_norm_1d(const Tensor& y);

struct GmmConfig {
  std::size_t blocks = 1;
  Norm pre_norm = Norm::None;
  Norm post_norm = Norm::Scale;
  LayerSelection layers = LayerSelection::ConvToRgb;

  void validate() const;
  bool operator==(const GmmConfig&) const = default;
};

struct GmmBlockParams {
  Tensor w1;         // [d x d]
  Tensor w2;         // [d x d]
  Tensor b;          // [d]
  Tensor sn1_scale;  // [1], only with post_norm == Scale
  Tensor sn2_scale;  // [1], only with post_norm == Scale
};

/// Residual MLP mapping a reshaped layer gradient [rows x d_feat] to a
/// multiplicative parameter correction of the same shape.
struct GmmModule {
  std::size_t d_feat = 0;
  Norm pre_norm = Norm::None;
  Norm post_norm = Norm::Scale;
  Tensor pre_scale;  // [1], only with pre_norm == Scale
  std::vector<GmmBlockParams> blocks;

  /// Trainable tensors with stable names relative to `prefix`.
  std::vector<std::pair<std::string, Tensor>> named_parameters(const std::string& prefix = "") const;
};

/// Fresh module: W1/W2 He-normal scaled by 0.1, b ~ U(-1/sqrt(d), 1/sqrt(d)),
/// scale-norm gains sqrt(d).
GmmModule make_gmm_module(std::size_t d_feat, std::size_t blocks, Norm pre_norm, Norm post_norm, Rng& rng);

/// y_{l+1} = y_l + W2 s(N2(W1 s(N1(y_l)))) + b for each block, after the
/// optional input normalization. The input is treated as a constant.
Tensor gmm_forward(const GmmModule& module, const Tensor& y0);

struct LayerView {
  std::size_t rows = 0;
  std::size_t d_feat = 0;
  bool operator==(const LayerView&) const = default;
};

/// Layer view used for a parameter tensor: the leading axis gives the rows,
/// everything else is flattened into the feature width.
LayerView layer_view(const Shape& shape);

/// Modules for every tuned layer. Layers with equal feature width share one
/// module instance (the same shared_ptr), so updating a group's parameters is
/// visible from every layer in it.
struct GmmSet {
  std::map<std::string, std::shared_ptr<GmmModule>> modules;  // group id -> module
  std::map<std::string, std::string> layer_to_group;
  std::map<std::string, LayerView> layer_reshape;

  std::vector<std::string> layers() const;
  const GmmModule& module_for(const std::string& layer) const;
  std::vector<std::pair<std::string, Tensor>> parameters() const;
  std::size_t parameter_count() const;
  std::uint64_t fingerprint() const;
  /// Deep copy with unshared tensors (same grouping).
  GmmSet clone() const;
};

std::string group_id_for(std::size_t d_feat);

GmmSet build_gmm_set(const GeneratorConfig& gen_config, const GeneratorParams& theta, const GmmConfig& config,
                     std::uint64_t seed);

using LayerGrads = std::map<std::string, Tensor>;

/// theta'_i = theta_i * (1 + M_i(dL/dtheta_i)) for every tuned layer; all
/// other layers pass through. `grads` must cover exactly the tuned layers.
GeneratorParams apply_update(const GeneratorParams& theta, const GmmSet& gmms, const LayerGrads& grads);

void save_gmm_set(const GmmSet& gmms, const std::filesystem::path& path);
GmmSet load_gmm_set(const std::filesystem::path& path);

}  // namespace gradmod
