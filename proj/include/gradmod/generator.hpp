#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gradmod/tensor.hpp"

namespace gradmod {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class LatentSpace { Z, W, WPlus };

/// Style code. Z and W codes hold a [d] vector; W+ codes hold one row per
/// style-consuming synthesis layer, [n_layers x d].
struct LatentCode {
  LatentSpace space = LatentSpace::W;
  Tensor values;
};

struct GeneratorConfig {
  std::size_t style_dim = 64;
  std::size_t mapping_layers = 3;
  std::size_t base_resolution = 4;
  std::vector<std::size_t> widths{64, 64, 32, 16};
  /// Amplitude of the per-layer injected noise maps.
  double noise_strength = 0.1;

  std::size_t num_blocks() const { return widths.size(); }
  std::size_t final_resolution() const { return base_resolution << (num_blocks() - 1); }
  /// Number of convolutions in block `b`: one at the base, two afterwards.
  std::size_t convs_in_block(std::size_t b) const { return b == 0 ? 1 : 2; }
  /// Style-consuming layers: every modulated conv plus every to-RGB layer.
  std::size_t num_style_layers() const;
  void validate() const;

  bool operator==(const GeneratorConfig&) const = default;
};

/// Which generator parameters receive a gradient-modification module.
enum class LayerSelection {
  Conv,        // modulated-conv kernels
  ConvToRgb,   // modulated-conv and to-RGB kernels
  Synthesis,   // every synthesis weight matrix, including style affines and the constant input
};

/// Named generator parameters. `frozen` means the tensors are never marked
/// for differentiation; gradients with respect to them come from explicit
/// probe copies.
struct GeneratorParams {
  std::map<std::string, Tensor> tensors;
  bool frozen = true;

  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
  /// Order-sensitive fingerprint of every value.
  std::uint64_t fingerprint() const;
};

GeneratorParams init_generator_params(const GeneratorConfig& config, std::uint64_t seed);

/// Layer ids in synthesis order for the given selection.
std::vector<std::string> tunable_layers(const GeneratorConfig& config, LayerSelection selection);

struct Generator {
  GeneratorConfig config;
  GeneratorParams params;
};

Generator make_generator(const GeneratorConfig& config, std::uint64_t seed);

/// Style mapping f: Z -> W.
Tensor map_style(const GeneratorConfig& config, const GeneratorParams& params, const Tensor& z);

/// Replicates a W code to every style layer; W+ codes pass through.
LatentCode to_wplus(const GeneratorConfig& config, const LatentCode& w);

/// G(w, theta): RGB image [3 x R x R] with values in [-1, 1]. `noise_seed`
/// fixes the injected per-layer noise.
Tensor synthesize(const GeneratorConfig& config, const LatentCode& w, const GeneratorParams& params,
                  std::uint64_t noise_seed);

/// Kernel [O,C,k,k] scaled per input channel by `style` [C], optionally
/// demodulated to unit L2 norm per output filter, then applied to x [C,H,W]
/// with same-size padding.
Tensor modulated_conv(const Tensor& x, const Tensor& kernel, const Tensor& style, bool demodulate = true);

/// The modulated and (optionally) demodulated kernel that modulated_conv applies.
Tensor modulate_kernel(const Tensor& kernel, const Tensor& style, bool demodulate);

inline constexpr double kDemodEps = 1e-8;

void save_generator(const Generator& gen, const std::filesystem::path& path);
Generator load_generator(const std::filesystem::path& path);

std::string to_string(LatentSpace space);
LatentSpace latent_space_from_string(const std::string& s);
std::string to_string(LayerSelection sel);
LayerSelection layer_selection_from_string(const std::string& s);

}  // namespace gradmod
