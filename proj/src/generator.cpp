#include "gradmod/generator.hpp"

#include <cmath>
#include <sstream>

#include "gradmod/checkpoint.hpp"
#include "gradmod/rng.hpp"

namespace gradmod {

namespace {

constexpr double kMappingSlope = 0.2;
const double kActGain = std::sqrt(2.0);
// Keeps the pre-tanh RGB sum mostly inside the linear range of tanh.
constexpr double kRgbGain = 0.35;

std::string block_prefix(std::size_t b) { return "synthesis.b" + std::to_string(b); }
std::string conv_prefix(std::size_t b, std::size_t j) { return block_prefix(b) + ".conv" + std::to_string(j); }
std::string rgb_prefix(std::size_t b) { return block_prefix(b) + ".torgb"; }

std::size_t conv_in_channels(const GeneratorConfig& c, std::size_t b, std::size_t j) {
  return (b > 0 && j == 0) ? c.widths[b - 1] : c.widths[b];
}

// Equalized-learning-rate linear layer: weight [in x out] scaled by 1/sqrt(in).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const double gain = 1.0 / std::sqrt(static_cast<double>(weight.dim(0)));
  const Tensor row = reshape(x, {1, x.numel()});
  return reshape(matmul(row, weight), {weight.dim(1)}) * gain + bias;
}

Tensor style_for(const GeneratorParams& p, const std::string& prefix, const Tensor& w) {
  return linear(w, p.at(prefix + ".affine.weight"), p.at(prefix + ".affine.bias"));
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  return x + expand(reshape(bias, {bias.numel(), 1, 1}), x.shape());
}

}  // namespace

std::size_t GeneratorConfig::num_style_layers() const {
  std::size_t n = 0;
  for (std::size_t b = 0; b < num_blocks(); ++b) n += convs_in_block(b) + 1;
  return n;
}

void GeneratorConfig::validate() const {
  if (style_dim == 0) throw ConfigError("generator.style_dim must be positive");
  if (mapping_layers == 0) throw ConfigError("generator.mapping_layers must be positive");
  if (base_resolution < 2) throw ConfigError("generator.base_resolution must be at least 2");
  if (widths.empty()) throw ConfigError("generator.widths must list at least one block");
  for (std::size_t w : widths)
    if (w == 0) throw ConfigError("generator.widths entries must be positive");
  if (!(noise_strength >= 0)) throw ConfigError("generator.noise_strength must be non-negative");
}

const Tensor& GeneratorParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ConfigError("unknown generator layer '" + name + "'");
  return it->second;
}

std::uint64_t GeneratorParams::fingerprint() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& [name, t] : tensors) {
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    h = gradmod::fingerprint(t, h);
  }
  return h;
}

GeneratorParams init_generator_params(const GeneratorConfig& c, std::uint64_t seed) {
  c.validate();
  Rng rng = make_rng(seed, Stream::GeneratorInit);
  GeneratorParams p;
  auto& t = p.tensors;
  const std::size_t d = c.style_dim;
  for (std::size_t i = 0; i < c.mapping_layers; ++i) {
    const std::string pre = "mapping." + std::to_string(i);
    t[pre + ".weight"] = randn({d, d}, rng);
    t[pre + ".bias"] = randn({d}, rng, 0.1);
  }
  t["synthesis.const"] = randn({c.widths[0], c.base_resolution, c.base_resolution}, rng);
  for (std::size_t b = 0; b < c.num_blocks(); ++b) {
    for (std::size_t j = 0; j < c.convs_in_block(b); ++j) {
      const std::string pre = conv_prefix(b, j);
      const std::size_t cin = conv_in_channels(c, b, j);
      t[pre + ".affine.weight"] = randn({d, cin}, rng);
      t[pre + ".affine.bias"] = Tensor::full({cin}, 1.0);
      t[pre + ".weight"] = randn({c.widths[b], cin, 3, 3}, rng);
      t[pre + ".bias"] = randn({c.widths[b]}, rng, 0.1);
    }
    const std::string pre = rgb_prefix(b);
    t[pre + ".affine.weight"] = randn({d, c.widths[b]}, rng);
    t[pre + ".affine.bias"] = Tensor::full({c.widths[b]}, 1.0);
    t[pre + ".weight"] = randn({3, c.widths[b], 1, 1}, rng);
    t[pre + ".bias"] = Tensor::zeros({3});
  }
  return p;
}

std::vector<std::string> tunable_layers(const GeneratorConfig& c, LayerSelection selection) {
  std::vector<std::string> out;
  if (selection == LayerSelection::Synthesis) out.push_back("synthesis.const");
  for (std::size_t b = 0; b < c.num_blocks(); ++b) {
    for (std::size_t j = 0; j < c.convs_in_block(b); ++j) {
      if (selection == LayerSelection::Synthesis) out.push_back(conv_prefix(b, j) + ".affine.weight");
      out.push_back(conv_prefix(b, j) + ".weight");
    }
    if (selection == LayerSelection::Synthesis) out.push_back(rgb_prefix(b) + ".affine.weight");
    if (selection != LayerSelection::Conv) out.push_back(rgb_prefix(b) + ".weight");
  }
  return out;
}

Generator make_generator(const GeneratorConfig& config, std::uint64_t seed) {
  return Generator{config, init_generator_params(config, seed)};
}

Tensor map_style(const GeneratorConfig& c, const GeneratorParams& p, const Tensor& z) {
  if (z.numel() != c.style_dim || z.ndim() != 1)
    throw ShapeError("map_style: expected z of shape [" + std::to_string(c.style_dim) + "], got " +
                     shape_str(z.shape()));
  // Pixel norm, then the MLP.
  Tensor x = z / sqrt(mean(square(z)) + 1e-8);
  for (std::size_t i = 0; i < c.mapping_layers; ++i) {
    const std::string pre = "mapping." + std::to_string(i);
    x = leaky_relu(linear(x, p.at(pre + ".weight"), p.at(pre + ".bias")), kMappingSlope) * kActGain;
  }
  return x;
}

LatentCode to_wplus(const GeneratorConfig& c, const LatentCode& w) {
  if (w.space == LatentSpace::WPlus) return w;
  if (w.space != LatentSpace::W) throw ConfigError("to_wplus: expected a W code; map Z codes through map_style first");
  if (w.values.ndim() != 1 || w.values.numel() != c.style_dim)
    throw ShapeError("to_wplus: W code of shape " + shape_str(w.values.shape()) + " does not match style_dim " +
                     std::to_string(c.style_dim));
  const std::size_t n = c.num_style_layers();
  return {LatentSpace::WPlus, expand(reshape(w.values, {1, c.style_dim}), {n, c.style_dim})};
}

Tensor modulate_kernel(const Tensor& kernel, const Tensor& style, bool demodulate) {
  if (kernel.ndim() != 4 || style.numel() != kernel.dim(1))
    throw ShapeError("modulated_conv: style of " + std::to_string(style.numel()) + " entries for kernel " +
                     shape_str(kernel.shape()));
  const std::size_t o = kernel.dim(0), ckk = kernel.numel() / o;
  Tensor k = kernel * expand(reshape(style, {1, style.numel(), 1, 1}), kernel.shape());
  if (!demodulate) return k;
  const Tensor flat = reshape(k, {o, ckk});
  const Tensor norm = sqrt(sum_axis(square(flat), 1) + kDemodEps);
  return reshape(flat / expand(reshape(norm, {o, 1}), {o, ckk}), kernel.shape());
}

Tensor modulated_conv(const Tensor& x, const Tensor& kernel, const Tensor& style, bool demodulate) {
  const std::size_t k = kernel.ndim() == 4 ? kernel.dim(2) : 0;
  if (k % 2 == 0) throw ShapeError("modulated_conv: kernel " + shape_str(kernel.shape()) + " must be odd-sized");
  return conv2d(x, modulate_kernel(kernel, style, demodulate), 1, (k - 1) / 2);
}

Tensor synthesize(const GeneratorConfig& c, const LatentCode& w, const GeneratorParams& p, std::uint64_t noise_seed) {
  if (w.space == LatentSpace::Z) throw ConfigError("synthesize: Z codes must be mapped to W first");
  const std::size_t n_layers = c.num_style_layers();
  if (w.space == LatentSpace::W && (w.values.ndim() != 1 || w.values.numel() != c.style_dim))
    throw ShapeError("synthesize: W code of shape " + shape_str(w.values.shape()) + " for style_dim " +
                     std::to_string(c.style_dim));
  if (w.space == LatentSpace::WPlus && w.values.shape() != Shape{n_layers, c.style_dim})
    throw ShapeError("synthesize: W+ code of shape " + shape_str(w.values.shape()) + ", expected " +
                     shape_str({n_layers, c.style_dim}));

  std::size_t layer = 0;
  auto next_style = [&]() { return w.space == LatentSpace::W ? w.values : select(w.values, layer); };

  Rng noise_rng = make_rng(noise_seed, Stream::Noise);
  Tensor x = p.at("synthesis.const");
  Tensor rgb;
  for (std::size_t b = 0; b < c.num_blocks(); ++b) {
    if (b > 0) x = upsample_nearest2x(x);
    const std::size_t res = x.dim(1);
    for (std::size_t j = 0; j < c.convs_in_block(b); ++j) {
      const std::string pre = conv_prefix(b, j);
      const Tensor style = style_for(p, pre, next_style());
      ++layer;
      x = modulated_conv(x, p.at(pre + ".weight"), style, true);
      const Tensor noise = randn({1, res, res}, noise_rng, c.noise_strength);
      x = x + expand(noise, x.shape());
      x = leaky_relu(add_channel_bias(x, p.at(pre + ".bias")), kMappingSlope) * kActGain;
    }
    const std::string pre = rgb_prefix(b);
    const Tensor style = style_for(p, pre, next_style());
    ++layer;
    const double gain = kRgbGain / std::sqrt(static_cast<double>(c.widths[b]));
    Tensor y = add_channel_bias(modulated_conv(x, p.at(pre + ".weight"), style, false) * gain, p.at(pre + ".bias"));
    rgb = b == 0 ? y : upsample_nearest2x(rgb) + y;
  }
  return tanh(rgb);
}

void save_generator(const Generator& gen, const std::filesystem::path& path) {
  Checkpoint ckpt;
  ckpt.kind = "generator";
  const auto& c = gen.config;
  ckpt.meta["style_dim"] = std::to_string(c.style_dim);
  ckpt.meta["mapping_layers"] = std::to_string(c.mapping_layers);
  ckpt.meta["base_resolution"] = std::to_string(c.base_resolution);
  std::ostringstream widths;
  for (std::size_t i = 0; i < c.widths.size(); ++i) widths << (i ? "," : "") << c.widths[i];
  ckpt.meta["widths"] = widths.str();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", c.noise_strength);
  ckpt.meta["noise_strength"] = buf;
  ckpt.tensors = gen.params.tensors;
  save_checkpoint(ckpt, path);
}

Generator load_generator(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "generator") throw IoError(path.string() + " holds a '" + ckpt.kind + "' checkpoint");
  auto meta = [&](const std::string& k) -> const std::string& {
    auto it = ckpt.meta.find(k);
    if (it == ckpt.meta.end()) throw IoError(path.string() + ": missing metadata '" + k + "'");
    return it->second;
  };
  Generator gen;
  gen.config.style_dim = std::stoul(meta("style_dim"));
  gen.config.mapping_layers = std::stoul(meta("mapping_layers"));
  gen.config.base_resolution = std::stoul(meta("base_resolution"));
  gen.config.widths.clear();
  std::istringstream ws(meta("widths"));
  for (std::string tok; std::getline(ws, tok, ',');) gen.config.widths.push_back(std::stoul(tok));
  gen.config.noise_strength = std::strtod(meta("noise_strength").c_str(), nullptr);
  gen.config.validate();
  gen.params.tensors = std::move(ckpt.tensors);
  const GeneratorParams reference = init_generator_params(gen.config, 0);
  for (const auto& [name, t] : reference.tensors) {
    if (!gen.params.contains(name)) throw IoError(path.string() + ": missing layer '" + name + "'");
    if (gen.params.at(name).shape() != t.shape())
      throw IoError(path.string() + ": layer '" + name + "' has shape " + shape_str(gen.params.at(name).shape()));
  }
  return gen;
}

std::string to_string(LatentSpace space) {
  switch (space) {
    case LatentSpace::Z: return "z";
    case LatentSpace::W: return "w";
    case LatentSpace::WPlus: return "wplus";
  }
  return "?";
}

LatentSpace latent_space_from_string(const std::string& s) {
  if (s == "z") return LatentSpace::Z;
  if (s == "w") return LatentSpace::W;
  if (s == "wplus") return LatentSpace::WPlus;
  throw ConfigError("unknown latent space '" + s + "' (expected z, w or wplus)");
}

std::string to_string(LayerSelection sel) {
  switch (sel) {
    case LayerSelection::Conv: return "conv";
    case LayerSelection::ConvToRgb: return "conv_torgb";
    case LayerSelection::Synthesis: return "synthesis";
  }
  return "?";
}

LayerSelection layer_selection_from_string(const std::string& s) {
  if (s == "conv") return LayerSelection::Conv;
  if (s == "conv_torgb") return LayerSelection::ConvToRgb;
  if (s == "synthesis") return LayerSelection::Synthesis;
  throw ConfigError("unknown layer selection '" + s + "' (expected conv, conv_torgb or synthesis)");
}

}  // namespace gradmod
