#include "gradmod/gmm.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "gradmod/checkpoint.hpp"

namespace gradmod {

std::string to_string(Norm n) {
  switch (n) {
    case Norm::None: return "none";
    case Norm::Scale: return "sn";
    case Norm::Instance: return "in";
  }
  return "?";
}

Norm norm_from_string(const std::string& s) {
  if (s == "none" || s == "-") return Norm::None;
  if (s == "sn") return Norm::Scale;
  if (s == "in") return Norm::Instance;
  throw ConfigError("unknown normalization '" + s + "' (expected none, sn or in)");
}

namespace {

void require_matrix(const Tensor& y, const char* op) {
  if (y.ndim() != 2) throw ShapeError(std::string(op) + ": expected [rows x d], got " + shape_str(y.shape()));
}

Tensor row_broadcast(const Tensor& per_row, const Shape& shape) {
  return expand(reshape(per_row, {shape[0], 1}), shape);
}

Tensor normalize(const Tensor& y, Norm kind, const Tensor& scale) {
  switch (kind) {
    case Norm::None: return y;
    case Norm::Scale: return scale_norm(y, scale);
    case Norm::Instance: return instance_norm_1d(y);
  }
  return y;
}

}  // namespace

Tensor scale_norm(const Tensor& y, const Tensor& g) {
  require_matrix(y, "scale_norm");
  if (g.numel() != 1) throw ShapeError("scale_norm: gain must hold one element, got " + shape_str(g.shape()));
  const Tensor norms = clamp_min(l2_norm(y, 1), kNormEps);
  return y / row_broadcast(norms, y.shape()) * g;
}

Tensor instance_norm_1d(const Tensor& y) {
  require_matrix(y, "instance_norm_1d");
  if (y.dim(1) < 2) throw ShapeError("instance_norm_1d: rows need at least two features");
  const Tensor centered = y - row_broadcast(mean_axis(y, 1), y.shape());
  const Tensor stddev = clamp_min(sqrt(mean_axis(square(centered), 1)), kNormEps);
  return centered / row_broadcast(stddev, y.shape());
}

void GmmConfig::validate() const {
  if (blocks < 1) throw ConfigError("gmm.blocks must be at least 1");
}

std::vector<std::pair<std::string, Tensor>> GmmModule::named_parameters(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  if (pre_norm == Norm::Scale) out.emplace_back(prefix + "pre_scale", pre_scale);
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    const std::string p = prefix + "block" + std::to_string(l) + ".";
    const auto& blk = blocks[l];
    out.emplace_back(p + "w1", blk.w1);
    out.emplace_back(p + "w2", blk.w2);
    out.emplace_back(p + "b", blk.b);
    if (post_norm == Norm::Scale) {
      out.emplace_back(p + "sn1_scale", blk.sn1_scale);
      out.emplace_back(p + "sn2_scale", blk.sn2_scale);
    }
  }
  return out;
}

GmmModule make_gmm_module(std::size_t d_feat, std::size_t blocks, Norm pre_norm, Norm post_norm, Rng& rng) {
  if (d_feat == 0 || blocks == 0) throw ConfigError("GMM needs a positive feature width and at least one block");
  if ((pre_norm == Norm::Instance || post_norm == Norm::Instance) && d_feat < 2)
    throw ConfigError("instance normalization needs a feature width of at least 2");
  GmmModule m;
  m.d_feat = d_feat;
  m.pre_norm = pre_norm;
  m.post_norm = post_norm;
  const double d = static_cast<double>(d_feat);
  const double he_std = std::sqrt(2.0 / d) * 0.1;
  const double bias_bound = 1.0 / std::sqrt(d);
  if (pre_norm == Norm::Scale) m.pre_scale = Tensor::scalar(std::sqrt(d), true);
  for (std::size_t l = 0; l < blocks; ++l) {
    GmmBlockParams blk;
    blk.w1 = randn({d_feat, d_feat}, rng, he_std, true);
    blk.w2 = randn({d_feat, d_feat}, rng, he_std, true);
    blk.b = rand_uniform({d_feat}, rng, -bias_bound, bias_bound, true);
    if (post_norm == Norm::Scale) {
      blk.sn1_scale = Tensor::scalar(std::sqrt(d), true);
      blk.sn2_scale = Tensor::scalar(std::sqrt(d), true);
    }
    m.blocks.push_back(std::move(blk));
  }
  return m;
}

Tensor gmm_forward(const GmmModule& module, const Tensor& y0) {
  require_matrix(y0, "gmm_forward");
  if (y0.dim(1) != module.d_feat)
    throw ShapeError("gmm_forward: input " + shape_str(y0.shape()) + " does not match feature width " +
                     std::to_string(module.d_feat));
  Tensor y = normalize(stop_gradient(y0), module.pre_norm, module.pre_scale);
  for (const auto& blk : module.blocks) {
    Tensor h = leaky_relu(normalize(y, module.post_norm, blk.sn1_scale), kGmmSlope);
    h = leaky_relu(normalize(matmul(h, blk.w1), module.post_norm, blk.sn2_scale), kGmmSlope);
    const Tensor r = matmul(h, blk.w2) + expand(reshape(blk.b, {1, module.d_feat}), y.shape());
    y = y + r;
  }
  return y;
}

LayerView layer_view(const Shape& shape) {
  if (shape.empty()) throw ShapeError("layer_view: empty shape");
  return {shape[0], numel(shape) / shape[0]};
}

std::vector<std::string> GmmSet::layers() const {
  std::vector<std::string> out;
  for (const auto& [layer, group] : layer_to_group) out.push_back(layer);
  return out;
}

const GmmModule& GmmSet::module_for(const std::string& layer) const {
  auto it = layer_to_group.find(layer);
  if (it == layer_to_group.end()) throw ConfigError("no gradient-modification module for layer '" + layer + "'");
  return *modules.at(it->second);
}

std::vector<std::pair<std::string, Tensor>> GmmSet::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [group, module] : modules) {
    auto named = module->named_parameters(group + ".");
    out.insert(out.end(), named.begin(), named.end());
  }
  return out;
}

std::size_t GmmSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters()) n += t.numel();
  return n;
}

std::uint64_t GmmSet::fingerprint() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& [name, t] : parameters()) h = gradmod::fingerprint(t, h);
  return h;
}

GmmSet GmmSet::clone() const {
  GmmSet out;
  out.layer_to_group = layer_to_group;
  out.layer_reshape = layer_reshape;
  auto copy = [](const Tensor& t) { return t.defined() ? t.clone().set_requires_grad(true) : Tensor(); };
  for (const auto& [group, module] : modules) {
    auto m = std::make_shared<GmmModule>(*module);
    m->pre_scale = copy(module->pre_scale);
    for (auto& blk : m->blocks) {
      blk.w1 = copy(blk.w1);
      blk.w2 = copy(blk.w2);
      blk.b = copy(blk.b);
      blk.sn1_scale = copy(blk.sn1_scale);
      blk.sn2_scale = copy(blk.sn2_scale);
    }
    out.modules[group] = std::move(m);
  }
  return out;
}

std::string group_id_for(std::size_t d_feat) { return "d" + std::to_string(d_feat); }

GmmSet build_gmm_set(const GeneratorConfig& gen_config, const GeneratorParams& theta, const GmmConfig& config,
                     std::uint64_t seed) {
  config.validate();
  Rng rng = make_rng(seed, Stream::GmmInit);
  GmmSet set;
  for (const std::string& layer : tunable_layers(gen_config, config.layers)) {
    const LayerView view = layer_view(theta.at(layer).shape());
    const std::string group = group_id_for(view.d_feat);
    if (!set.modules.count(group)) {
      set.modules[group] = std::make_shared<GmmModule>(
          make_gmm_module(view.d_feat, config.blocks, config.pre_norm, config.post_norm, rng));
    }
    set.layer_to_group[layer] = group;
    set.layer_reshape[layer] = view;
  }
  return set;
}

GeneratorParams apply_update(const GeneratorParams& theta, const GmmSet& gmms, const LayerGrads& grads) {
  for (const auto& [layer, g] : grads)
    if (!gmms.layer_to_group.count(layer)) throw ConfigError("gradient supplied for untuned layer '" + layer + "'");
  GeneratorParams out;
  out.frozen = false;
  for (const auto& [name, value] : theta.tensors) {
    auto group = gmms.layer_to_group.find(name);
    if (group == gmms.layer_to_group.end()) {
      out.tensors[name] = value;
      continue;
    }
    auto g = grads.find(name);
    if (g == grads.end()) throw ConfigError("missing gradient for tuned layer '" + name + "'");
    if (g->second.shape() != value.shape())
      throw ShapeError("gradient for '" + name + "' has shape " + shape_str(g->second.shape()) + ", layer is " +
                       shape_str(value.shape()));
    const LayerView view = gmms.layer_reshape.at(name);
    const Tensor y0 = reshape(stop_gradient(g->second), {view.rows, view.d_feat});
    const Tensor delta = reshape(gmm_forward(*gmms.modules.at(group->second), y0), value.shape());
    out.tensors[name] = value * (delta + 1.0);
  }
  for (const auto& [layer, group] : gmms.layer_to_group)
    if (!theta.contains(layer)) throw ConfigError("tuned layer '" + layer + "' is not a generator parameter");
  return out;
}

void save_gmm_set(const GmmSet& gmms, const std::filesystem::path& path) {
  Checkpoint ckpt;
  ckpt.kind = "gmm";
  for (const auto& [group, m] : gmms.modules) {
    ckpt.meta["group." + group] = std::to_string(m->d_feat) + "," + std::to_string(m->blocks.size()) + "," +
                                  to_string(m->pre_norm) + "," + to_string(m->post_norm);
  }
  for (const auto& [layer, group] : gmms.layer_to_group) {
    const LayerView v = gmms.layer_reshape.at(layer);
    ckpt.meta["layer." + layer] = group + "," + std::to_string(v.rows) + "," + std::to_string(v.d_feat);
  }
  for (const auto& [name, t] : gmms.parameters()) ckpt.tensors[name] = t;
  save_checkpoint(ckpt, path);
}

GmmSet load_gmm_set(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.kind != "gmm") throw IoError(path.string() + " holds a '" + ckpt.kind + "' checkpoint");
  auto fields = [](const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string tok; std::getline(is, tok, ',');) out.push_back(tok);
    return out;
  };
  auto tensor = [&](const std::string& name) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) throw IoError(path.string() + ": missing tensor '" + name + "'");
    return it->second.clone().set_requires_grad(true);
  };
  GmmSet set;
  for (const auto& [key, value] : ckpt.meta) {
    const auto f = fields(value);
    if (key.rfind("group.", 0) == 0) {
      if (f.size() != 4) throw IoError(path.string() + ": malformed entry " + key);
      const std::string group = key.substr(6);
      auto m = std::make_shared<GmmModule>();
      m->d_feat = std::stoul(f[0]);
      m->pre_norm = norm_from_string(f[2]);
      m->post_norm = norm_from_string(f[3]);
      if (m->pre_norm == Norm::Scale) m->pre_scale = tensor(group + ".pre_scale");
      const std::size_t n_blocks = std::stoul(f[1]);
      for (std::size_t l = 0; l < n_blocks; ++l) {
        const std::string p = group + ".block" + std::to_string(l) + ".";
        GmmBlockParams blk{tensor(p + "w1"), tensor(p + "w2"), tensor(p + "b"), {}, {}};
        if (m->post_norm == Norm::Scale) {
          blk.sn1_scale = tensor(p + "sn1_scale");
          blk.sn2_scale = tensor(p + "sn2_scale");
        }
        m->blocks.push_back(std::move(blk));
      }
      set.modules[group] = std::move(m);
    } else if (key.rfind("layer.", 0) == 0) {
      if (f.size() != 3) throw IoError(path.string() + ": malformed entry " + key);
      const std::string layer = key.substr(6);
      set.layer_to_group[layer] = f[0];
      set.layer_reshape[layer] = {std::stoul(f[1]), std::stoul(f[2])};
    }
  }
  for (const auto& [layer, group] : set.layer_to_group)
    if (!set.modules.count(group)) throw IoError(path.string() + ": layer '" + layer + "' refers to unknown group");
  return set;
}

}  // namespace gradmod
