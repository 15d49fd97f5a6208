#include "gradmod/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "gradmod/metrics.hpp"

namespace gradmod {

namespace {

using Flat = std::map<std::string, std::string>;

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

[[noreturn]] void type_error(const std::string& key, const char* expected, const std::string& value) {
  throw ConfigError("config key '" + key + "': expected " + expected + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (s.empty() || end != begin + s.size() || errno == ERANGE) type_error(key, "a number", s);
  return v;
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
    type_error(key, "a non-negative integer", s);
  errno = 0;
  const unsigned long long v = std::strtoull(s.c_str(), nullptr, 10);
  if (errno == ERANGE) type_error(key, "a non-negative integer", s);
  return v;
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  type_error(key, "true or false", s);
}

// Wraps enum parsers so their errors name the key.
template <class F>
auto named(const std::string& key, const std::string& value, F parse) {
  try {
    return parse(value);
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

std::string join_widths(const std::vector<std::size_t>& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) s += (i ? "," : "") + std::to_string(w[i]);
  return s;
}

std::vector<std::size_t> split_widths(const std::string& key, const std::string& s) {
  std::vector<std::size_t> out;
  std::istringstream is(s);
  for (std::string tok; std::getline(is, tok, ',');) {
    tok.erase(std::remove_if(tok.begin(), tok.end(), [](unsigned char c) { return std::isspace(c); }), tok.end());
    out.push_back(static_cast<std::size_t>(to_u64(key, tok)));
  }
  if (out.empty()) type_error(key, "a comma-separated list of widths", s);
  return out;
}

std::vector<Field> fields(ExperimentConfig& c) {
  std::vector<Field> f;
  auto num = [&f](const std::string& key, double& ref) {
    f.push_back({key, [&ref] { return format_double(ref); }, [&ref, key](const std::string& s) { ref = to_double(key, s); }});
  };
  auto size = [&f](const std::string& key, std::size_t& ref) {
    f.push_back({key, [&ref] { return std::to_string(ref); },
                 [&ref, key](const std::string& s) { ref = static_cast<std::size_t>(to_u64(key, s)); }});
  };
  auto u64 = [&f](const std::string& key, std::uint64_t& ref) {
    f.push_back({key, [&ref] { return std::to_string(ref); }, [&ref, key](const std::string& s) { ref = to_u64(key, s); }});
  };
  auto flag = [&f](const std::string& key, bool& ref) {
    f.push_back({key, [&ref] { return std::string(ref ? "true" : "false"); },
                 [&ref, key](const std::string& s) { ref = to_bool(key, s); }});
  };
  auto text = [&f](const std::string& key, std::string& ref) {
    f.push_back({key, [&ref] { return ref; }, [&ref](const std::string& s) { ref = s; }});
  };
  auto enumerated = [&f](const std::string& key, auto& ref, auto parse) {
    f.push_back({key, [&ref] { return to_string(ref); },
                 [&ref, key, parse](const std::string& s) { ref = named(key, s, parse); }});
  };

  text("experiment.preset", c.preset);
  enumerated("experiment.arm", c.arm, arm_from_string);
  size("experiment.iterations", c.iterations);
  enumerated("experiment.init", c.init.mode, init_mode_from_string);
  enumerated("experiment.latent_space", c.init.space, latent_space_from_string);
  num("experiment.perturbation_std", c.init.perturbation_std);
  size("experiment.projection_steps", c.init.projection_steps);
  num("experiment.projection_lr", c.init.projection_lr);
  num("experiment.target_noise", c.target_noise);
  size("experiment.localization_batch", c.localization_batch);
  size("experiment.locality_samples", c.locality_samples);
  size("experiment.locality_every", c.locality_every);
  num("experiment.match_factor", c.match_factor);
  flag("experiment.stop_at_match", c.stop_at_match);
  text("experiment.output_dir", c.output_dir);

  size("generator.style_dim", c.generator.style_dim);
  size("generator.mapping_layers", c.generator.mapping_layers);
  size("generator.base_resolution", c.generator.base_resolution);
  f.push_back({"generator.widths", [&c] { return join_widths(c.generator.widths); },
               [&c](const std::string& s) { c.generator.widths = split_widths("generator.widths", s); }});
  num("generator.noise_strength", c.generator.noise_strength);

  size("gmm.blocks", c.gmm.blocks);
  enumerated("gmm.pre_norm", c.gmm.pre_norm, norm_from_string);
  enumerated("gmm.post_norm", c.gmm.post_norm, norm_from_string);
  enumerated("gmm.layers", c.gmm.layers, layer_selection_from_string);

  num("loss.lambda1", c.loss.lambda1);
  num("loss.lambda2", c.loss.lambda2);
  num("loss.lambda3", c.loss.lambda3);
  f.push_back({"loss.lambda4", [&c] { return c.loss.lambda4 ? format_double(*c.loss.lambda4) : std::string("-"); },
               [&c](const std::string& s) {
                 if (s == "-")
                   c.loss.lambda4.reset();
                 else
                   c.loss.lambda4 = to_double("loss.lambda4", s);
               }});
  num("loss.lambda_e", c.loss.lambda_e);
  num("loss.lambda_l", c.loss.lambda_l);
  enumerated("loss.pixel", c.loss.pixel, pixel_loss_from_string);
  num("loss.beta", c.loss.beta);

  enumerated("optimizer.kind", c.optimizer.kind, optimizer_kind_from_string);
  num("optimizer.lr", c.optimizer.lr);
  num("optimizer.beta1", c.optimizer.beta1);
  num("optimizer.beta2", c.optimizer.beta2);
  num("optimizer.eps", c.optimizer.eps);
  size("optimizer.lookahead_k", c.optimizer.lookahead_k);
  num("optimizer.lookahead_alpha", c.optimizer.lookahead_alpha);
  flag("optimizer.grad_centralization", c.optimizer.grad_centralization);
  num("optimizer.baseline_lr", c.baseline_lr);

  u64("seeds.generator", c.seeds.generator);
  u64("seeds.target", c.seeds.target);
  u64("seeds.perturbation", c.seeds.perturbation);
  u64("seeds.noise", c.seeds.noise);
  u64("seeds.localization", c.seeds.localization);
  u64("seeds.evaluation", c.seeds.evaluation);
  u64("seeds.extractors", c.seeds.extractors);
  u64("seeds.gmm", c.seeds.gmm);
  u64("seeds.directions", c.seeds.directions);

  size("edit.directions", c.edit.directions);
  size("edit.direction_index", c.edit.direction_index);
  num("edit.magnitude", c.edit.magnitude);
  size("edit.first_layer", c.edit.first_layer);
  f.push_back({"edit.last_layer", [&c] { return c.edit.last_layer ? std::to_string(*c.edit.last_layer) : "all"; },
               [&c](const std::string& s) {
                 if (s == "all")
                   c.edit.last_layer.reset();
                 else
                   c.edit.last_layer = static_cast<std::size_t>(to_u64("edit.last_layer", s));
               }});
  return f;
}

Flat read_ini_text(std::istream& in, const std::string& origin) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  Flat flat;
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("unknown config key '" + section + "' (keys belong to a [section])");
    for (const auto& [key, value] : body) flat[section + "." + key] = value.data();
  }
  return flat;
}

void check_known(const Flat& flat) {
  const auto& known = config_keys();
  for (const auto& [key, value] : flat)
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig resolve(const Flat& file, const std::optional<std::string>& preset_flag,
                         const std::optional<std::string>& env_output_dir,
                         const std::vector<std::pair<std::string, std::string>>& overrides) {
  check_known(file);
  Flat flags(overrides.begin(), overrides.end());
  check_known(flags);

  std::string preset;
  if (auto it = file.find("experiment.preset"); it != file.end()) preset = it->second;
  if (auto it = flags.find("experiment.preset"); it != flags.end()) preset = it->second;
  if (preset_flag) preset = *preset_flag;

  Flat merged = preset.empty() ? Flat{} : preset_values(preset);
  for (const auto& [k, v] : file) merged[k] = v;
  if (env_output_dir) merged["experiment.output_dir"] = *env_output_dir;
  for (const auto& [k, v] : overrides) merged[k] = v;
  merged["experiment.preset"] = preset;

  if (preset.empty()) {
    std::vector<std::string> missing;
    for (const auto& key : required_keys())
      if (!merged.count(key)) missing.push_back(key);
    if (!missing.empty()) {
      std::string list;
      for (const auto& k : missing) list += (list.empty() ? "" : ", ") + k;
      throw ConfigError("missing required config fields (or name a preset): " + list);
    }
  }

  ExperimentConfig config;
  auto table = fields(config);
  for (const auto& [key, value] : merged) {
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    it->set(value);
  }
  config.validate();
  return config;
}

}  // namespace

std::string to_string(Arm a) {
  switch (a) {
    case Arm::Gmm: return "gmm";
    case Arm::Baseline: return "baseline";
    case Arm::Both: return "both";
  }
  return "?";
}

Arm arm_from_string(const std::string& s) {
  if (s == "gmm") return Arm::Gmm;
  if (s == "baseline") return Arm::Baseline;
  if (s == "both") return Arm::Both;
  throw ConfigError("unknown arm '" + s + "' (expected gmm, baseline or both)");
}

void ExperimentConfig::validate() const {
  generator.validate();
  gmm.validate();
  loss.validate();
  optimizer.validate();
  if (!(baseline_lr > 0)) throw ConfigError("optimizer.baseline_lr must be positive");
  if (init.perturbation_std < 0) throw ConfigError("experiment.perturbation_std must be non-negative");
  if (init.space == LatentSpace::Z) throw ConfigError("experiment.latent_space must be w or wplus");
  if (!(init.projection_lr > 0)) throw ConfigError("experiment.projection_lr must be positive");
  if (init.mode == InitMode::Projection && init.projection_steps == 0)
    throw ConfigError("experiment.projection_steps must be positive in projection mode");
  if (target_noise < 0) throw ConfigError("experiment.target_noise must be non-negative");
  if (init.mode == InitMode::Oracle && target_noise > 0)
    throw ConfigError("oracle initialization needs a generator-realizable target (experiment.target_noise = 0)");
  if (localization_batch == 0) throw ConfigError("experiment.localization_batch must be at least 1");
  if (locality_samples == 0) throw ConfigError("experiment.locality_samples must be at least 1");
  if (match_factor < 0) throw ConfigError("experiment.match_factor must be non-negative");
  if (stop_at_match && !(match_factor > 0)) throw ConfigError("experiment.stop_at_match needs experiment.match_factor");
  if (output_dir.empty()) throw ConfigError("experiment.output_dir must not be empty");
  if (edit.directions == 0 || edit.directions > generator.style_dim)
    throw ConfigError("edit.directions must lie in [1, generator.style_dim]");
  if (edit.direction_index >= edit.directions) throw ConfigError("edit.direction_index must be below edit.directions");
  const std::size_t layers = generator.num_style_layers();
  if (edit.last_layer && (*edit.last_layer > layers || edit.first_layer > *edit.last_layer))
    throw ConfigError("edit.last_layer must lie in [edit.first_layer, number of style layers]");
  if (edit.first_layer > layers) throw ConfigError("edit.first_layer exceeds the number of style layers");
}

std::vector<std::string> preset_names() { return {"faces", "afhq", "cars", "horses", "church"}; }

std::map<std::string, std::string> preset_values(const std::string& name) {
  Flat v{{"loss.lambda_e", "1.0"}, {"loss.lambda_l", "0.2"}, {"loss.lambda1", "1.0"},
         {"loss.lambda2", "0.8"},  {"loss.lambda3", "0.1"},  {"experiment.latent_space", "wplus"}};
  if (name == "faces" || name == "afhq") {
    v["experiment.iterations"] = "300";
    v["loss.lambda4"] = "1.0";
    v["loss.pixel"] = "l2";
    if (name == "afhq") v["experiment.latent_space"] = "w";
  } else if (name == "cars" || name == "horses" || name == "church") {
    v["experiment.iterations"] = name == "cars" ? "400" : "800";
    v["loss.lambda4"] = "-";
    v["loss.pixel"] = "smooth_l1";
    v["loss.beta"] = "0.1";
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected faces, afhq, cars, horses or church)");
  }
  v["experiment.preset"] = name;
  return v;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    ExperimentConfig c;
    std::vector<std::string> out;
    for (const auto& f : fields(c)) out.push_back(f.key);
    return out;
  }();
  return keys;
}

const std::vector<std::string>& required_keys() {
  static const std::vector<std::string> keys{"experiment.iterations", "loss.lambda1", "loss.lambda2",
                                             "loss.lambda3",          "loss.lambda4", "loss.lambda_e",
                                             "loss.lambda_l",         "loss.pixel"};
  return keys;
}

ExperimentConfig parse_config(const ConfigSources& sources) {
  Flat file;
  if (sources.file) {
    std::ifstream in(*sources.file);
    if (!in) throw ConfigError("cannot open config file " + sources.file->string());
    file = read_ini_text(in, sources.file->string());
  }
  return resolve(file, sources.preset, sources.env_output_dir, sources.overrides);
}

ExperimentConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return resolve(read_ini_text(in, "config text"), std::nullopt, std::nullopt, {});
}

std::map<std::string, std::string> to_flat(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  Flat out;
  for (const auto& f : fields(copy)) out[f.key] = f.get();
  return out;
}

std::string to_ini(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  std::ostringstream os;
  std::string section;
  for (const auto& f : fields(copy)) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      os << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    os << f.key.substr(dot + 1) << " = " << f.get() << '\n';
  }
  return os.str();
}

InversionSettings inversion_settings(const ExperimentConfig& c) {
  InversionSettings s;
  s.iterations = c.iterations;
  s.weights = c.loss;
  s.optimizer = c.optimizer;
  s.gmm = c.gmm;
  s.localization_batch = c.localization_batch;
  s.localization_seed = c.seeds.localization;
  s.noise_seed = c.seeds.noise;
  s.evaluation_seed = c.seeds.evaluation;
  s.locality_samples = c.locality_samples;
  s.locality_every = c.locality_every;
  s.stop_at_match = c.stop_at_match;
  return s;
}

}  // namespace gradmod
