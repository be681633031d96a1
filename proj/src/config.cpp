#include "capsroute/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "capsroute/errors.hpp"

namespace capsroute {

namespace {

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a number, got '" + s + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    if (!s.empty() && s[0] != '-') {
      const unsigned long long v = std::stoull(s, &used);
      if (used == s.size()) return v;
    }
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + s + "'");
}

bool to_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + s + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

Interval to_interval(const std::string& key, const std::string& s) {
  const auto v = to_list(key, s);
  if (v.size() != 2) throw ConfigError("key '" + key + "': expected 'lo,hi', got '" + s + "'");
  return Interval{v[0], v[1]};
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

template <typename E>
E to_enum(const std::string& key, const std::string& s, std::initializer_list<std::pair<const char*, E>> options) {
  std::string names;
  for (const auto& [name, value] : options) {
    if (s == name) return value;
    names += std::string(names.empty() ? "" : "|") + name;
  }
  throw ConfigError("key '" + key + "': expected " + names + ", got '" + s + "'");
}

const char* name_of(Architecture a) {
  switch (a) {
    case Architecture::cardiocaps: return "cardiocaps";
    case Architecture::cnn1: return "cnn1";
    case Architecture::cnn2: return "cnn2";
  }
  return "?";
}
const char* name_of(AffineKind a) {
  switch (a) {
    case AffineKind::shared: return "shared";
    case AffineKind::conv: return "conv";
    case AffineKind::constant: return "constant";
  }
  return "?";
}
const char* name_of(RoutingMethod m) { return m == RoutingMethod::dynamic ? "dynamic" : "attention"; }
const char* name_of(SoftmaxAxis a) { return a == SoftmaxAxis::input_caps ? "input_caps" : "output_caps"; }
const char* name_of(WeightMode m) {
  switch (m) {
    case WeightMode::none: return "none";
    case WeightMode::literal: return "literal";
    case WeightMode::inverse: return "inverse";
  }
  return "?";
}

using E = ExperimentConfig;

#define SIZE_FIELD(KEY, MEMBER, DOC)                                        \
  ConfigField {                                                             \
    KEY, DOC, [](const E& c) { return std::to_string(c.MEMBER); },          \
        [](E& c, const std::string& v) { c.MEMBER = to_u64(KEY, v); }       \
  }
#define REAL_FIELD(KEY, MEMBER, DOC)                                       \
  ConfigField {                                                            \
    KEY, DOC, [](const E& c) { return fmt(c.MEMBER); },                    \
        [](E& c, const std::string& v) { c.MEMBER = to_double(KEY, v); }   \
  }
#define BOOL_FIELD(KEY, MEMBER, DOC)                                           \
  ConfigField {                                                                \
    KEY, DOC, [](const E& c) { return std::string(c.MEMBER ? "true" : "false"); }, \
        [](E& c, const std::string& v) { c.MEMBER = to_bool(KEY, v); }         \
  }
#define INTERVAL_FIELD(KEY, MEMBER, DOC)                                             \
  ConfigField {                                                                      \
    KEY, DOC, [](const E& c) { return fmt(c.MEMBER.lo) + "," + fmt(c.MEMBER.hi); },  \
        [](E& c, const std::string& v) { c.MEMBER = to_interval(KEY, v); }           \
  }

std::vector<ConfigField> make_fields() {
  std::vector<ConfigField> f;
  f.push_back({"model.architecture", "cardiocaps | cnn1 | cnn2 (default cardiocaps)",
               [](const E& c) { return std::string(name_of(c.model.architecture)); },
               [](E& c, const std::string& v) {
                 c.model.architecture = to_enum<Architecture>(
                     "model.architecture", v,
                     {{"cardiocaps", Architecture::cardiocaps}, {"cnn1", Architecture::cnn1}, {"cnn2", Architecture::cnn2}});
               }});
  f.push_back(SIZE_FIELD("model.hidden_dim", model.hidden_dim, "conv channels (default 32)"));
  f.push_back(SIZE_FIELD("model.conv_kernel", model.conv_kernel, "conv kernel size (default 9)"));
  f.push_back(SIZE_FIELD("model.primary_stride", model.primary_stride, "primary capsule conv stride (default 2)"));
  f.push_back(SIZE_FIELD("model.d_primary", model.d_primary, "primary capsule dimension (default 8)"));
  f.push_back(SIZE_FIELD("model.d_digit", model.d_digit, "digit capsule dimension (default 16)"));
  f.push_back({"model.affine_kind", "shared | conv | constant (default shared)",
               [](const E& c) { return std::string(name_of(c.model.affine_kind)); },
               [](E& c, const std::string& v) {
                 c.model.affine_kind = to_enum<AffineKind>(
                     "model.affine_kind", v,
                     {{"shared", AffineKind::shared}, {"conv", AffineKind::conv}, {"constant", AffineKind::constant}});
               }});
  f.push_back({"model.routing", "attention | dynamic (default attention)",
               [](const E& c) { return std::string(name_of(c.model.routing)); },
               [](E& c, const std::string& v) {
                 c.model.routing = to_enum<RoutingMethod>(
                     "model.routing", v, {{"attention", RoutingMethod::attention}, {"dynamic", RoutingMethod::dynamic}});
               }});
  f.push_back({"model.routing_iterations", "dynamic routing iterations r (default 3)",
               [](const E& c) { return std::to_string(c.model.routing_iterations); },
               [](E& c, const std::string& v) {
                 c.model.routing_iterations = static_cast<int>(to_u64("model.routing_iterations", v));
               }});
  f.push_back({"model.attention_axis", "input_caps | output_caps (default input_caps)",
               [](const E& c) { return std::string(name_of(c.model.attention_axis)); },
               [](E& c, const std::string& v) {
                 c.model.attention_axis = to_enum<SoftmaxAxis>(
                     "model.attention_axis", v,
                     {{"input_caps", SoftmaxAxis::input_caps}, {"output_caps", SoftmaxAxis::output_caps}});
               }});
  f.push_back(BOOL_FIELD("model.attention_scale", model.attention_scale, "divide attention logits by sqrt(D_out) (default false)"));
  f.push_back(SIZE_FIELD("model.decoder_hidden1", model.decoder_hidden1, "decoder first hidden width (default 128)"));
  f.push_back(SIZE_FIELD("model.decoder_hidden2", model.decoder_hidden2, "decoder second hidden width (default 256)"));
  f.push_back(REAL_FIELD("loss.m_plus", model.margin.m_plus, "margin m+ (default 0.9)"));
  f.push_back(REAL_FIELD("loss.m_minus", model.margin.m_minus, "margin m- (default 0.1)"));
  f.push_back(REAL_FIELD("loss.lambda_neg", model.margin.lambda_neg, "absent-class down-weighting (default 0.5)"));
  f.push_back({"loss.weight_mode", "none | literal | inverse (default inverse)",
               [](const E& c) { return std::string(name_of(c.model.loss.weight_mode)); },
               [](E& c, const std::string& v) {
                 c.model.loss.weight_mode = to_enum<WeightMode>(
                     "loss.weight_mode", v,
                     {{"none", WeightMode::none}, {"literal", WeightMode::literal}, {"inverse", WeightMode::inverse}});
               }});
  f.push_back({"loss.class_proportions", "p_k per class; overwritten from the training split (default 0.5,0.5)",
               [](const E& c) { return join(c.model.loss.class_proportions); },
               [](E& c, const std::string& v) { c.model.loss.class_proportions = to_list("loss.class_proportions", v); }});
  f.push_back(REAL_FIELD("loss.lambda_reg", model.loss.lambda_reg, "auxiliary regression weight (default 0.05)"));
  f.push_back(REAL_FIELD("loss.lambda_recon", model.loss.lambda_recon, "reconstruction weight (default 0.0005)"));
  f.push_back(REAL_FIELD("train.lr", train.lr, "Adam learning rate (default 1e-4)"));
  f.push_back(SIZE_FIELD("train.batch_size", train.batch_size, "mini-batch size (default 8)"));
  f.push_back(SIZE_FIELD("train.max_epochs", train.max_epochs, "epoch limit (default 100)"));
  f.push_back(SIZE_FIELD("train.patience", train.patience, "early-stopping patience in epochs (default 5)"));
  f.push_back(SIZE_FIELD("train.seed", train.seed, "initialisation, split and shuffling seed (default 10)"));
  f.push_back(REAL_FIELD("train.adam_beta1", train.adam_beta1, "Adam beta1 (default 0.9)"));
  f.push_back(REAL_FIELD("train.adam_beta2", train.adam_beta2, "Adam beta2 (default 0.999)"));
  f.push_back(REAL_FIELD("train.adam_eps", train.adam_eps, "Adam epsilon (default 1e-8)"));
  f.push_back(REAL_FIELD("split.train", split[0], "training fraction (default 0.7)"));
  f.push_back(REAL_FIELD("split.val", split[1], "validation fraction (default 0.15)"));
  f.push_back(REAL_FIELD("split.test", split[2], "test fraction (default 0.15)"));
  f.push_back(SIZE_FIELD("synth.n_samples", synth.n_samples, "samples to generate (default 1000)"));
  f.push_back(SIZE_FIELD("synth.channels", synth.channels, "image channels (default 1; 3 with three_crop)"));
  f.push_back(SIZE_FIELD("synth.height", synth.height, "image height (default 32)"));
  f.push_back(SIZE_FIELD("synth.width", synth.width, "image width (default 32)"));
  f.push_back(REAL_FIELD("synth.positive_ratio", synth.positive_ratio, "fraction of dilated samples (default 0.2)"));
  f.push_back(INTERVAL_FIELD("synth.rotation_train", synth.rotation_train, "train-phase rotation degrees (default -15,15)"));
  f.push_back(INTERVAL_FIELD("synth.rotation_test", synth.rotation_test, "test-phase rotation degrees (default -15,15)"));
  f.push_back(REAL_FIELD("synth.translation", synth.translation, "max centre shift in pixels (default 2)"));
  f.push_back(INTERVAL_FIELD("synth.width_normal", synth.width_normal, "label-0 chamber width px (default 6,9)"));
  f.push_back(INTERVAL_FIELD("synth.width_dilated", synth.width_dilated, "label-1 chamber width px (default 10,13)"));
  f.push_back(REAL_FIELD("synth.major_axis", synth.major_axis, "chamber length px (default 18)"));
  f.push_back(REAL_FIELD("synth.noise_sigma", synth.noise_sigma, "Gaussian pixel noise (default 0.05)"));
  f.push_back(SIZE_FIELD("synth.seed", synth.seed, "generation seed (default 10)"));
  f.push_back(BOOL_FIELD("synth.three_crop", synth.three_crop, "stack 3 centre crops as channels (default false)"));
  f.push_back(BOOL_FIELD("synth.allow_width_overlap", synth.allow_width_overlap, "permit overlapping width intervals (default false)"));
  return f;
}

#undef SIZE_FIELD
#undef REAL_FIELD
#undef BOOL_FIELD
#undef INTERVAL_FIELD

std::string render(const ExperimentConfig& config, const std::function<bool(const std::string&)>& keep) {
  std::ostringstream os;
  for (const auto& f : config_fields()) {
    if (keep(f.key)) os << f.key << '=' << f.get(config) << '\n';
  }
  return os.str();
}

}  // namespace

const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = make_fields();
  return fields;
}

ConfigMap parse_config_text(std::string_view text) {
  ConfigMap out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string line(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
    }
    out[trim(std::string_view(line).substr(0, eq))] = trim(std::string_view(line).substr(eq + 1));
  }
  return out;
}

ConfigMap read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_config(ExperimentConfig& config, const ConfigMap& values) {
  for (const auto& [key, value] : values) {
    bool found = false;
    for (const auto& f : config_fields()) {
      if (f.key == key) {
        f.set(config, value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown config key '" + key + "'");
  }
}

std::string to_config_text(const ExperimentConfig& config) {
  return render(config, [](const std::string&) { return true; });
}

std::string to_config_text(const ModelConfig& model, const TrainConfig& train) {
  ExperimentConfig c;
  c.model = model;
  c.train = train;
  return render(c, [](const std::string& key) {
    return key.starts_with("model.") || key.starts_with("loss.") || key.starts_with("train.");
  });
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const Shape& in = model.input_shape();
  out << "input.shape=" << in[0] << ',' << in[1] << ',' << in[2] << '\n';
  out << to_config_text(model.config(), TrainConfig{});
  out << "---\n";
  for (const auto& p : model.parameters()) {
    out << p.name << ' ' << p.value.numel() << '\n';
    const auto d = p.value.data();
    for (std::size_t i = 0; i < d.size(); ++i) out << fmt(d[i]) << (i + 1 == d.size() ? '\n' : ' ');
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read model file " + path.string());
  std::string header, line;
  while (std::getline(in, line) && line != "---") header += line + '\n';
  ConfigMap values = parse_config_text(header);
  const auto shape_it = values.find("input.shape");
  if (shape_it == values.end()) throw ConfigError("model file lacks input.shape");
  const auto dims = to_list("input.shape", shape_it->second);
  if (dims.size() != 3) throw ConfigError("input.shape must have 3 extents");
  values.erase(shape_it);
  ExperimentConfig config;
  apply_config(config, values);
  Model model(config.model, Shape{static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]),
                                  static_cast<std::size_t>(dims[2])},
              0);
  for (auto& p : model.parameters()) {
    std::string name;
    std::size_t count = 0;
    if (!(in >> name >> count) || name != p.name || count != p.value.numel()) {
      throw ConfigError("model file parameter mismatch at '" + p.name + "'");
    }
    for (double& v : p.value.data()) {
      std::string token;
      in >> token;
      v = to_double(p.name, token);
    }
  }
  return model;
}

}  // namespace capsroute
