// SPDX-License-Identifier: Apache-2.0
#include "suitein/trainer/config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "suitein/common/digest.hpp"
#include "suitein/common/error.hpp"

namespace suitein::trainer {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  // keep it a float in YAML eyes
  if (s.find_first_of(".eni") == std::string::npos) s += ".0";
  return s;
}

// Strict section reader: every key must be consumed.
class Section {
 public:
  Section(const YAML::Node& node, std::string name) : node_(node), name_(std::move(name)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError("'" + name_ + "' must be a mapping");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_ || node_.IsNull()) return;
    const YAML::Node v = node_[key];
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("bad value for '" + path(key) + "'");
    }
  }

  YAML::Node child(const std::string& key) {
    seen_.insert(key);
    if (!node_ || node_.IsNull()) return YAML::Node();
    return node_[key];
  }

  void finish() const {
    if (!node_ || node_.IsNull()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + path(key) + "'");
    }
  }

  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

 private:
  YAML::Node node_;
  std::string name_;
  std::set<std::string> seen_;
};

void apply_override(YAML::Node& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + spec + "' is not key=value");
  const std::string key = spec.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(spec.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError("override '" + spec + "': " + e.what());
  }
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string p; std::getline(ss, p, '.');) {
    if (p.empty()) throw ConfigError("override key '" + key + "' is malformed");
    parts.push_back(p);
  }
  // yaml-cpp nodes are handles, so walk with fresh references to keep
  // writes attached to the root
  std::vector<YAML::Node> chain{root};
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    YAML::Node next = chain.back()[parts[i]];
    if (!next.IsDefined() || next.IsNull()) {
      chain.back()[parts[i]] = YAML::Node(YAML::NodeType::Map);
      next = chain.back()[parts[i]];
    }
    if (!next.IsMap()) throw ConfigError("override key '" + key + "': '" + parts[i] + "' is not a section");
    chain.push_back(next);
  }
  chain.back()[parts.back()] = value;
}

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p.lexically_normal();
  return (base / p).lexically_normal();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(data.rate_hz > 0.0)) throw ConfigError("data.rate_hz must be > 0");
  if (data.window < 1) throw ConfigError("data.window must be >= 1");
  if (data.stride < 1) throw ConfigError("data.stride must be >= 1");
  if (!(data.max_gap_s > 0.0)) throw ConfigError("data.max_gap_s must be > 0");
  if (!(train.learning_rate > 0.0) || !std::isfinite(train.learning_rate)) {
    throw ConfigError("train.learning_rate must be > 0");
  }
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (train.max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
  double total = 0.0;
  for (double r : train.split) {
    if (!(r >= 0.0)) throw ConfigError("train.split ratios must be >= 0");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("train.split ratios must sum to 1");
  if (!(train.split[0] > 0.0) || !(train.split[1] > 0.0)) {
    throw ConfigError("train.split needs non-empty train and validation parts");
  }
  if (model.window != data.window) throw ConfigError("model window differs from data.window");
  model.validate();
  loss.validate();
}

TrainConfig parse_config(const std::string& yaml_text, const std::vector<std::string>& overrides,
                         const fs::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  if (!root.IsMap()) throw ConfigError("config root must be a mapping");
  for (const auto& o : overrides) apply_override(root, o);

  TrainConfig c;
  Section top(root, "");
  int schema = TrainConfig::kSchemaVersion;
  top.read("schema_version", schema);
  if (schema != TrainConfig::kSchemaVersion) {
    throw ConfigError("config schema_version " + std::to_string(schema) + " is not supported (expected " +
                      std::to_string(TrainConfig::kSchemaVersion) + ")");
  }
  top.read("seed", c.seed);

  Section data(top.child("data"), "data");
  std::string dir;
  data.read("dir", dir);
  c.data.dir = resolve(dir, base_dir);
  data.read("rate_hz", c.data.rate_hz);
  data.read("window", c.data.window);
  data.read("stride", c.data.stride);
  data.read("max_gap_s", c.data.max_gap_s);
  data.read("align", c.data.align);
  data.finish();

  Section tr(top.child("train"), "train");
  tr.read("learning_rate", c.train.learning_rate);
  tr.read("batch_size", c.train.batch_size);
  tr.read("max_epochs", c.train.max_epochs);
  tr.read("max_steps", c.train.max_steps);
  std::vector<double> split(c.train.split.begin(), c.train.split.end());
  tr.read("split", split);
  if (split.size() != 3) throw ConfigError("train.split must list three ratios");
  std::copy(split.begin(), split.end(), c.train.split.begin());
  tr.read("adam_beta1", c.train.adam_beta1);
  tr.read("adam_beta2", c.train.adam_beta2);
  tr.read("adam_eps", c.train.adam_eps);
  tr.finish();

  Section m(top.child("model"), "model");
  m.read("devices", c.model.devices);
  m.read("channels", c.model.channels);
  m.read("kernels", c.model.kernels);
  m.read("pooled_blocks", c.model.pooled_blocks);
  m.read("segments", c.model.segments);
  m.read("gru_hidden", c.model.gru_hidden);
  m.read("gru_layers", c.model.gru_layers);
  m.read("attention_dim", c.model.attention_dim);
  m.read("attention_heads", c.model.attention_heads);
  m.read("local_hidden", c.model.local_hidden);
  m.read("dropout", c.model.dropout);
  m.finish();
  c.model.window = c.data.window;

  Section l(top.child("loss"), "loss");
  l.read("lambda_v", c.loss.lambda_v);
  l.read("lambda_v_glb", c.loss.lambda_v_glb);
  l.read("lambda_v_loc", c.loss.lambda_v_loc);
  l.read("lambda_con", c.loss.lambda_con);
  l.read("lambda_orth", c.loss.lambda_orth);
  l.read("tau", c.loss.tau);
  l.read("lambda_a", c.loss.lambda_a);
  l.read("lambda_b", c.loss.lambda_b);
  l.read("lambda_c_w", c.loss.lambda_c_w);
  l.finish();

  Section a(top.child("ablation"), "ablation");
  a.read("contrast_fe", c.ablation.contrast_fe);
  a.read("weighted_gf", c.ablation.weighted_gf);
  a.read("attentive_la", c.ablation.attentive_la);
  a.finish();

  Section out(top.child("output"), "output");
  std::string odir = c.output_dir.string();
  out.read("dir", odir);
  c.output_dir = resolve(odir, base_dir);
  out.finish();

  top.finish();
  c.validate();
  return c;
}

TrainConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides, path.parent_path());
}

std::string to_yaml(const TrainConfig& c) {
  auto list = [](const auto& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(v[i])>>) s += fmt(v[i]);
      else s += std::to_string(v[i]);
    }
    return s + "]";
  };
  auto b = [](bool v) { return v ? "true" : "false"; };
  auto q = [](const fs::path& p) {
    YAML::Emitter e;
    e << YAML::DoubleQuoted << p.generic_string();
    return std::string(e.c_str());
  };
  std::ostringstream o;
  o << "schema_version: " << TrainConfig::kSchemaVersion << "\n"
    << "seed: " << c.seed << "\n"
    << "data:\n"
    << "  dir: " << q(c.data.dir) << "\n"
    << "  rate_hz: " << fmt(c.data.rate_hz) << "\n"
    << "  window: " << c.data.window << "\n"
    << "  stride: " << c.data.stride << "\n"
    << "  max_gap_s: " << fmt(c.data.max_gap_s) << "\n"
    << "  align: " << b(c.data.align) << "\n"
    << "train:\n"
    << "  learning_rate: " << fmt(c.train.learning_rate) << "\n"
    << "  batch_size: " << c.train.batch_size << "\n"
    << "  max_epochs: " << c.train.max_epochs << "\n"
    << "  max_steps: " << c.train.max_steps << "\n"
    << "  split: " << list(c.train.split) << "\n"
    << "  adam_beta1: " << fmt(c.train.adam_beta1) << "\n"
    << "  adam_beta2: " << fmt(c.train.adam_beta2) << "\n"
    << "  adam_eps: " << fmt(c.train.adam_eps) << "\n"
    << "model:\n"
    << "  devices: " << c.model.devices << "\n"
    << "  channels: " << list(c.model.channels) << "\n"
    << "  kernels: " << list(c.model.kernels) << "\n"
    << "  pooled_blocks: " << c.model.pooled_blocks << "\n"
    << "  segments: " << c.model.segments << "\n"
    << "  gru_hidden: " << c.model.gru_hidden << "\n"
    << "  gru_layers: " << c.model.gru_layers << "\n"
    << "  attention_dim: " << c.model.attention_dim << "\n"
    << "  attention_heads: " << c.model.attention_heads << "\n"
    << "  local_hidden: " << c.model.local_hidden << "\n"
    << "  dropout: " << fmt(c.model.dropout) << "\n"
    << "loss:\n"
    << "  lambda_v: " << fmt(c.loss.lambda_v) << "\n"
    << "  lambda_v_glb: " << fmt(c.loss.lambda_v_glb) << "\n"
    << "  lambda_v_loc: " << fmt(c.loss.lambda_v_loc) << "\n"
    << "  lambda_con: " << fmt(c.loss.lambda_con) << "\n"
    << "  lambda_orth: " << fmt(c.loss.lambda_orth) << "\n"
    << "  tau: " << fmt(c.loss.tau) << "\n"
    << "  lambda_a: " << fmt(c.loss.lambda_a) << "\n"
    << "  lambda_b: " << fmt(c.loss.lambda_b) << "\n"
    << "  lambda_c_w: " << fmt(c.loss.lambda_c_w) << "\n"
    << "ablation:\n"
    << "  contrast_fe: " << b(c.ablation.contrast_fe) << "\n"
    << "  weighted_gf: " << b(c.ablation.weighted_gf) << "\n"
    << "  attentive_la: " << b(c.ablation.attentive_la) << "\n";
  if (!c.output_dir.empty()) o << "output:\n  dir: " << q(c.output_dir) << "\n";
  return o.str();
}

std::string experiment_yaml(TrainConfig config) {
  config.output_dir.clear();
  return to_yaml(config);
}

std::string config_digest(const TrainConfig& config) { return short_digest(experiment_yaml(config)); }

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
  // FNV-1a over the tag, then a splitmix64 finaliser
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : tag) h = (h ^ ch) * 0x100000001b3ULL;
  std::uint64_t z = seed ^ h ^ (index * 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace suitein::trainer
