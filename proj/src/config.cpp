#include "amc/config.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <fstream>
#include <functional>
#include <sstream>

namespace amc {

namespace {

using nlohmann::json;

enum class Kind { real, integer, boolean, text, real_list };

struct Field {
  const char* section;
  const char* key;
  Kind kind;
  const char* description;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <class T>
T as(const json& v) {
  return v.get<T>();
}

#define AMC_FIELD(section, key, kind, desc, expr, type)                                     \
  Field {                                                                                   \
    section, key, kind, desc, [](const RunConfig& c) { return json(c.expr); },             \
        [](RunConfig& c, const json& v) { c.expr = as<type>(v); }                           \
  }

#define AMC_ENUM_FIELD(section, key, desc, expr, parse)                                      \
  Field {                                                                                    \
    section, key, Kind::text, desc, [](const RunConfig& c) { return json(std::string(to_string(c.expr))); }, \
        [](RunConfig& c, const json& v) { c.expr = parse(v.get<std::string>()); }            \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      AMC_FIELD("augment", "p_R1", Kind::real, "edge-drop probability, target encoder, view 1", train.augment.p_R1, double),
      AMC_FIELD("augment", "p_R2", Kind::real, "edge-drop probability, target encoder, view 2", train.augment.p_R2, double),
      AMC_FIELD("augment", "q_R1", Kind::real, "edge-drop probability, auxiliary encoder, view 1", train.augment.q_R1, double),
      AMC_FIELD("augment", "q_R2", Kind::real, "edge-drop probability, auxiliary encoder, view 2", train.augment.q_R2, double),
      AMC_FIELD("augment", "p_A1", Kind::real, "feature-mask probability, view 1", train.augment.p_A1, double),
      AMC_FIELD("augment", "p_A2", Kind::real, "feature-mask probability, view 2", train.augment.p_A2, double),
      AMC_FIELD("augment", "q_A1", Kind::real, "mask probability on the auxiliary input, view 1", train.augment.q_A1, double),
      AMC_FIELD("augment", "q_A2", Kind::real, "mask probability on the auxiliary input, view 2", train.augment.q_A2, double),
      AMC_FIELD("train", "epochs", Kind::integer, "training epochs", train.epochs, int),
      AMC_FIELD("train", "learning_rate", Kind::real, "Adam learning rate", train.learning_rate, double),
      AMC_FIELD("train", "weight_decay", Kind::real, "coupled L2 weight decay", train.weight_decay, double),
      AMC_FIELD("train", "hidden_dim", Kind::integer, "embedding, projection and attention width", train.hidden_dim, Index),
      AMC_FIELD("train", "target_layers", Kind::integer, "layers in the target encoder (l1)", train.target_layers, int),
      AMC_FIELD("train", "aux_layers", Kind::integer, "layers in the auxiliary encoder (l2)", train.aux_layers, int),
      AMC_FIELD("train", "aux_enabled", Kind::boolean, "train with the auxiliary encoder", train.aux_enabled, bool),
      AMC_ENUM_FIELD("train", "activation", "relu or prelu", train.activation, parse_activation),
      AMC_ENUM_FIELD("train", "encoder", "gcn or sage (mean aggregation)", train.encoder, parse_encoder_kind),
      AMC_FIELD("train", "seed", Kind::integer, "master random seed", train.seed, std::uint64_t),
      AMC_FIELD("train", "memory_budget_mb", Kind::real, "limit for full similarity matrices", train.memory_budget_mb, double),
      AMC_FIELD("loss", "tau", Kind::real, "temperature", train.loss.tau, double),
      AMC_ENUM_FIELD("loss", "similarity", "cosine or dot", train.loss.similarity, parse_similarity),
      AMC_ENUM_FIELD("loss", "layer_mode", "multi or last_only", train.loss.layer_mode, parse_layer_mode),
      AMC_ENUM_FIELD("loss", "attention_mode", "node_mean or per_node", train.loss.attention_mode, parse_attention_mode),
      AMC_FIELD("loss", "block_size", Kind::integer, "similarity rows per block, 0 = whole matrix", train.loss.block_size, Index),
      AMC_FIELD("eval", "probe_steps", Kind::integer, "linear probe optimisation steps", eval.probe.steps, int),
      AMC_FIELD("eval", "probe_learning_rate", Kind::real, "linear probe learning rate", eval.probe.learning_rate, double),
      AMC_FIELD("eval", "probe_l2", Kind::real_list, "linear probe L2 penalties, one picked on validation", eval.probe.l2, std::vector<double>),
      AMC_FIELD("eval", "stability_node", Kind::integer, "node tracked by the stability matrix", eval.stability_node, Index),
      AMC_FIELD("eval", "stability_trials", Kind::integer, "maskings compared by the stability matrix", eval.stability_trials, int),
      AMC_FIELD("eval", "stability_mask", Kind::real, "feature-mask ratio for the stability matrix", eval.stability_mask, double),
      AMC_FIELD("eval", "sweep_ratios", Kind::real_list, "feature-mask ratios for the sparsity sweep", eval.sweep_ratios, std::vector<double>),
  };
  return table;
}

#undef AMC_FIELD
#undef AMC_ENUM_FIELD

const Field* find_field(std::string_view section, std::string_view key) {
  for (const Field& f : fields()) {
    if (section == f.section && key == f.key) return &f;
  }
  return nullptr;
}

bool known_section(std::string_view s) { return s == "augment" || s == "train" || s == "loss" || s == "eval"; }

struct Row {
  const char* name;
  double p_R1, p_R2, q_R1, q_R2, p_A1, p_A2, q_A1, q_A2, tau, lr;
  Index hidden;
  Activation act;
  int epochs;
};

// One row per dataset, columns in the published hyperparameter table order.
constexpr Row kPresets[] = {
    {"cora", .3, .4, .2, .7, .3, .3, .1, 0, .9, 5e-4, 128, Activation::relu, 200},
    {"citeseer", .3, .2, .5, .5, .1, .4, .1, .1, .9, 1e-3, 256, Activation::prelu, 200},
    {"pubmed", .3, .2, .6, 1.0, .3, 0, .1, .1, .5, 1e-3, 256, Activation::relu, 1500},
    {"dblp", .3, .2, .3, .3, .2, .3, .2, .2, .45, 1e-3, 256, Activation::relu, 1000},
    {"coauthor-cs", .3, .3, .6, .3, .3, .2, .1, 0, .8, 5e-4, 128, Activation::relu, 200},
    {"coauthor-physics", .3, .3, .2, .7, .3, .2, .1, 0, .4, 1e-3, 256, Activation::relu, 200},
    {"amazon-computers", .3, .5, .8, .2, .2, .2, .1, 0, .7, 1e-3, 256, Activation::relu, 200},
    {"amazon-photo", .3, .2, .5, .8, .2, .2, .1, 1, .9, 1e-3, 256, Activation::relu, 200},
};

[[noreturn]] void fail_at(const std::string& source, const toml::source_region& where, const std::string& msg) {
  std::ostringstream os;
  os << source;
  if (where.begin.line > 0) os << ':' << where.begin.line << ':' << where.begin.column;
  os << ": " << msg;
  throw ConfigError(os.str());
}

json toml_to_json(const toml::node& node, Kind kind, const std::string& source, const std::string& name) {
  auto wrong = [&](const char* expected) -> json {
    fail_at(source, node.source(), name + " must be " + expected);
  };
  switch (kind) {
    case Kind::real:
      if (auto v = node.value_exact<double>()) return *v;
      if (auto v = node.value_exact<std::int64_t>()) return static_cast<double>(*v);
      return wrong("a number");
    case Kind::integer:
      if (auto v = node.value_exact<std::int64_t>()) {
        if (*v < 0) fail_at(source, node.source(), name + " must be non-negative");
        return static_cast<std::uint64_t>(*v);
      }
      return wrong("an integer");
    case Kind::boolean:
      if (auto v = node.value_exact<bool>()) return *v;
      return wrong("true or false");
    case Kind::text:
      if (auto v = node.value_exact<std::string>()) return *v;
      return wrong("a string");
    case Kind::real_list: {
      const toml::array* arr = node.as_array();
      if (!arr) return wrong("an array of numbers");
      json out = json::array();
      for (const toml::node& item : *arr) out.push_back(toml_to_json(item, Kind::real, source, name));
      return out;
    }
  }
  return wrong("valid");
}

// Applies one value and checks the whole configuration right away, so an
// invalid value is reported at its own position.
void apply(RunConfig& cfg, const Field& f, const json& value, const std::function<void(const std::string&)>& fail) {
  try {
    f.set(cfg, value);
    cfg.validate();
  } catch (const ConfigError& e) {
    fail(e.what());
  } catch (const json::exception&) {
    fail(std::string(f.key) + " has the wrong type");
  }
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  if (eval.probe.steps < 1) throw ConfigError("probe_steps must be at least 1");
  if (!(eval.probe.learning_rate > 0.0)) throw ConfigError("probe_learning_rate must be positive");
  if (eval.probe.l2.empty()) throw ConfigError("probe_l2 needs at least one value");
  for (double l2 : eval.probe.l2) {
    if (!(l2 >= 0.0)) throw ConfigError("probe_l2 values must be non-negative");
  }
  if (eval.stability_node < 0) throw ConfigError("stability_node must be non-negative");
  if (eval.stability_trials < 1) throw ConfigError("stability_trials must be at least 1");
  if (!(eval.stability_mask >= 0.0 && eval.stability_mask <= 1.0)) throw ConfigError("stability_mask must lie in [0, 1]");
  for (double r : eval.sweep_ratios) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("sweep_ratios must lie in [0, 1]");
  }
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const Row& r : kPresets) out.emplace_back(r.name);
    return out;
  }();
  return names;
}

RunConfig preset(std::string_view name) {
  for (const Row& r : kPresets) {
    if (name != r.name) continue;
    RunConfig c;
    c.preset = r.name;
    c.train.augment = {r.p_R1, r.p_R2, r.q_R1, r.q_R2, r.p_A1, r.p_A2, r.q_A1, r.q_A2};
    c.train.loss.tau = r.tau;
    c.train.learning_rate = r.lr;
    c.train.hidden_dim = r.hidden;
    c.train.activation = r.act;
    c.train.epochs = r.epochs;
    return c;
  }
  std::string known;
  for (const std::string& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown preset '" + std::string(name) + "' (known: " + known + ")");
}

RunConfig parse_config(std::string_view text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    fail_at(source, e.source(), std::string(e.description()));
  }

  RunConfig cfg = preset("cora");
  if (const toml::node* p = root.get("preset")) {
    const auto name = p->value_exact<std::string>();
    if (!name) fail_at(source, p->source(), "preset must be a string");
    try {
      cfg = preset(*name);
    } catch (const ConfigError& e) {
      fail_at(source, p->source(), e.what());
    }
  }
  for (const auto& [key, node] : root) {
    const std::string section(key.str());
    if (section == "preset") continue;
    if (!known_section(section)) {
      fail_at(source, key.source(), "unknown section or key '" + section + "' (sections: augment, train, loss, eval)");
    }
    const toml::table* table = node.as_table();
    if (!table) fail_at(source, node.source(), "'" + section + "' must be a table");
    for (const auto& [k, value] : *table) {
      const std::string name(k.str());
      const Field* f = find_field(section, name);
      if (!f) fail_at(source, k.source(), "unknown key '" + name + "' in [" + section + "]");
      const json v = toml_to_json(value, f->kind, source, name);
      apply(cfg, *f, v, [&](const std::string& msg) { fail_at(source, value.source(), msg); });
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError(file.string() + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), file.string());
}

namespace {

std::string toml_value(const json& v) {
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_string()) return '"' + v.get<std::string>() + '"';
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
  if (v.is_number_float()) {
    std::string s = format_real(v.get<double>());
    // TOML floats need a fraction or exponent.
    if (s.find_first_of(".eE") == std::string::npos && s.find_first_of("in") == std::string::npos) s += ".0";
    return s;
  }
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + toml_value(v[i]);
  return out + "]";
}

}  // namespace

std::string to_toml(const RunConfig& cfg) {
  std::string out = "preset = \"" + cfg.preset + "\"\n";
  std::string section;
  for (const Field& f : fields()) {
    if (section != f.section) {
      section = f.section;
      out += "\n[" + section + "]\n";
    }
    json v = f.get(cfg);
    if (f.kind == Kind::real) v = v.get<double>();
    out += std::string(f.key) + " = " + toml_value(v) + "\n";
  }
  return out;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["preset"] = cfg.preset;
  for (const Field& f : fields()) j[f.section][f.key] = f.get(cfg);
  return j;
}

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  RunConfig cfg = preset(j.contains("preset") ? j.at("preset").get<std::string>() : "cora");
  for (const auto& [section, body] : j.items()) {
    if (section == "preset") continue;
    if (!known_section(section) || !body.is_object()) throw ConfigError("unknown configuration section '" + section + "'");
    for (const auto& [key, value] : body.items()) {
      const Field* f = find_field(section, key);
      if (!f) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
      apply(cfg, *f, value, [&](const std::string& msg) { throw ConfigError(section + "." + key + ": " + msg); });
    }
  }
  return cfg;
}

std::vector<ConfigKey> config_keys() {
  const RunConfig cora = preset("cora");
  std::vector<ConfigKey> out;
  for (const Field& f : fields()) {
    json v = f.get(cora);
    if (f.kind == Kind::real) v = v.get<double>();
    out.push_back({f.section, f.key, toml_value(v), f.description});
  }
  return out;
}

}  // namespace amc
