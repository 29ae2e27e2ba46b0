#include "cli.hpp"

#include "amc/config.hpp"
#include "amc/eval.hpp"
#include "amc/kernels.hpp"
#include "amc/model.hpp"
#include "amc/synthetic.hpp"
#include "amc/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#ifndef AMC_VERSION
#define AMC_VERSION "unknown"
#endif

namespace amc::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Every option of every command. Replaying a manifest re-runs the command
// from this struct and the recorded configuration.
struct Options {
  std::string command;
  std::string data;
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out;
  std::string model;
  std::string emb;
  bool no_multilayer = false;
  bool no_auxiliary = false;
  std::string augment = "both";
  std::optional<Index> node;
  std::optional<int> trials;
  std::optional<double> mask;
  std::vector<double> ratios;
};

json options_to_json(const Options& o) {
  json j{{"command", o.command},      {"data", o.data},
         {"config", o.config},        {"preset", o.preset},
         {"deterministic", o.deterministic},
         {"out", o.out},              {"model", o.model},
         {"emb", o.emb},              {"no_multilayer", o.no_multilayer},
         {"no_auxiliary", o.no_auxiliary},
         {"augment", o.augment},      {"ratios", o.ratios}};
  j["seed"] = o.seed ? json(*o.seed) : json(nullptr);
  j["node"] = o.node ? json(*o.node) : json(nullptr);
  j["trials"] = o.trials ? json(*o.trials) : json(nullptr);
  j["mask"] = o.mask ? json(*o.mask) : json(nullptr);
  return j;
}

Options options_from_json(const json& j) {
  Options o;
  try {
    o.command = j.at("command").get<std::string>();
    o.data = j.at("data").get<std::string>();
    o.config = j.at("config").get<std::string>();
    o.preset = j.at("preset").get<std::string>();
    o.deterministic = j.at("deterministic").get<bool>();
    o.out = j.at("out").get<std::string>();
    o.model = j.at("model").get<std::string>();
    o.emb = j.at("emb").get<std::string>();
    o.no_multilayer = j.at("no_multilayer").get<bool>();
    o.no_auxiliary = j.at("no_auxiliary").get<bool>();
    o.augment = j.at("augment").get<std::string>();
    o.ratios = j.at("ratios").get<std::vector<double>>();
    if (!j.at("seed").is_null()) o.seed = j.at("seed").get<std::uint64_t>();
    if (!j.at("node").is_null()) o.node = j.at("node").get<Index>();
    if (!j.at("trials").is_null()) o.trials = j.at("trials").get<int>();
    if (!j.at("mask").is_null()) o.mask = j.at("mask").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest options: ") + e.what());
  }
  return o;
}

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct LoadedData {
  Dataset data;
  std::string source;
  std::string checksum;
};

// FNV-1a over the in-memory dataset, for sources that have no files.
std::string memory_checksum(const Dataset& d) {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
  };
  for (const auto& [u, v] : d.graph.undirected_edges()) {
    feed(&u, sizeof u);
    feed(&v, sizeof v);
  }
  feed(d.features.data(), sizeof(double) * static_cast<std::size_t>(d.features.size()));
  feed(d.labels.data(), sizeof(int) * d.labels.size());
  feed(d.split.data(), d.split.size());
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

// --data DIR, else $AMC_CORA_DIR, else the built-in Cora-shaped surrogate.
LoadedData load_data(const std::string& data, std::ostream& err) {
  std::string dir = data;
  if (dir.empty()) {
    if (const char* env = std::getenv("AMC_CORA_DIR"); env && *env) dir = env;
  }
  LoadedData out;
  if (dir.empty() || dir == "surrogate") {
    out.data = make_surrogate({});
    out.source = "surrogate";
    out.checksum = memory_checksum(out.data);
    err << "[surrogate] no dataset directory given and AMC_CORA_DIR unset; using the built-in Cora-shaped surrogate\n";
  } else {
    out.data = load_dataset(dir);
    out.source = fs::absolute(dir).lexically_normal().string();
    out.checksum = dataset_checksum(dir);
  }
  err << "dataset: " << out.data.num_nodes() << " nodes, " << out.data.graph.edge_count() << " edges, "
      << out.data.num_features() << " features, " << out.data.num_classes << " classes\n";
  return out;
}

RunConfig resolve_config(const Options& o) {
  if (!o.config.empty() && !o.preset.empty()) throw ConfigError("give either --config or --preset, not both");
  RunConfig cfg = !o.config.empty() ? load_config(o.config) : preset(o.preset.empty() ? "cora" : o.preset);
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.no_multilayer) cfg.train.loss.layer_mode = LayerMode::last_only;
  if (o.no_auxiliary) cfg.train.aux_enabled = false;
  if (o.augment == "rn") {
    cfg.train.augment.p_A1 = cfg.train.augment.p_A2 = 0.0;
    cfg.train.augment.q_A1 = cfg.train.augment.q_A2 = 0.0;
  } else if (o.augment == "am") {
    cfg.train.augment.p_R1 = cfg.train.augment.p_R2 = 0.0;
    cfg.train.augment.q_R1 = cfg.train.augment.q_R2 = 0.0;
  } else if (o.augment != "both") {
    throw ConfigError("--augment must be rn, am or both");
  }
  if (o.node) cfg.eval.stability_node = *o.node;
  if (o.trials) cfg.eval.stability_trials = *o.trials;
  if (o.mask) cfg.eval.stability_mask = *o.mask;
  if (!o.ratios.empty()) cfg.eval.sweep_ratios = o.ratios;
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DatasetError(file.string() + ": cannot open for writing");
  out << text;
  if (!out) throw DatasetError(file.string() + ": write failed");
}

std::string artifact(const Options& o, const char* suffix) { return o.out + suffix; }

// Per-command state that ends up in the manifest.
struct Run {
  Options opts;
  RunConfig cfg;
  LoadedData data;
  json timings = json::object();
  json outputs = json::array();
  json result;  // printed to stdout and stored next to the manifest
};

void log_epoch(std::ostream& err, const EpochRecord& r, int epochs) {
  if (r.epoch == 1 || r.epoch % 10 == 0 || r.epoch == epochs) {
    err << "epoch " << r.epoch << "/" << epochs << " loss " << format_real(r.total_loss) << "\n";
  }
}

TrainResult train_logged(const Dataset& d, const TrainConfig& cfg, std::ostream& err) {
  return train(d, cfg, [&](const EpochRecord& r) { log_epoch(err, r, cfg.epochs); });
}

json evaluation_report(const Matrix& emb, const Dataset& d, const RunConfig& cfg, const ModelParams* model) {
  const ProbeResult probe = linear_probe(emb, d.labels, d.split, d.num_classes, cfg.eval.probe);
  const KMeansResult km = kmeans(emb, d.num_classes, cfg.train.seed);
  const ClusterReport cl = clustering_indices(emb, km.assignments);
  json report{{"accuracy", probe.accuracy}, {"micro_f1", probe.micro_f1}, {"chi", cl.chi}, {"dbi", cl.dbi},
              {"sc", cl.sc},             {"mean_similarity", nullptr}, {"val_accuracy", probe.val_accuracy},
              {"probe_l2", probe.l2}};
  if (model) {
    const StabilityMatrix st = stability_matrix(*model, d, cfg.eval.stability_node, cfg.eval.stability_mask,
                                                cfg.eval.stability_trials, cfg.train.seed);
    report["mean_similarity"] = st.mean_offdiag;
  }
  return report;
}

void do_train(Run& run, std::ostream& err) {
  const auto t0 = Clock::now();
  const TrainResult res = train_logged(run.data.data, run.cfg.train, err);
  run.timings["train_s"] = since(t0);
  save_model(res.model, run.opts.out);
  res.history.write_csv(artifact(run.opts, ".history.csv"));
  run.outputs = {run.opts.out, artifact(run.opts, ".history.csv")};
  run.result = {{"model", run.opts.out},
                {"epochs", run.cfg.train.epochs},
                {"final_loss", res.history.epochs.empty() ? 0.0 : res.history.epochs.back().total_loss}};
}

void do_embed(Run& run, std::ostream&) {
  const ModelParams model = load_model(run.opts.model);
  const auto t0 = Clock::now();
  const Matrix emb = embed(model, run.data.data.graph, run.data.data.features);
  run.timings["embed_s"] = since(t0);
  write_embeddings(emb, run.opts.out);
  run.outputs = {run.opts.out};
  run.result = {{"embeddings", run.opts.out}, {"nodes", emb.rows()}, {"dim", emb.cols()}};
}

void do_eval(Run& run, std::ostream&) {
  if (run.opts.emb.empty() == run.opts.model.empty()) throw ConfigError("eval needs exactly one of --emb or --model");
  const auto t0 = Clock::now();
  std::optional<ModelParams> model;
  Matrix emb;
  if (!run.opts.model.empty()) {
    model = load_model(run.opts.model);
    emb = embed(*model, run.data.data.graph, run.data.data.features);
  } else {
    emb = read_embeddings(run.opts.emb);
    if (emb.rows() != run.data.data.num_nodes()) {
      throw DimensionError("embedding file has " + std::to_string(emb.rows()) + " rows but the dataset has " +
                           std::to_string(run.data.data.num_nodes()) + " nodes");
    }
  }
  run.result = evaluation_report(emb, run.data.data, run.cfg, model ? &*model : nullptr);
  run.timings["eval_s"] = since(t0);
  write_text(run.opts.out, run.result.dump(2) + "\n");
  run.outputs = {run.opts.out};
}

void do_ablate(Run& run, std::ostream& err) {
  auto t0 = Clock::now();
  const TrainResult res = train_logged(run.data.data, run.cfg.train, err);
  run.timings["train_s"] = since(t0);
  t0 = Clock::now();
  const Matrix emb = embed(res.model, run.data.data.graph, run.data.data.features);
  run.result = evaluation_report(emb, run.data.data, run.cfg, &res.model);
  run.timings["eval_s"] = since(t0);
  run.result["variant"] = {{"layer_mode", to_string(run.cfg.train.loss.layer_mode)},
                           {"aux_enabled", run.cfg.train.aux_enabled},
                           {"augment", run.opts.augment}};
  write_text(run.opts.out, run.result.dump(2) + "\n");
  res.history.write_csv(artifact(run.opts, ".history.csv"));
  run.outputs = {run.opts.out, artifact(run.opts, ".history.csv")};
}

void do_stability(Run& run, std::ostream&) {
  const ModelParams model = load_model(run.opts.model);
  const auto t0 = Clock::now();
  const RunConfig& c = run.cfg;
  const StabilityMatrix st = stability_matrix(model, run.data.data, c.eval.stability_node, c.eval.stability_mask,
                                              c.eval.stability_trials, c.train.seed);
  run.timings["stability_s"] = since(t0);
  json rows = json::array();
  for (Index i = 0; i < st.s.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < st.s.cols(); ++j) row.push_back(st.s(i, j));
    rows.push_back(row);
  }
  run.result = {{"node", c.eval.stability_node},
                {"trials", c.eval.stability_trials},
                {"mask", c.eval.stability_mask},
                {"mean_similarity", st.mean_offdiag},
                {"zero_norm_trials", st.zero_norm_trials},
                {"matrix", rows}};
  write_text(run.opts.out, run.result.dump(2) + "\n");
  run.outputs = {run.opts.out};
}

void do_sweep(Run& run, std::ostream& err) {
  const auto t0 = Clock::now();
  const TrainConfig tc = run.cfg.train;
  const auto points = sparsity_sweep([&](const Dataset& d) { return train_logged(d, tc, err).model; }, run.data.data,
                                     run.cfg.eval.sweep_ratios, tc.seed, run.cfg.eval.probe);
  run.timings["sweep_s"] = since(t0);
  json rows = json::array();
  err << "ratio  accuracy\n";
  for (const SweepPoint& p : points) {
    rows.push_back({{"ratio", p.ratio}, {"accuracy", p.accuracy}});
    err << std::fixed << std::setprecision(2) << p.ratio << "   " << std::setprecision(4) << p.accuracy << "\n";
  }
  err << std::defaultfloat;
  run.result = {{"rows", rows}};
  write_text(run.opts.out, run.result.dump(2) + "\n");
  run.outputs = {run.opts.out};
}

void do_synth(Run& run, std::ostream&) {
  save_dataset(run.data.data, run.opts.out);
  run.outputs = {run.opts.out};
  run.result = {{"dataset", run.opts.out}, {"checksum", dataset_checksum(run.opts.out)}};
}

bool needs_model(const std::string& cmd) { return cmd == "embed" || cmd == "stability"; }

int execute(const Options& opts, const std::optional<RunConfig>& replay_cfg, const std::string& expected_checksum,
            std::ostream& out, std::ostream& err) {
  const auto t_total = Clock::now();
  if (opts.deterministic) kernels::set_deterministic(true);
  if (opts.out.empty()) throw ConfigError("--out is required");
  if (needs_model(opts.command) && opts.model.empty()) throw ConfigError(opts.command + " needs --model");

  Run run;
  run.opts = opts;
  run.cfg = replay_cfg ? *replay_cfg : resolve_config(opts);
  run.cfg.validate();

  auto t0 = Clock::now();
  if (opts.command == "synth") {
    SurrogateSpec spec;
    if (opts.seed) spec.seed = *opts.seed;
    run.data.data = make_surrogate(spec);
    run.data.source = "surrogate";
    run.data.checksum = memory_checksum(run.data.data);
  } else {
    run.data = load_data(opts.data, err);
  }
  run.timings["load_s"] = since(t0);
  if (!expected_checksum.empty() && expected_checksum != run.data.checksum) {
    throw DatasetError("dataset checksum " + run.data.checksum + " differs from the manifest's " + expected_checksum);
  }

  if (opts.command == "train") do_train(run, err);
  else if (opts.command == "embed") do_embed(run, err);
  else if (opts.command == "eval") do_eval(run, err);
  else if (opts.command == "ablate") do_ablate(run, err);
  else if (opts.command == "stability") do_stability(run, err);
  else if (opts.command == "sweep") do_sweep(run, err);
  else if (opts.command == "synth") do_synth(run, err);
  else throw ConfigError("unknown command '" + opts.command + "'");
  run.timings["total_s"] = since(t_total);

  const json manifest{{"engine", {{"name", "amc"}, {"version", AMC_VERSION}}},
                      {"command", opts.command},
                      {"options", options_to_json(opts)},
                      {"config", to_json(run.cfg)},
                      {"seed", run.cfg.train.seed},
                      {"dataset", {{"source", run.data.source}, {"checksum", run.data.checksum}}},
                      {"deterministic", opts.deterministic},
                      {"threads", kernels::max_threads()},
                      {"timings", run.timings},
                      {"outputs", run.outputs},
                      {"result", run.result}};
  const std::string manifest_path = artifact(opts, ".manifest.json");
  write_text(manifest_path, manifest.dump(2) + "\n");
  err << "manifest: " << manifest_path << "\n";
  out << run.result.dump(2) << "\n";
  return ok;
}

int replay(const std::string& manifest_path, const std::string& new_out, std::ostream& out, std::ostream& err) {
  std::ifstream in(manifest_path);
  if (!in) throw ConfigError(manifest_path + ": cannot open manifest");
  json m;
  try {
    m = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(manifest_path + ": " + e.what());
  }
  Options opts = options_from_json(m.at("options"));
  if (!new_out.empty()) opts.out = new_out;
  const RunConfig cfg = config_from_json(m.at("config"));
  const std::string checksum = m.at("dataset").at("checksum").get<std::string>();
  err << "replaying " << opts.command << " from " << manifest_path << "\n";
  return execute(opts, cfg, checksum, out, err);
}

std::string config_key_listing() {
  std::ostringstream os;
  os << "Configuration keys (TOML sections, defaults from the cora preset):\n";
  std::string section;
  for (const ConfigKey& k : config_keys()) {
    if (k.section != section) {
      section = k.section;
      os << "  [" << section << "]\n";
    }
    os << "    " << std::left << std::setw(22) << k.key << std::setw(18) << k.default_value << ' ' << k.description << "\n";
  }
  os << "Presets:";
  for (const std::string& p : preset_names()) os << ' ' << p;
  os << "\nExit codes: 2 usage or config, 3 dataset, 4 numerical, 5 dimension mismatch.\n";
  return os.str();
}

void add_common(CLI::App* sub, Options& o, bool with_config) {
  sub->add_option("--data", o.data, "dataset directory (default: $AMC_CORA_DIR, else the built-in surrogate)");
  sub->add_option("--out", o.out, "primary output file; the manifest goes to <out>.manifest.json")->required();
  sub->add_flag("--deterministic", o.deterministic, "single-threaded kernels for byte-identical outputs");
  if (with_config) {
    sub->add_option("--config", o.config, "TOML configuration file");
    sub->add_option("--preset", o.preset, "named preset instead of a file");
    sub->add_option("--seed", o.seed, "override train.seed");
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive multi-layer contrastive GNN: train, embed and evaluate", "amc"};
  app.require_subcommand(1);
  app.footer(config_key_listing());
  app.set_version_flag("--version", AMC_VERSION);

  Options o;
  std::string manifest_path;

  CLI::App* train_cmd = app.add_subcommand("train", "train a model; writes MODEL, MODEL.history.csv and a manifest");
  add_common(train_cmd, o, true);

  CLI::App* embed_cmd = app.add_subcommand("embed", "write unaugmented-graph embeddings (header \"N d\")");
  add_common(embed_cmd, o, false);
  embed_cmd->add_option("--model", o.model, "trained model file")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "linear probe, k-means indices and stability as JSON");
  add_common(eval_cmd, o, true);
  eval_cmd->add_option("--emb", o.emb, "embedding file");
  eval_cmd->add_option("--model", o.model, "model file (also enables mean_similarity)");

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "train a model variant and evaluate it");
  add_common(ablate_cmd, o, true);
  ablate_cmd->add_flag("--no-multilayer", o.no_multilayer, "contrast only the target encoder output");
  ablate_cmd->add_flag("--no-auxiliary", o.no_auxiliary, "drop the auxiliary encoder");
  ablate_cmd->add_option("--augment", o.augment, "rn = neighbour sampling only, am = attribute masking only")
      ->check(CLI::IsMember({"rn", "am", "both"}));

  CLI::App* stab_cmd = app.add_subcommand("stability", "cosine similarity of one node's embedding across maskings");
  add_common(stab_cmd, o, true);
  stab_cmd->add_option("--model", o.model, "model file")->required();
  stab_cmd->add_option("--node", o.node, "node index");
  stab_cmd->add_option("--trials", o.trials, "number of maskings");
  stab_cmd->add_option("--mask", o.mask, "feature mask ratio");

  CLI::App* sweep_cmd = app.add_subcommand("sweep", "retrain under feature pollution and probe each ratio");
  add_common(sweep_cmd, o, true);
  sweep_cmd->add_option("--ratios", o.ratios, "comma-separated mask ratios")->delimiter(',');

  CLI::App* synth_cmd = app.add_subcommand("synth", "write the Cora-shaped surrogate dataset to a directory");
  synth_cmd->add_option("--out", o.out, "output directory")->required();
  synth_cmd->add_option("--seed", o.seed, "generator seed");

  std::string show_preset = "cora";
  CLI::App* config_cmd = app.add_subcommand("config", "print a preset as a complete TOML file");
  config_cmd->add_option("--preset", show_preset, "preset name");

  std::string replay_out;
  CLI::App* replay_cmd = app.add_subcommand("replay", "re-run a command from its manifest");
  replay_cmd->add_option("manifest", manifest_path, "manifest file")->required();
  replay_cmd->add_option("--out", replay_out, "write to this output instead of the recorded one");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage_error;
  }

  try {
    if (config_cmd->parsed()) {
      out << to_toml(preset(show_preset));
      return ok;
    }
    if (replay_cmd->parsed()) return replay(manifest_path, replay_out, out, err);
    o.command = app.get_subcommands().front()->get_name();
    return execute(o, std::nullopt, "", out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return usage_error;
  } catch (const DatasetError& e) {
    err << "dataset error: " << e.what() << "\n";
    return dataset_error;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return numerical_error;
  } catch (const DimensionError& e) {
    err << "dimension mismatch: " << e.what() << "\n";
    return dimension_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return failure;
  }
}

}  // namespace amc::cli
