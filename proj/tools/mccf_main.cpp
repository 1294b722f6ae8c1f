// mccf: multi-component graph convolutional collaborative filtering
//
// Subcommands: ingest, split, train, evaluate, sweep, synth, gradcheck,
// export-attention. Run configs are JSON (see README); every run is
// deterministic given the config and seed.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mccf/evaluator.hpp"
#include "mccf/gradcheck.hpp"
#include "mccf/graph.hpp"
#include "mccf/model.hpp"
#include "mccf/sampler.hpp"
#include "mccf/synthgen.hpp"
#include "mccf/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mccf;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ifstream open_input(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw CliError("cannot open input file: " + path);
  return in;
}

std::ofstream open_output(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw CliError("cannot open output file: " + path);
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw CliError("cannot create output directory: " + dir);
}

// ------------------------------------------------------------- run config

struct RunConfig {
  std::string data_path;   // raw ratings text
  std::string graph_path;  // pre-ingested train graph snapshot
  std::string test_path;   // pre-split test edges snapshot
  char delimiter = '\t';
  std::int32_t max_rating = 0;  // 0 = infer
  FeatureMode mode = FeatureMode::rating_valued;
  double train_frac = 0.8;
  ModelConfig model;
  TrainConfig train;
};

void reject_unknown(const json& obj, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw CliError("unknown config key '" + key + "' in " + where);
  }
}

void check_grid_d(double v, std::initializer_list<double> grid, const char* name) {
  for (double g : grid)
    if (std::fabs(v - g) < 1e-12) return;
  std::ostringstream ss;
  ss << "config: " << name << " = " << v << " is outside the supported grid";
  throw CliError(ss.str());
}

void check_grid_i(std::int64_t v, std::initializer_list<std::int64_t> grid, const char* name) {
  for (auto g : grid)
    if (v == g) return;
  std::ostringstream ss;
  ss << "config: " << name << " = " << v << " is outside the supported grid";
  throw CliError(ss.str());
}

RunConfig load_run_config(const std::string& path) {
  auto in = open_input(path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::exception& e) {
    throw CliError("config parse error in " + path + ": " + e.what());
  }
  reject_unknown(root, {"data", "model", "train"}, "config root");
  RunConfig rc;

  if (root.contains("data")) {
    const auto& d = root["data"];
    reject_unknown(d,
                   {"path", "graph", "test", "delimiter", "max_rating", "feature_mode",
                    "train_frac"},
                   "data");
    rc.data_path = d.value("path", "");
    rc.graph_path = d.value("graph", "");
    rc.test_path = d.value("test", "");
    const std::string delim = d.value("delimiter", "\t");
    if (delim.size() != 1) throw CliError("config: delimiter must be one character");
    rc.delimiter = delim[0];
    rc.max_rating = d.value("max_rating", 0);
    rc.mode = feature_mode_from_string(d.value("feature_mode", "rating-valued"));
    rc.train_frac = d.value("train_frac", 0.8);
  }
  if (root.contains("model")) {
    const auto& m = root["model"];
    reject_unknown(m,
                   {"components", "dim", "activation", "leaky_slope", "node_attention",
                    "component_attention", "l0_gates", "mlp_hidden"},
                   "model");
    rc.model.components = m.value("components", 2);
    rc.model.dim = m.value("dim", 64);
    const std::string act = m.value("activation", "relu");
    if (act == "relu") {
      rc.model.activation = Activation::relu;
    } else if (act == "leaky_relu") {
      rc.model.activation = Activation::leaky_relu;
    } else {
      throw CliError("config: unknown activation '" + act + "'");
    }
    rc.model.leaky_slope = m.value("leaky_slope", 0.2);
    rc.model.node_attention = m.value("node_attention", true);
    rc.model.component_attention = m.value("component_attention", true);
    rc.model.l0_gates = m.value("l0_gates", true);
    if (m.contains("mlp_hidden"))
      rc.model.mlp_hidden = m["mlp_hidden"].get<std::vector<std::int32_t>>();
  }
  if (root.contains("train")) {
    const auto& t = root["train"];
    reject_unknown(t,
                   {"epochs", "batch_size", "learning_rate", "dropout_rate", "lambda", "seed",
                    "adam_beta1", "adam_beta2", "adam_eps", "early_stop_patience",
                    "val_fraction", "resample_each_epoch"},
                   "train");
    rc.train.epochs = t.value("epochs", 30);
    rc.train.batch_size = t.value("batch_size", 128);
    rc.train.learning_rate = t.value("learning_rate", 0.001);
    rc.train.dropout_rate = t.value("dropout_rate", 0.5);
    rc.train.lambda = t.value("lambda", 1e-4);
    rc.train.seed = t.value("seed", std::uint64_t(1));
    rc.train.adam.beta1 = t.value("adam_beta1", 0.9);
    rc.train.adam.beta2 = t.value("adam_beta2", 0.999);
    rc.train.adam.eps = t.value("adam_eps", 1e-8);
    rc.train.early_stop_patience = t.value("early_stop_patience", 0);
    rc.train.val_fraction = t.value("val_fraction", 0.1);
    rc.train.resample_each_epoch = t.value("resample_each_epoch", true);
  }

  // hyperparameter grids from the run configuration contract
  check_grid_i(rc.train.batch_size, {64, 128, 256, 512}, "train.batch_size");
  check_grid_d(rc.train.learning_rate, {0.0005, 0.001, 0.002, 0.0025}, "train.learning_rate");
  check_grid_d(rc.train.dropout_rate, {0.0, 0.1, 0.4, 0.5, 0.6}, "train.dropout_rate");
  check_grid_i(rc.model.components, {1, 2, 3, 4}, "model.components");
  check_grid_i(rc.model.dim, {8, 16, 32, 64, 128}, "model.dim");
  rc.model.validate();
  rc.train.validate();
  return rc;
}

// --------------------------------------------------------------- data plumbing

struct Dataset {
  BipartiteGraph train;
  std::vector<RatingEdge> test;
};

Dataset load_dataset(const RunConfig& rc) {
  if (!rc.graph_path.empty()) {
    Dataset ds;
    auto gin = open_input(rc.graph_path);
    ds.train = load_graph(gin);
    if (!rc.test_path.empty()) {
      auto tin = open_input(rc.test_path);
      const auto tg = load_graph(tin);
      if (tg.n_users() != ds.train.n_users() || tg.n_items() != ds.train.n_items())
        throw CliError("test edges do not match the train graph shape");
      ds.test = tg.edges();
    }
    return ds;
  }
  if (rc.data_path.empty())
    throw CliError("config: either data.path or data.graph must be set");
  auto in = open_input(rc.data_path);
  const auto parsed = parse_ratings(in, rc.delimiter, rc.max_rating);
  if (!parsed.error_flag.empty())
    throw CliError("dataset " + rc.data_path + ": " + parsed.error_flag);
  const auto graph = graph_from_parse(parsed);
  auto split = split_train_test(graph, rc.train_frac, rc.train.seed);
  if (!split.warning.empty()) std::cerr << "warning: " << split.warning << '\n';
  return {std::move(split.train), std::move(split.test)};
}

void print_report(const EvalReport& rep, std::ostream& os) {
  os << "rmse=" << rep.rmse << "\nmae=" << rep.mae << "\nn_scored=" << rep.n_scored
     << "\nn_fallback=" << rep.n_fallback << '\n';
  os << "csv:rmse,mae,n_scored,n_fallback\ncsv:" << rep.rmse << ',' << rep.mae << ','
     << rep.n_scored << ',' << rep.n_fallback << '\n';
}

// ----------------------------------------------------------------- commands

int cmd_ingest(const std::string& data, const std::string& delim, std::int32_t max_rating,
               const std::string& out_dir) {
  if (delim.size() != 1) throw CliError("--delimiter must be one character");
  ensure_dir(out_dir);
  auto in = open_input(data);
  const auto parsed = parse_ratings(in, delim[0], max_rating);
  if (!parsed.error_flag.empty()) throw CliError("dataset " + data + ": " + parsed.error_flag);
  const auto graph = graph_from_parse(parsed);
  {
    auto out = open_output(out_dir + "/graph.snapshot");
    save_graph(graph, out);
  }
  {
    auto out = open_output(out_dir + "/idmap.tsv");
    save_id_map(parsed.ids, out);
  }
  std::cout << "users=" << graph.n_users() << " items=" << graph.n_items()
            << " ratings=" << graph.edges().size() << " max_rating=" << graph.max_rating()
            << '\n';
  return 0;
}

int cmd_split(const std::string& graph_path, double train_frac, std::uint64_t seed,
              const std::string& out_dir) {
  ensure_dir(out_dir);
  auto in = open_input(graph_path);
  const auto graph = load_graph(in);
  const auto split = split_train_test(graph, train_frac, seed);
  if (!split.warning.empty()) std::cerr << "warning: " << split.warning << '\n';
  {
    auto out = open_output(out_dir + "/train.graph");
    save_graph(split.train, out);
  }
  {
    auto out = open_output(out_dir + "/test.edges");
    save_edges(split.test, graph.n_users(), graph.n_items(), graph.max_rating(), out);
  }
  std::cout << "train=" << split.train.edges().size() << " test=" << split.test.size() << '\n';
  return 0;
}

int cmd_train(const RunConfig& rc, const std::string& out_dir) {
  ensure_dir(out_dir);
  const auto ds = load_dataset(rc);
  auto trained = train(ds.train, rc.mode, rc.model, rc.train, &std::cerr);
  if (trained.result.diverged)
    std::cerr << "warning: training diverged (" << trained.result.divergence_reason
              << "); keeping the last good snapshot\n";
  {
    auto out = open_output(out_dir + "/model.snapshot", /*binary=*/true);
    trained.model.save(out);
  }
  {
    auto out = open_output(out_dir + "/history.csv");
    write_history_csv(trained.result.history, out);
  }
  if (!ds.test.empty()) {
    const auto rep = evaluate(trained.model, ds.train, ds.test);
    print_report(rep, std::cout);
    auto out = open_output(out_dir + "/report.txt");
    print_report(rep, out);
  } else {
    std::cout << "no test edges configured; skipping the final report\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& snapshot, const std::string& graph_path,
                 const std::string& test_path, const std::string& out_dir) {
  auto sin = open_input(snapshot, /*binary=*/true);
  const auto model = Mccf::load(sin);
  auto gin = open_input(graph_path);
  const auto graph = load_graph(gin);
  auto tin = open_input(test_path);
  const auto test_graph = load_graph(tin);
  const auto rep = evaluate(model, graph, test_graph.edges());
  print_report(rep, std::cout);
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    auto out = open_output(out_dir + "/report.txt");
    print_report(rep, out);
  }
  return 0;
}

int cmd_sweep(RunConfig rc, const std::string& axis, std::vector<std::int32_t> values,
              const std::string& out_dir) {
  if (values.empty()) throw CliError("sweep: no axis values given");
  std::sort(values.begin(), values.end());
  for (auto v : values) {
    if (axis == "components") {
      check_grid_i(v, {1, 2, 3, 4}, "sweep value");
    } else if (axis == "dim") {
      check_grid_i(v, {8, 16, 32, 64, 128}, "sweep value");
    } else {
      throw CliError("sweep: axis must be 'components' or 'dim'");
    }
  }
  ensure_dir(out_dir);
  const auto ds = load_dataset(rc);
  if (ds.test.empty()) throw CliError("sweep: needs a test split (data.path or data.test)");

  auto out = open_output(out_dir + "/sweep.csv");
  out << axis << ",rmse,mae\n";
  for (auto v : values) {
    RunConfig run = rc;
    if (axis == "components") {
      run.model.components = v;
    } else {
      run.model.dim = v;
      run.model.mlp_hidden.clear();  // keep the head sized to the embedding
    }
    auto trained = train(ds.train, run.mode, run.model, run.train, nullptr);
    const auto rep = evaluate(trained.model, ds.train, ds.test);
    out << v << ',' << rep.rmse << ',' << rep.mae << '\n';
    std::cout << axis << '=' << v << " rmse=" << rep.rmse << " mae=" << rep.mae << '\n';
  }
  return 0;
}

int cmd_synth(const SynthConfig& sc, const std::string& out_dir) {
  ensure_dir(out_dir);
  const auto result = generate(sc);
  {
    auto out = open_output(out_dir + "/synth.graph");
    save_graph(result.graph, out);
  }
  {
    auto out = open_output(out_dir + "/labels.csv");
    write_labels(result.item_labels, out);
  }
  std::cout << "users=" << result.graph.n_users() << " items=" << result.graph.n_items()
            << " ratings=" << result.graph.edges().size() << '\n';
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, bool corrupt) {
  const auto report = gradcheck(seed, corrupt);
  for (const auto& g : report.groups)
    std::cout << "group=" << g.name << " entries=" << g.entries
              << " max_rel_err=" << g.max_rel_err << " pass=" << (g.pass ? 1 : 0) << '\n';
  std::cout << "kink_margin=" << report.kink_margin << " redraws=" << report.redraws
            << " pass=" << (report.pass ? 1 : 0) << '\n';
  if (!report.pass) {
    std::cerr << "error: gradient check failed for:";
    for (const auto& g : report.groups)
      if (!g.pass) std::cerr << ' ' << g.name;
    std::cerr << '\n';
    return 1;
  }
  return 0;
}

int cmd_export_attention(const std::string& snapshot, const std::string& graph_path,
                         std::optional<std::int32_t> user, const std::string& labels_path,
                         const std::string& out_dir) {
  ensure_dir(out_dir);
  auto sin = open_input(snapshot, /*binary=*/true);
  const auto model = Mccf::load(sin);
  auto gin = open_input(graph_path);
  const auto graph = load_graph(gin);
  std::vector<std::int32_t> labels;
  const std::vector<std::int32_t>* labels_ptr = nullptr;
  if (!labels_path.empty()) {
    auto lin = open_input(labels_path);
    labels = read_labels(lin);
    labels_ptr = &labels;
  }
  const auto dump = export_attention(model, graph, user, labels_ptr);
  auto out = open_output(out_dir + "/attention.csv");
  write_attention_csv(dump, out);
  std::cout << "rows=" << dump.rows.size() << " components=" << dump.components << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-component graph convolutional collaborative filtering"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_set = false, deterministic = false;
  app.add_option("--config", config_path, "JSON run configuration")->configurable(false);
  app.add_option("--out-dir", out_dir, "output directory");
  app.add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
    seed_set = true;
  });
  // Single-process runs are already deterministic per seed; the flag is
  // accepted so scripted invocations can state the intent explicitly.
  app.add_flag("--deterministic", deterministic, "force deterministic execution");

  auto* ingest = app.add_subcommand("ingest", "parse a ratings file into a graph snapshot");
  std::string data, delim = "\t";
  std::int32_t max_rating = 0;
  ingest->add_option("--data", data, "ratings text file")->required();
  ingest->add_option("--delimiter", delim, "field delimiter (default tab)");
  ingest->add_option("--max-rating", max_rating, "fixed rating ceiling (default: infer)");

  auto* split = app.add_subcommand("split", "seeded train/test partition of a snapshot");
  std::string graph_path;
  double train_frac = 0.8;
  split->add_option("--graph", graph_path, "graph snapshot")->required();
  split->add_option("--train-frac", train_frac, "train fraction (default 0.8)");

  auto* train_cmd = app.add_subcommand("train", "train a model per the run config");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "score a snapshot on test edges");
  std::string snapshot, test_path;
  evaluate_cmd->add_option("--snapshot", snapshot, "model snapshot")->required();
  evaluate_cmd->add_option("--graph", graph_path, "train graph snapshot")->required();
  evaluate_cmd->add_option("--test", test_path, "test edges snapshot")->required();

  auto* sweep = app.add_subcommand("sweep", "train/evaluate across components or dim");
  std::string axis;
  std::vector<std::int32_t> values;
  sweep->add_option("--axis", axis, "components | dim")->required();
  sweep->add_option("--values", values, "axis values")->required()->delimiter(',');

  auto* synth = app.add_subcommand("synth", "generate the multi-component synthetic graph");
  SynthConfig sc;
  std::string rating_rule = "component-signal";
  synth->add_option("--users", sc.n_users, "shared users (default 300)");
  synth->add_option("--items-per-subgraph", sc.items_per_subgraph, "items per block (default 100)");
  synth->add_option("--variances", sc.variances, "block variances")->delimiter(',');
  synth->add_option("--threshold", sc.threshold, "connection threshold (default 0.5)");
  synth->add_option("--rating-rule", rating_rule, "component-signal | constant-one");

  auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  bool corrupt = false;
  gradcheck_cmd->add_flag("--corrupt-adjoint", corrupt,
                          "sabotage one adjoint rule (harness sensitivity check)");

  auto* export_cmd = app.add_subcommand("export-attention", "dump hierarchical attention weights");
  std::int32_t export_user = -1;
  std::string labels_path;
  export_cmd->add_option("--snapshot", snapshot, "model snapshot")->required();
  export_cmd->add_option("--graph", graph_path, "train graph snapshot")->required();
  export_cmd->add_option("--user", export_user, "node-level context user (default: max degree)");
  export_cmd->add_option("--labels", labels_path, "item label file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (ingest->parsed()) return cmd_ingest(data, delim, max_rating, out_dir);
    if (split->parsed())
      return cmd_split(graph_path, train_frac, seed_set ? seed : 1, out_dir);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(seed_set ? seed : 1, corrupt);
    if (synth->parsed()) {
      if (rating_rule == "component-signal") {
        sc.rating_rule = SynthConfig::RatingRule::component_signal;
      } else if (rating_rule == "constant-one") {
        sc.rating_rule = SynthConfig::RatingRule::constant_one;
      } else {
        throw CliError("unknown rating rule '" + rating_rule + "'");
      }
      sc.seed = seed_set ? seed : 1;
      return cmd_synth(sc, out_dir);
    }
    if (evaluate_cmd->parsed()) return cmd_evaluate(snapshot, graph_path, test_path, out_dir);
    if (export_cmd->parsed()) {
      std::optional<std::int32_t> user;
      if (export_user >= 0) user = export_user;
      return cmd_export_attention(snapshot, graph_path, user, labels_path, out_dir);
    }
    // train and sweep need the run config
    if (config_path.empty()) throw CliError("--config is required for this command");
    RunConfig rc = load_run_config(config_path);
    if (seed_set) rc.train.seed = seed;
    if (train_cmd->parsed()) return cmd_train(rc, out_dir);
    if (sweep->parsed()) return cmd_sweep(rc, axis, values, out_dir);
    throw CliError("no subcommand dispatched");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
