#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mccf/graph.hpp"
#include "mccf/synthgen.hpp"

namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

const std::string kWorkDir = "/tmp/mccf_cli_test";

RunResult run_cli(const std::string& args) {
  const std::string out_file = kWorkDir + "/stdout.txt";
  const std::string err_file = kWorkDir + "/stderr.txt";
  const std::string cmd =
      std::string(MCCF_CLI_PATH) + " " + args + " > " + out_file + " 2> " + err_file;
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  auto slurp = [](const std::string& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

struct Setup {
  Setup() {
    fs::remove_all(kWorkDir);
    fs::create_directories(kWorkDir);
    write_file(kWorkDir + "/ratings.tsv",
               "u1\ti1\t5\t100\n"
               "u1\ti2\t3\n"
               "u2\ti2\t4\n"
               "u2\ti3\t2\n"
               "u2\ti4\t1\n"
               "u3\ti1\t1\n"
               "u3\ti4\t4\n"
               "u1\ti3\t4\n"
               "u3\ti2\t2\n"
               "u2\ti1\t3\n");
    write_file(kWorkDir + "/run.json", R"({
  "data": {"path": ")" + kWorkDir + R"(/ratings.tsv", "train_frac": 0.8},
  "model": {"components": 2, "dim": 8},
  "train": {"epochs": 2, "batch_size": 64, "learning_rate": 0.001,
            "dropout_rate": 0.1, "seed": 3}
})");
  }
};

const Setup setup_once;

}  // namespace

TEST_CASE("ingest writes a loadable snapshot and id map") {
  const auto r =
      run_cli("ingest --data " + kWorkDir + "/ratings.tsv --out-dir " + kWorkDir + "/ingest");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("users=3 items=4 ratings=10") != std::string::npos);

  std::ifstream gin(kWorkDir + "/ingest/graph.snapshot");
  const auto g = mccf::load_graph(gin);
  CHECK(g.n_users() == 3);
  CHECK(g.n_items() == 4);
  CHECK(g.max_rating() == 5);

  std::ifstream min(kWorkDir + "/ingest/idmap.tsv");
  const auto ids = mccf::load_id_map(min);
  CHECK(ids.user_raw[0] == "u1");
  CHECK(ids.item_raw[3] == "i4");
}

TEST_CASE("missing input files fail with the path in the message") {
  const auto r = run_cli("ingest --data /nonexistent/ratings.tsv --out-dir " + kWorkDir);
  CHECK(r.exit_code != 0);
  CHECK(r.err.find("error:") != std::string::npos);
  CHECK(r.err.find("/nonexistent/ratings.tsv") != std::string::npos);
}

TEST_CASE("split partitions a snapshot deterministically") {
  const auto r = run_cli("split --graph " + kWorkDir + "/ingest/graph.snapshot --train-frac 0.8 " +
                         "--seed 7 --out-dir " + kWorkDir + "/split");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("train=8 test=2") != std::string::npos);
  std::ifstream tin(kWorkDir + "/split/test.edges");
  const auto tg = mccf::load_graph(tin);
  CHECK(tg.edges().size() == 2);
}

TEST_CASE("train produces snapshot, history, and a report") {
  const auto r = run_cli("train --config " + kWorkDir + "/run.json --out-dir " + kWorkDir +
                         "/train");
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(kWorkDir + "/train/model.snapshot"));
  CHECK(fs::exists(kWorkDir + "/train/history.csv"));
  CHECK(fs::exists(kWorkDir + "/train/report.txt"));
  CHECK(r.out.find("rmse=") != std::string::npos);

  std::ifstream hin(kWorkDir + "/train/history.csv");
  std::string header;
  std::getline(hin, header);
  CHECK(header == "epoch,train_loss,val_rmse,val_mae,active_gate_fraction");
}

TEST_CASE("epochs = 0 still evaluates the untrained model") {
  write_file(kWorkDir + "/run0.json", R"({
  "data": {"path": ")" + kWorkDir + R"(/ratings.tsv", "train_frac": 0.8},
  "model": {"components": 1, "dim": 8},
  "train": {"epochs": 0, "batch_size": 64, "learning_rate": 0.001, "dropout_rate": 0.0}
})");
  const auto r =
      run_cli("train --config " + kWorkDir + "/run0.json --out-dir " + kWorkDir + "/train0");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("rmse=") != std::string::npos);
}

TEST_CASE("evaluate reloads the snapshot against explicit splits") {
  // reuse the split artifacts plus a model trained on them
  write_file(kWorkDir + "/run_pre.json", R"({
  "data": {"graph": ")" + kWorkDir + R"(/split/train.graph",
           "test": ")" + kWorkDir + R"(/split/test.edges"},
  "model": {"components": 1, "dim": 8},
  "train": {"epochs": 1, "batch_size": 64, "learning_rate": 0.001, "dropout_rate": 0.1}
})");
  auto r = run_cli("train --config " + kWorkDir + "/run_pre.json --out-dir " + kWorkDir +
                   "/train_pre");
  REQUIRE(r.exit_code == 0);
  r = run_cli("evaluate --snapshot " + kWorkDir + "/train_pre/model.snapshot --graph " +
              kWorkDir + "/split/train.graph --test " + kWorkDir + "/split/test.edges");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("rmse=") != std::string::npos);
  CHECK(r.out.find("n_scored=2") != std::string::npos);
}

TEST_CASE("sweep writes one ordered row per axis value") {
  const auto r = run_cli("sweep --config " + kWorkDir + "/run.json --axis components " +
                         "--values 2,1 --out-dir " + kWorkDir + "/sweep");
  CHECK(r.exit_code == 0);
  std::ifstream sin(kWorkDir + "/sweep/sweep.csv");
  std::string line;
  std::getline(sin, line);
  CHECK(line == "components,rmse,mae");
  std::getline(sin, line);
  CHECK(line.rfind("1,", 0) == 0);
  std::getline(sin, line);
  CHECK(line.rfind("2,", 0) == 0);
  CHECK(!std::getline(sin, line));
}

TEST_CASE("synth emits the graph snapshot and label file") {
  const auto r = run_cli("synth --users 50 --items-per-subgraph 10 --seed 5 --out-dir " +
                         kWorkDir + "/synth");
  CHECK(r.exit_code == 0);
  std::ifstream gin(kWorkDir + "/synth/synth.graph");
  const auto g = mccf::load_graph(gin);
  CHECK(g.n_users() == 50);
  CHECK(g.n_items() == 30);
  std::ifstream lin(kWorkDir + "/synth/labels.csv");
  const auto labels = mccf::read_labels(lin);
  CHECK(labels.size() == 30);
}

TEST_CASE("gradcheck exits zero and the corrupted adjoint is caught") {
  auto ok = run_cli("gradcheck --seed 2");
  CHECK(ok.exit_code == 0);
  CHECK(ok.out.find("pass=1") != std::string::npos);

  auto bad = run_cli("gradcheck --seed 2 --corrupt-adjoint");
  CHECK(bad.exit_code != 0);
  CHECK(bad.err.find("gradient check failed") != std::string::npos);
}

TEST_CASE("export-attention writes normalized rows") {
  const auto r = run_cli("export-attention --snapshot " + kWorkDir +
                         "/train/model.snapshot --graph " + kWorkDir +
                         "/split/train.graph --out-dir " + kWorkDir + "/attn");
  // the train command used an internal split of ratings.tsv with the same
  // seed, so shapes match
  CHECK(r.exit_code == 0);
  std::ifstream ain(kWorkDir + "/attn/attention.csv");
  std::string header;
  std::getline(ain, header);
  CHECK(header == "entity_id,level,idx,w_0,w_1,label");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(ain, line)) {
    if (line.empty()) continue;
    ++rows;
    // w_0 + w_1 == 1 within 1e-9
    std::istringstream ls(line);
    std::string tok;
    std::getline(ls, tok, ',');
    std::getline(ls, tok, ',');
    std::getline(ls, tok, ',');
    std::getline(ls, tok, ',');
    const double w0 = std::stod(tok);
    std::getline(ls, tok, ',');
    const double w1 = std::stod(tok);
    CHECK(std::fabs(w0 + w1 - 1.0) < 1e-9);
  }
  CHECK(rows > 0);
}

TEST_CASE("config validation: unknown keys and off-grid values are rejected") {
  write_file(kWorkDir + "/bad1.json", R"({"data": {"path": "x"}, "training": {}})");
  auto r = run_cli("train --config " + kWorkDir + "/bad1.json --out-dir " + kWorkDir);
  CHECK(r.exit_code != 0);
  CHECK(r.err.find("unknown config key") != std::string::npos);

  write_file(kWorkDir + "/bad2.json", R"({
  "data": {"path": ")" + kWorkDir + R"(/ratings.tsv"},
  "train": {"batch_size": 100}
})");
  r = run_cli("train --config " + kWorkDir + "/bad2.json --out-dir " + kWorkDir);
  CHECK(r.exit_code != 0);
  CHECK(r.err.find("outside the supported grid") != std::string::npos);
}
