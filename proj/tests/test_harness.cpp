// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "beamalign/harness.hpp"

using namespace beamalign;
namespace fs = std::filesystem;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name)
      : path("/tmp/beamalign_test_" + name) {}
  ~TempFile() { std::remove(path.c_str()); }
};

struct TempDir {
  std::string path;
  explicit TempDir(const std::string& name)
      : path("/tmp/beamalign_test_dir_" + name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

const char* kSmallConfig = R"json({
  "dataset": {"source": "synthetic", "count": 400, "train_fraction": 0.6},
  "radio": {"tx_power_dbm": 10.0, "noise_psd_dbm_per_hz": -161.0,
            "bandwidth_hz": 1e8, "n_t": 8, "spacing": 0.5},
  "alignment": {"n_v": 16, "n_u": 256, "g": 2, "n1": 3, "n2": 4},
  "train": {"batch": 64, "max_epochs": 4, "patience": 2},
  "methods": ["learned-hier"],
  "seed": 3,
  "out_dir": "unused-default"
})json";

}  // namespace

TEST_CASE("accuracy basics") {
  CHECK(accuracy({1, 2, 3}, {1, 2, 3}) == 1.0);
  CHECK(accuracy({1, 2, 3}, {4, 5, 6}) == 0.0);
  CHECK(accuracy({1, 2, 3, 4}, {1, 2, 3, 0}) == 0.75);
  CHECK_THROWS_AS((void)accuracy({}, {}), std::invalid_argument);
  CHECK_THROWS_AS((void)accuracy({1}, {1, 2}), std::invalid_argument);
}

TEST_CASE("default sweep axes") {
  const auto outdoor = default_splits_outdoor();
  REQUIRE(outdoor.size() == 8);
  CHECK(outdoor.front() == std::pair<int, int>{3, 3});
  CHECK(outdoor.back() == std::pair<int, int>{6, 14});
  const auto indoor = default_splits_indoor();
  REQUIRE(indoor.size() == 8);
  CHECK(indoor[1] == std::pair<int, int>{3, 5});
  const auto noise = default_noise_axis();
  REQUIRE(noise.size() == 5);
  CHECK(noise.front() == -171.0);
  CHECK(noise.back() == -151.0);
}

TEST_CASE("config loading converts units and records the file hash") {
  TempFile cfg_file("cfg.json");
  write_text(cfg_file.path, kSmallConfig);
  const ExperimentConfig cfg = load_experiment_config(cfg_file.path);
  CHECK(cfg.synthetic);
  CHECK(cfg.dataset_spec.count == 400);
  CHECK(cfg.alignment.n_t == 8);
  CHECK(cfg.alignment.n_v == 16);
  CHECK(cfg.alignment.groups == 2);
  CHECK(cfg.alignment.radio.tx_power_w == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(cfg.alignment.radio.noise_var_w ==
        doctest::Approx(dbm_to_watts(-161.0 + 80.0)).epsilon(1e-12));
  CHECK(cfg.seed == 3);
  CHECK(cfg.alignment.seed == 3);
  CHECK(cfg.hyper.max_epochs == 4);
  REQUIRE(cfg.methods.size() == 1);
  CHECK(cfg.methods[0] == MethodKind::kLearnedHier);
  CHECK(!cfg.config_hash.empty());
  CHECK(cfg.config_hash == hash_file(cfg_file.path));
  // defaults fill the sweep axes
  CHECK(cfg.splits == default_splits_outdoor());
  CHECK(cfg.noise_psd_axis == default_noise_axis());
}

TEST_CASE("config errors carry the offending path and rule") {
  CHECK_THROWS_AS((void)load_experiment_config("/tmp/beamalign_no_such_cfg.json"),
                  ConfigError);
  TempFile bad("bad.json");
  write_text(bad.path, "{ not json");
  CHECK_THROWS_AS((void)load_experiment_config(bad.path), ConfigError);

  TempFile badsplit("badsplit.json");
  write_text(badsplit.path, R"({"sweep": {"splits": [[6, 4]]}})");
  CHECK_THROWS_AS((void)load_experiment_config(badsplit.path), ConfigError);

  TempFile badfrac("badfrac.json");
  write_text(badfrac.path, R"({"dataset": {"train_fraction": 1.5}})");
  CHECK_THROWS_AS((void)load_experiment_config(badfrac.path), ConfigError);
}

TEST_CASE("output directory environment override") {
  TempFile cfg_file("cfg_env.json");
  write_text(cfg_file.path, kSmallConfig);
  setenv("BEAMALIGN_OUT", "/tmp/beamalign_env_out", 1);
  const ExperimentConfig cfg = load_experiment_config(cfg_file.path);
  unsetenv("BEAMALIGN_OUT");
  CHECK(cfg.out_dir == "/tmp/beamalign_env_out");
  const ExperimentConfig plain = load_experiment_config(cfg_file.path);
  CHECK(plain.out_dir == "unused-default");
}

TEST_CASE("file hash changes when the file is tampered with") {
  TempFile f("hashme.txt");
  write_text(f.path, "alpha beta gamma");
  const std::string h1 = hash_file(f.path);
  write_text(f.path, "alpha beta gammb");
  CHECK(hash_file(f.path) != h1);
  CHECK_THROWS_AS((void)hash_file("/tmp/beamalign_missing_hash.txt"), ConfigError);
}

TEST_CASE("report CSV round trip") {
  ExperimentReport rep;
  rep.config_hash = "abc123";
  rep.wall_time_s = 1.5;
  ReportRow a{"exhaustive", 0, 0, 128, -161.0, 0.9875, 8000, 1};
  ReportRow b{"learned-hier", 6, 8, 14, -161.0, 0.90125, 8000, 1};
  rep.rows = {a, b};

  TempFile csv("report.csv");
  write_report_csv(rep, csv.path);
  const ExperimentReport back = load_report_csv(csv.path);
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[0].method == "exhaustive");
  CHECK(back.rows[0].measurements == 128);
  CHECK(back.rows[0].accuracy == doctest::Approx(0.9875).epsilon(1e-12));
  CHECK(back.rows[1].method == "learned-hier");
  CHECK(back.rows[1].n1 == 6);
  CHECK(back.rows[1].n2 == 8);
  CHECK(back.rows[1].seed == 1);

  TempFile meta("report.meta.json");
  write_report_meta(rep, meta.path);
  const std::string text = read_bytes(meta.path);
  CHECK(text.find("abc123") != std::string::npos);
  CHECK(text.find("wall_time_s") != std::string::npos);
}

TEST_CASE("evaluation cross-checks the per-sample measurement counter") {
  DatasetSpec spec;
  spec.count = 100;
  Dataset all = generate_dataset(spec, 8, 0.5, 11);
  auto [train, test] = split_dataset(all, 0.5, 11);
  const DftCodebook v = dft_codebook(8, 16, 0.5);
  LabelSet train_labels = build_labels(train, v, 256, 2, 11);
  LabelSet test_labels = label_with_clusters(test, v, 256, train_labels.clusters);

  EvalContext ctx;
  ctx.test = &test;
  ctx.test_labels = &test_labels;
  ctx.v = &v;
  ctx.radio.tx_power_w = 1.0;
  ctx.radio.noise_var_w = 1e-6;
  ctx.radio.n_t = 8;
  ctx.eval_seed = 11;

  MethodSpec ms;
  ms.kind = MethodKind::kExhaustive;
  const double acc = evaluate_method(ms, ctx, nullptr, nullptr);
  CHECK(acc > 0.95);  // near-noiseless exhaustive matches the oracle labels

  // same evaluation, multi-threaded, must give the identical value
  ctx.threads = 4;
  CHECK(evaluate_method(ms, ctx, nullptr, nullptr) == acc);
}

TEST_CASE("test-split labels reuse the training clusters") {
  DatasetSpec spec;
  spec.count = 200;
  Dataset ds = generate_dataset(spec, 8, 0.5, 21);
  const DftCodebook v = dft_codebook(8, 16, 0.5);
  LabelSet base = build_labels(ds, v, 256, 3, 21);
  LabelSet relabeled = label_with_clusters(ds, v, 256, base.clusters);
  CHECK(relabeled.oracle_index == base.oracle_index);
  CHECK(relabeled.group_id == base.group_id);
  CHECK(relabeled.clusters.centroids == base.clusters.centroids);
}

// ---------------------------------------------------------------------------
// End-to-end CLI checks; the test runner exports BEAMALIGN_CLI.

namespace {

int run_cli(const std::string& args) {
  const char* cli = std::getenv("BEAMALIGN_CLI");
  REQUIRE(cli != nullptr);
  const int status = std::system((std::string(cli) + " " + args +
                                  " > /dev/null 2> /dev/null")
                                     .c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("cli pipeline: gen, label, train, eval") {
  TempDir out("cli");
  TempFile cfg_file("cli_cfg.json");
  write_text(cfg_file.path, kSmallConfig);
  const std::string base = "--config " + cfg_file.path + " --out " + out.path;

  CHECK(run_cli(base + " gen --dataset-out " + out.path + "/ds.baln") == 0);
  CHECK(fs::exists(out.path + "/ds.baln"));
  const Dataset ds = load_dataset(out.path + "/ds.baln");
  CHECK(ds.size() == 400);

  CHECK(run_cli(base + " label --dataset " + out.path + "/ds.baln --labels-out " +
                out.path + "/labels.csv") == 0);
  CHECK(fs::exists(out.path + "/labels.csv"));

  CHECK(run_cli(base + " train --model-out " + out.path + "/model.balc") == 0);
  CHECK(fs::exists(out.path + "/model.balc"));

  CHECK(run_cli(base + " eval --model " + out.path + "/model.balc") == 0);
  CHECK(fs::exists(out.path + "/eval.csv"));
  CHECK(fs::exists(out.path + "/eval.meta.json"));
  const ExperimentReport rep = load_report_csv(out.path + "/eval.csv");
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].method == "learned-hier");
  CHECK(rep.rows[0].measurements == 7);
}

TEST_CASE("cli runs with the same seed are byte-identical") {
  TempDir out_a("seed_a");
  TempDir out_b("seed_b");
  TempFile cfg_file("seed_cfg.json");
  write_text(cfg_file.path, kSmallConfig);
  const std::string common = "--config " + cfg_file.path + " --seed 7 ";
  CHECK(run_cli(common + "--out " + out_a.path + " train --model-out " +
                out_a.path + "/m.balc") == 0);
  CHECK(run_cli(common + "--out " + out_b.path + " train --model-out " +
                out_b.path + "/m.balc") == 0);
  CHECK(read_bytes(out_a.path + "/m.balc") == read_bytes(out_b.path + "/m.balc"));
  CHECK(!read_bytes(out_a.path + "/m.balc").empty());
}

TEST_CASE("cli reports config and usage errors distinctly") {
  CHECK(run_cli("train --config /tmp/beamalign_no_such.json") == 1);
  CHECK(run_cli("no-such-subcommand") == 1);
  CHECK(run_cli("train") == 1);       // no --config
  CHECK(run_cli("--help") == 0);
  TempFile cfg_file("err_cfg.json");
  write_text(cfg_file.path, kSmallConfig);
  // runtime (not config) failure: evaluating a checkpoint that does not exist
  CHECK(run_cli("--config " + cfg_file.path +
                " --out /tmp/beamalign_err_out eval --model /tmp/no.balc") == 2);
}

TEST_CASE("cli report subcommand renders plot data per method") {
  TempDir out("plot");
  ExperimentReport rep;
  rep.rows = {{"binary", 0, 0, 14, -161.0, 0.45, 100, 1},
              {"learned-hier", 3, 4, 7, -161.0, 0.8, 100, 1},
              {"learned-hier", 6, 8, 14, -161.0, 0.9, 100, 1}};
  TempFile csv("plot_src.csv");
  write_report_csv(rep, csv.path);
  CHECK(run_cli("--out " + out.path + " report --csv " + csv.path +
                " --axis measurements") == 0);
  CHECK(fs::exists(out.path + "/plot_binary.csv"));
  CHECK(fs::exists(out.path + "/plot_learned-hier.csv"));
  const std::string text = read_bytes(out.path + "/plot_learned-hier.csv");
  CHECK(text.find("measurements,accuracy") != std::string::npos);
  CHECK(text.find("7,0.8") != std::string::npos);
  CHECK(text.find("14,0.9") != std::string::npos);
}
