// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links
//
// Command-line front end. Exit codes: 0 success, 1 configuration/usage error,
// 2 runtime error.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "beamalign/harness.hpp"

namespace ba = beamalign;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  int noise_reps = 1;
};

ba::ExperimentConfig load_config(const GlobalOpts& g) {
  if (g.config_path.empty())
    throw ba::ConfigError("--config <file> is required for this subcommand");
  ba::ExperimentConfig cfg = ba::load_experiment_config(g.config_path);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.alignment.seed = *g.seed;
  }
  if (g.out) cfg.out_dir = *g.out;
  if (g.threads) cfg.threads = *g.threads;
  cfg.noise_reps = g.noise_reps;
  return cfg;
}

int cmd_gen(const GlobalOpts& g, const std::string& out_path) {
  ba::ExperimentConfig cfg = load_config(g);
  ba::Dataset ds = ba::obtain_dataset(cfg);
  std::string path = out_path.empty() ? cfg.out_dir + "/dataset.baln" : out_path;
  std::filesystem::create_directories(std::filesystem::path(path).parent_path().empty()
                                          ? "."
                                          : std::filesystem::path(path).parent_path().string());
  ba::save_dataset(ds, path);
  std::cout << "wrote " << ds.size() << " channels (N_t=" << ds.n_t << ") to "
            << path << '\n';
  return 0;
}

int cmd_label(const GlobalOpts& g, const std::string& dataset_path,
              const std::string& out_path) {
  ba::ExperimentConfig cfg = load_config(g);
  ba::Dataset ds =
      dataset_path.empty() ? ba::obtain_dataset(cfg) : ba::load_dataset(dataset_path);
  const ba::DftCodebook v = ba::dft_codebook(cfg.alignment.n_t, cfg.alignment.n_v,
                                             cfg.alignment.radio.spacing);
  ba::LabelSet labels =
      ba::build_labels(ds, v, cfg.alignment.n_u, cfg.alignment.groups, cfg.seed);
  std::string path = out_path.empty() ? cfg.out_dir + "/labels.csv" : out_path;
  std::filesystem::create_directories(cfg.out_dir);
  ba::save_labels(labels, path);
  std::cout << "wrote " << labels.size() << " labels to " << path << '\n';
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& model_out) {
  ba::ExperimentConfig cfg = load_config(g);
  ba::Dataset all = ba::obtain_dataset(cfg);
  auto [train, test] = ba::split_dataset(all, cfg.train_fraction, cfg.seed);
  const ba::DftCodebook v = ba::dft_codebook(cfg.alignment.n_t, cfg.alignment.n_v,
                                             cfg.alignment.radio.spacing);
  ba::LabelSet labels =
      ba::build_labels(train, v, cfg.alignment.n_u, cfg.alignment.groups, cfg.seed);
  ba::HierarchicalAligner model =
      ba::train_hierarchical(train, labels, cfg.alignment, cfg.hyper);
  std::filesystem::create_directories(cfg.out_dir);
  std::string path = model_out.empty() ? cfg.out_dir + "/model.balc" : model_out;
  ba::save_model(model, path);
  std::cout << "trained hierarchical model -> " << path << '\n';
  return 0;
}

int cmd_eval(const GlobalOpts& g, const std::string& model_path) {
  ba::ExperimentConfig cfg = load_config(g);
  ba::Dataset all = ba::obtain_dataset(cfg);
  auto [train, test] = ba::split_dataset(all, cfg.train_fraction, cfg.seed);
  const ba::DftCodebook v = ba::dft_codebook(cfg.alignment.n_t, cfg.alignment.n_v,
                                             cfg.alignment.radio.spacing);
  ba::LabelSet train_labels =
      ba::build_labels(train, v, cfg.alignment.n_u, cfg.alignment.groups, cfg.seed);
  ba::LabelSet test_labels =
      ba::label_with_clusters(test, v, cfg.alignment.n_u, train_labels.clusters);

  ba::HierarchicalAligner model =
      model_path.empty()
          ? ba::train_hierarchical(train, train_labels, cfg.alignment, cfg.hyper)
          : ba::load_hierarchical(model_path, cfg.alignment.n_t);

  ba::EvalContext ctx;
  ctx.test = &test;
  ctx.test_labels = &test_labels;
  ctx.v = &v;
  ctx.radio = cfg.alignment.radio;
  ctx.eval_seed = cfg.seed;
  ctx.noise_reps = cfg.noise_reps;
  ctx.threads = cfg.threads;

  ba::MethodSpec spec;
  spec.kind = ba::MethodKind::kLearnedHier;
  spec.n1 = model.config.n1;
  spec.n2 = model.config.n2;

  ba::ExperimentReport report;
  report.config_hash = cfg.config_hash;
  ba::ReportRow row;
  row.method = ba::method_name(spec.kind);
  row.n1 = spec.n1;
  row.n2 = spec.n2;
  row.measurements = ba::measurement_count(spec, cfg.alignment.n_v);
  row.noise_psd_dbm_hz = cfg.noise_psd_dbm_per_hz;
  row.accuracy = ba::evaluate_method(spec, ctx, &model, nullptr);
  row.n_samples = test.size();
  row.seed = cfg.seed;
  report.rows.push_back(row);

  std::filesystem::create_directories(cfg.out_dir);
  ba::write_report_csv(report, cfg.out_dir + "/eval.csv");
  ba::write_report_meta(report, cfg.out_dir + "/eval.meta.json");
  std::cout << "accuracy " << row.accuracy << " on " << row.n_samples
            << " test channels -> " << cfg.out_dir << "/eval.csv\n";
  return 0;
}

int cmd_sweep_measurements(const GlobalOpts& g) {
  ba::ExperimentConfig cfg = load_config(g);
  ba::ExperimentReport report = ba::run_accuracy_vs_measurements(cfg);
  std::cout << report.rows.size() << " rows -> " << cfg.out_dir
            << "/accuracy_vs_measurements.csv\n";
  return 0;
}

int cmd_sweep_noise(const GlobalOpts& g) {
  ba::ExperimentConfig cfg = load_config(g);
  ba::ExperimentReport report = ba::run_accuracy_vs_noise(cfg);
  std::cout << report.rows.size() << " rows -> " << cfg.out_dir
            << "/accuracy_vs_noise.csv\n";
  return 0;
}

int cmd_export_patterns(const GlobalOpts& g, const std::string& model_path) {
  ba::ExperimentConfig cfg = load_config(g);
  ba::Dataset all = ba::obtain_dataset(cfg);
  auto [train, test] = ba::split_dataset(all, cfg.train_fraction, cfg.seed);
  const ba::DftCodebook v = ba::dft_codebook(cfg.alignment.n_t, cfg.alignment.n_v,
                                             cfg.alignment.radio.spacing);
  ba::LabelSet labels =
      ba::build_labels(train, v, cfg.alignment.n_u, cfg.alignment.groups, cfg.seed);
  ba::HierarchicalAligner model =
      model_path.empty()
          ? ba::train_hierarchical(train, labels, cfg.alignment, cfg.hyper)
          : ba::load_hierarchical(model_path, cfg.alignment.n_t);
  ba::export_patterns(model, labels.clusters, cfg.out_dir);
  std::cout << "wrote pattern CSVs to " << cfg.out_dir << '\n';
  return 0;
}

// Renders a report CSV into per-method plot-data columns (x = measurements or
// noise PSD, y = accuracy), one file per method.
int cmd_report(const GlobalOpts& g, const std::string& csv_path,
               const std::string& axis) {
  ba::ExperimentReport report = ba::load_report_csv(csv_path);
  std::string out_dir = g.out ? *g.out : "out";
  if (const char* env = std::getenv("BEAMALIGN_OUT")) out_dir = env;
  std::filesystem::create_directories(out_dir);
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  for (const auto& r : report.rows) {
    const double x = (axis == "noise") ? r.noise_psd_dbm_hz
                                       : static_cast<double>(r.measurements);
    series[r.method].emplace_back(x, r.accuracy);
  }
  for (auto& [method, pts] : series) {
    std::sort(pts.begin(), pts.end());
    std::ofstream out(out_dir + "/plot_" + method + ".csv");
    out << (axis == "noise" ? "noise_psd_dbm_hz" : "measurements") << ",accuracy\n";
    out.precision(10);
    for (const auto& [x, y] : pts) out << x << ',' << y << '\n';
  }
  std::cout << series.size() << " plot-data files -> " << out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"beam alignment workbench"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "experiment config (JSON)");
  std::uint64_t seed_val = 0;
  auto* seed_opt = app.add_option("--seed", seed_val, "override config seed");
  std::string out_val;
  auto* out_opt = app.add_option("--out", out_val, "override output directory");
  int threads_val = 1;
  auto* threads_opt = app.add_option("--threads", threads_val, "evaluation threads");
  app.add_option("--noise-reps", g.noise_reps, "noise realizations per sample");

  std::string gen_out, label_ds, label_out, train_out, eval_model, pat_model;
  std::string report_csv, report_axis = "measurements";

  auto* gen = app.add_subcommand("gen", "synthesize a channel dataset");
  gen->add_option("--dataset-out", gen_out, "dataset output path (.baln or .csv)");
  auto* label = app.add_subcommand("label", "compute oracle/group labels");
  label->add_option("--dataset", label_ds, "dataset file (default: per config)");
  label->add_option("--labels-out", label_out, "label CSV output path");
  auto* train = app.add_subcommand("train", "train the hierarchical model");
  train->add_option("--model-out", train_out, "checkpoint output path");
  auto* eval = app.add_subcommand("eval", "evaluate on the test split");
  eval->add_option("--model", eval_model, "checkpoint (default: train fresh)");
  app.add_subcommand("sweep-measurements", "accuracy vs measurement budget");
  app.add_subcommand("sweep-noise", "accuracy vs noise PSD");
  auto* pat = app.add_subcommand("export-patterns", "beam-pattern CSV export");
  pat->add_option("--model", pat_model, "checkpoint (default: train fresh)");
  auto* rep = app.add_subcommand("report", "render report CSV into plot data");
  rep->add_option("--csv", report_csv, "report CSV to render")->required();
  rep->add_option("--axis", report_axis, "x axis: measurements|noise");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }
  if (*seed_opt) g.seed = seed_val;
  if (*out_opt) g.out = out_val;
  if (*threads_opt) g.threads = threads_val;

  try {
    if (gen->parsed()) return cmd_gen(g, gen_out);
    if (label->parsed()) return cmd_label(g, label_ds, label_out);
    if (train->parsed()) return cmd_train(g, train_out);
    if (eval->parsed()) return cmd_eval(g, eval_model);
    if (app.got_subcommand("sweep-measurements")) return cmd_sweep_measurements(g);
    if (app.got_subcommand("sweep-noise")) return cmd_sweep_noise(g);
    if (pat->parsed()) return cmd_export_patterns(g, pat_model);
    if (rep->parsed()) return cmd_report(g, report_csv, report_axis);
  } catch (const ba::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
