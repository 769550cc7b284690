// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "beamalign/aligner.hpp"
#include "beamalign/baselines.hpp"

namespace beamalign {

constexpr const char* kCodeVersion = "beamalign 0.1.0";

/// Configuration problems surface as ConfigError (CLI exit code 1); anything
/// else that goes wrong at run time is a plain runtime_error (exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  // dataset source
  bool synthetic = true;
  DatasetSpec dataset_spec;
  std::string dataset_path;
  double train_fraction = 0.6;

  // radio, converted from dB units exactly once at config load
  double tx_power_dbm = 10.0;
  double noise_psd_dbm_per_hz = -161.0;
  double bandwidth_hz = 1e8;

  AlignmentConfig alignment;
  TrainHyper hyper;
  std::vector<MethodKind> methods{MethodKind::kExhaustive, MethodKind::kBinary,
                                  MethodKind::kTwoTier, MethodKind::kLearnedSingle,
                                  MethodKind::kLearnedHier};
  std::vector<std::pair<int, int>> splits;  // (N1, N2) sweep axis
  std::vector<double> noise_psd_axis;       // dBm/Hz sweep axis
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  int threads = 1;
  int noise_reps = 1;

  std::string config_hash;  // of the source file, filled at load
};

/// (N1, N2) columns of the outdoor-style sweep table.
std::vector<std::pair<int, int>> default_splits_outdoor();
/// (N1, N2) columns of the indoor-style sweep table.
std::vector<std::pair<int, int>> default_splits_indoor();
/// Default noise axis: -171 .. -151 dBm/Hz, step 5.
std::vector<double> default_noise_axis();

/// FNV-1a 64 over the raw file bytes, as hex.
std::string hash_file(const std::string& path);

ExperimentConfig load_experiment_config(const std::string& path);

struct ReportRow {
  std::string method;
  int n1 = 0;
  int n2 = 0;
  std::uint64_t measurements = 0;
  double noise_psd_dbm_hz = 0.0;
  double accuracy = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

struct ExperimentReport {
  std::vector<ReportRow> rows;
  std::string config_hash;
  double wall_time_s = 0.0;
};

/// Deterministic rows only; wall time and hash go to a sidecar .meta.json.
void write_report_csv(const ExperimentReport& report, const std::string& path);
void write_report_meta(const ExperimentReport& report, const std::string& path);
ExperimentReport load_report_csv(const std::string& path);

/// Mean exact-match indicator.
double accuracy(const std::vector<int>& predicted, const std::vector<int>& oracle);

/// Oracle + fine-direction labels with group ids assigned by a pre-fit
/// cluster model (used to label the test split with training clusters).
LabelSet label_with_clusters(const Dataset& ds, const DftCodebook& v, int n_u,
                             const ClusterModel& clusters);

struct EvalContext {
  const Dataset* test = nullptr;
  const LabelSet* test_labels = nullptr;
  const DftCodebook* v = nullptr;
  RadioConfig radio;
  std::uint64_t eval_seed = 1;
  int noise_reps = 1;
  int threads = 1;
};

/// Evaluates one method on the test split with fixed per-sample noise
/// streams. Cross-checks the runtime receive-call counter of every sample
/// against measurement_count(spec).
double evaluate_method(const MethodSpec& spec, const EvalContext& ctx,
                       const HierarchicalAligner* hier,
                       const SingleTierAligner* single);

ExperimentReport run_accuracy_vs_measurements(const ExperimentConfig& config);
ExperimentReport run_accuracy_vs_noise(const ExperimentConfig& config);

/// One CSV per codebook (coarse + each fine) on the 1024-point sin grid,
/// with a per-grid-point cluster id column.
void export_patterns(const HierarchicalAligner& model, const ClusterModel& clusters,
                     const std::string& out_dir);

/// Builds (synthetic) or loads the configured dataset.
Dataset obtain_dataset(const ExperimentConfig& config);

}  // namespace beamalign
