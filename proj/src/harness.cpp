// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#include "beamalign/harness.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

namespace beamalign {

using nlohmann::json;

std::vector<std::pair<int, int>> default_splits_outdoor() {
  return {{3, 3}, {4, 4}, {4, 6}, {6, 6}, {6, 8}, {6, 10}, {6, 12}, {6, 14}};
}

std::vector<std::pair<int, int>> default_splits_indoor() {
  return {{3, 3}, {3, 5}, {3, 7}, {4, 8}, {5, 9}, {6, 10}, {6, 12}, {6, 14}};
}

std::vector<double> default_noise_axis() {
  return {-171.0, -166.0, -161.0, -156.0, -151.0};
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file for hashing: " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

namespace {

RadioConfig radio_from(const ExperimentConfig& cfg) {
  RadioConfig r;
  r.tx_power_w = dbm_to_watts(cfg.tx_power_dbm);
  r.noise_var_w = noise_power_w(cfg.noise_psd_dbm_per_hz, cfg.bandwidth_hz);
  r.n_t = cfg.alignment.n_t;
  r.spacing = cfg.alignment.radio.spacing;
  return r;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }

  ExperimentConfig cfg;
  try {
    if (j.contains("dataset")) {
      const auto& d = j["dataset"];
      const std::string source = d.value("source", "synthetic");
      if (source == "synthetic") {
        cfg.synthetic = true;
        cfg.dataset_spec.count = d.value("count", std::size_t{20000});
        cfg.dataset_spec.min_paths = d.value("paths_min", 1);
        cfg.dataset_spec.max_paths = d.value("paths_max", 3);
        cfg.dataset_spec.secondary_gain_min = d.value("secondary_gain_min", 0.1);
        cfg.dataset_spec.secondary_gain_max = d.value("secondary_gain_max", 0.5);
        if (d.contains("aod_sectors_deg")) {
          cfg.dataset_spec.aod_sectors.clear();
          for (const auto& s : d["aod_sectors_deg"])
            cfg.dataset_spec.aod_sectors.emplace_back(
                s.at(0).get<double>() * M_PI / 180.0,
                s.at(1).get<double>() * M_PI / 180.0);
        }
      } else if (source == "file") {
        cfg.synthetic = false;
        cfg.dataset_path = d.at("path").get<std::string>();
      } else {
        throw ConfigError("unknown dataset source: " + source);
      }
      cfg.train_fraction = d.value("train_fraction", 0.6);
    }

    if (j.contains("radio")) {
      const auto& r = j["radio"];
      cfg.tx_power_dbm = r.value("tx_power_dbm", 10.0);
      cfg.noise_psd_dbm_per_hz = r.value("noise_psd_dbm_per_hz", -161.0);
      cfg.bandwidth_hz = r.value("bandwidth_hz", 1e8);
      cfg.alignment.n_t = r.value("n_t", 64);
      cfg.alignment.radio.spacing = r.value("spacing", 0.5);
    }

    if (j.contains("alignment")) {
      const auto& a = j["alignment"];
      cfg.alignment.n_v = a.value("n_v", 128);
      cfg.alignment.n_u = a.value("n_u", 1024);
      cfg.alignment.groups = a.value("g", 4);
      cfg.alignment.n1 = a.value("n1", 6);
      cfg.alignment.n2 = a.value("n2", 8);
    }

    if (j.contains("train")) {
      const auto& t = j["train"];
      cfg.hyper.lr = t.value("lr", 1e-3);
      cfg.hyper.batch = t.value("batch", 256);
      cfg.hyper.max_epochs = t.value("max_epochs", 200);
      cfg.hyper.patience = t.value("patience", 20);
      cfg.hyper.val_fraction = t.value("val_fraction", 0.1);
    }

    if (j.contains("methods")) {
      cfg.methods.clear();
      for (const auto& m : j["methods"])
        cfg.methods.push_back(method_kind_from_name(m.get<std::string>()));
    }

    if (j.contains("sweep")) {
      const auto& s = j["sweep"];
      if (s.contains("splits")) {
        for (const auto& sp : s["splits"])
          cfg.splits.emplace_back(sp.at(0).get<int>(), sp.at(1).get<int>());
      } else if (s.value("table", "outdoor") == "indoor") {
        cfg.splits = default_splits_indoor();
      }
      if (s.contains("noise_psd_dbm_per_hz"))
        for (const auto& p : s["noise_psd_dbm_per_hz"])
          cfg.noise_psd_axis.push_back(p.get<double>());
    }

    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.out_dir = j.value("out_dir", std::string("out"));
    cfg.threads = j.value("threads", 1);
    cfg.noise_reps = j.value("noise_reps", 1);
  } catch (const json::exception& e) {
    throw ConfigError("config schema error in " + path + ": " + e.what());
  }

  if (cfg.splits.empty()) cfg.splits = default_splits_outdoor();
  if (cfg.noise_psd_axis.empty()) cfg.noise_psd_axis = default_noise_axis();
  for (const auto& [n1, n2] : cfg.splits)
    if (n2 < n1)
      throw ConfigError("sweep split N2 >= N1 violated: (" + std::to_string(n1) +
                        ", " + std::to_string(n2) + ")");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0, 1)");

  if (const char* env = std::getenv("BEAMALIGN_OUT")) cfg.out_dir = env;
  cfg.alignment.radio = radio_from(cfg);
  cfg.alignment.seed = cfg.seed;
  cfg.config_hash = hash_file(path);
  return cfg;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& oracle) {
  if (predicted.empty() || predicted.size() != oracle.size())
    throw std::invalid_argument("accuracy: empty or mismatched inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] == oracle[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

void write_report_csv(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_report_csv: cannot open " + path);
  out << "method,n1,n2,measurements,noise_psd_dbm_hz,accuracy,n_samples,seed\n";
  out.precision(10);
  for (const auto& r : report.rows)
    out << r.method << ',' << r.n1 << ',' << r.n2 << ',' << r.measurements << ','
        << r.noise_psd_dbm_hz << ',' << r.accuracy << ',' << r.n_samples << ','
        << r.seed << '\n';
}

void write_report_meta(const ExperimentReport& report, const std::string& path) {
  json j;
  j["config_hash"] = report.config_hash;
  j["code_version"] = kCodeVersion;
  j["wall_time_s"] = report.wall_time_s;
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

ExperimentReport load_report_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_report_csv: cannot open " + path);
  ExperimentReport rep;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> f;
    std::string tok;
    while (std::getline(ss, tok, ',')) f.push_back(tok);
    if (f.size() != 8)
      throw std::runtime_error("load_report_csv: malformed row in " + path);
    ReportRow r;
    r.method = f[0];
    r.n1 = std::stoi(f[1]);
    r.n2 = std::stoi(f[2]);
    r.measurements = std::stoull(f[3]);
    r.noise_psd_dbm_hz = std::stod(f[4]);
    r.accuracy = std::stod(f[5]);
    r.n_samples = std::stoull(f[6]);
    r.seed = std::stoull(f[7]);
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

LabelSet label_with_clusters(const Dataset& ds, const DftCodebook& v, int n_u,
                             const ClusterModel& clusters) {
  LabelSet labels;
  labels.n_v = v.n_v();
  labels.groups = clusters.groups();
  labels.clusters = clusters;
  labels.oracle_index.resize(ds.size());
  labels.sin_psi.resize(ds.size());
  labels.group_id.resize(ds.size());
  const DftCodebook u = dft_codebook(ds.n_t, n_u, v.spacing);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    labels.oracle_index[i] = oracle_best_beam(ds.samples[i].h, v);
    labels.sin_psi[i] = u.sin_psi(oracle_best_beam(ds.samples[i].h, u));
    labels.group_id[i] = clusters.assign(labels.sin_psi[i]);
  }
  return labels;
}

namespace {

// per-sample stream: independent of evaluation order and thread layout
RngStream sample_stream(std::uint64_t eval_seed, MethodKind kind,
                        std::size_t sample, int rep) {
  return RngStream(eval_seed, 0xE7A1u + static_cast<std::uint64_t>(kind))
      .substream(sample)
      .substream(static_cast<std::uint64_t>(rep));
}

}  // namespace

double evaluate_method(const MethodSpec& spec, const EvalContext& ctx,
                       const HierarchicalAligner* hier,
                       const SingleTierAligner* single) {
  const Dataset& test = *ctx.test;
  const LabelSet& labels = *ctx.test_labels;
  const DftCodebook& v = *ctx.v;
  const std::uint64_t expected = measurement_count(spec, v.n_v());
  const std::size_t n = test.size();
  const int reps = std::max(1, ctx.noise_reps);

  std::vector<std::size_t> hits(std::max(1, ctx.threads), 0);
  std::vector<std::string> errors(hits.size());
  auto work = [&](std::size_t chunk, std::size_t lo, std::size_t hi) {
    try {
      for (std::size_t i = lo; i < hi; ++i) {
        for (int rep = 0; rep < reps; ++rep) {
          RngStream rng = sample_stream(ctx.eval_seed, spec.kind, i, rep);
          int predicted = 0;
          std::uint64_t used = 0;
          switch (spec.kind) {
            case MethodKind::kExhaustive: {
              const auto r = exhaustive_search(test.samples[i].h, v, ctx.radio, rng);
              predicted = r.index;
              used = r.measurements;
              break;
            }
            case MethodKind::kBinary: {
              const auto r = binary_search(test.samples[i].h, v, ctx.radio, rng);
              predicted = r.index;
              used = r.measurements;
              break;
            }
            case MethodKind::kTwoTier: {
              const auto r =
                  two_tier_search(test.samples[i].h, v, spec.wide_size, ctx.radio, rng);
              predicted = r.index;
              used = r.measurements;
              break;
            }
            case MethodKind::kLearnedHier: {
              const auto r = align(test.samples[i].h, *hier, rng);
              predicted = r.beam;
              used = r.trace.measurements;
              break;
            }
            case MethodKind::kLearnedSingle: {
              const auto r = align_single_tier(test.samples[i].h, *single, rng);
              predicted = r.beam;
              used = r.measurements;
              break;
            }
          }
          if (used != expected)
            throw std::logic_error(
                std::string("measurement accounting mismatch for ") +
                method_name(spec.kind) + ": used " + std::to_string(used) +
                ", expected " + std::to_string(expected));
          if (predicted == labels.oracle_index[i]) ++hits[chunk];
        }
      }
    } catch (const std::exception& e) {
      errors[chunk] = e.what();
    }
  };

  const int threads = std::max(1, ctx.threads);
  if (threads == 1) {
    work(0, 0, n);
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const std::size_t lo = std::min(n, static_cast<std::size_t>(t) * per);
      const std::size_t hi = std::min(n, lo + per);
      pool.emplace_back(work, static_cast<std::size_t>(t), lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors)
    if (!e.empty()) throw std::runtime_error(e);

  std::size_t total_hits = 0;
  for (auto h : hits) total_hits += h;
  return static_cast<double>(total_hits) / static_cast<double>(n * reps);
}

Dataset obtain_dataset(const ExperimentConfig& config) {
  if (config.synthetic)
    return generate_dataset(config.dataset_spec, config.alignment.n_t,
                            config.alignment.radio.spacing, config.seed);
  Dataset ds = load_dataset(config.dataset_path);
  if (ds.n_t != config.alignment.n_t)
    throw ConfigError("dataset N_t does not match configured N_t");
  return ds;
}

namespace {

struct PreparedData {
  Dataset train;
  Dataset test;
  LabelSet train_labels;
  LabelSet test_labels;
  DftCodebook v;
};

PreparedData prepare(const ExperimentConfig& config) {
  PreparedData d;
  Dataset all = obtain_dataset(config);
  std::tie(d.train, d.test) = split_dataset(all, config.train_fraction, config.seed);
  d.v = dft_codebook(config.alignment.n_t, config.alignment.n_v,
                     config.alignment.radio.spacing);
  d.train_labels = build_labels(d.train, d.v, config.alignment.n_u,
                                config.alignment.groups, config.seed);
  d.test_labels = label_with_clusters(d.test, d.v, config.alignment.n_u,
                                      d.train_labels.clusters);
  return d;
}

void flush_report(const ExperimentReport& report, const ExperimentConfig& config,
                  const std::string& stem) {
  std::filesystem::create_directories(config.out_dir);
  write_report_csv(report, config.out_dir + "/" + stem + ".csv");
  write_report_meta(report, config.out_dir + "/" + stem + ".meta.json");
}

}  // namespace

ExperimentReport run_accuracy_vs_measurements(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.config_hash = config.config_hash;
  PreparedData data = prepare(config);

  EvalContext ctx;
  ctx.test = &data.test;
  ctx.test_labels = &data.test_labels;
  ctx.v = &data.v;
  ctx.radio = config.alignment.radio;
  ctx.eval_seed = config.seed;
  ctx.noise_reps = config.noise_reps;
  ctx.threads = config.threads;

  bool constant_methods_done = false;
  for (const auto& [n1, n2] : config.splits) {
    AlignmentConfig acfg = config.alignment;
    acfg.n1 = n1;
    acfg.n2 = n2;

    std::optional<HierarchicalAligner> hier;
    std::optional<SingleTierAligner> single;
    for (MethodKind kind : config.methods) {
      MethodSpec spec;
      spec.kind = kind;
      spec.n1 = n1;
      spec.n2 = n2;
      spec.wide_size = n1 + n2;
      // constant-measurement methods are reported once per sweep
      if ((kind == MethodKind::kExhaustive || kind == MethodKind::kBinary) &&
          constant_methods_done)
        continue;
      if (kind == MethodKind::kLearnedHier && !hier)
        hier = train_hierarchical(data.train, data.train_labels, acfg, config.hyper);
      if (kind == MethodKind::kLearnedSingle && !single)
        single = train_single_tier(data.train, data.train_labels, n1 + n2, acfg,
                                   config.hyper);
      ReportRow row;
      row.method = method_name(kind);
      row.n1 = (kind == MethodKind::kLearnedHier || kind == MethodKind::kLearnedSingle)
                   ? n1 : 0;
      row.n2 = (kind == MethodKind::kLearnedHier || kind == MethodKind::kLearnedSingle)
                   ? n2 : 0;
      if (kind == MethodKind::kTwoTier) row.n1 = spec.wide_size;
      row.measurements = measurement_count(spec, config.alignment.n_v);
      row.noise_psd_dbm_hz = config.noise_psd_dbm_per_hz;
      row.accuracy = evaluate_method(spec, ctx, hier ? &*hier : nullptr,
                                     single ? &*single : nullptr);
      row.n_samples = data.test.size();
      row.seed = config.seed;
      report.rows.push_back(std::move(row));
    }
    constant_methods_done = true;
    flush_report(report, config, "accuracy_vs_measurements");
  }

  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  flush_report(report, config, "accuracy_vs_measurements");
  return report;
}

ExperimentReport run_accuracy_vs_noise(const ExperimentConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentReport report;
  report.config_hash = config.config_hash;
  PreparedData data = prepare(config);

  const int n1 = config.alignment.n1;
  const int n2 = config.alignment.n2;
  for (double psd : config.noise_psd_axis) {
    ExperimentConfig point = config;
    point.noise_psd_dbm_per_hz = psd;
    point.alignment.radio.noise_var_w = noise_power_w(psd, config.bandwidth_hz);

    EvalContext ctx;
    ctx.test = &data.test;
    ctx.test_labels = &data.test_labels;
    ctx.v = &data.v;
    ctx.radio = point.alignment.radio;
    ctx.eval_seed = config.seed;
    ctx.noise_reps = config.noise_reps;
    ctx.threads = config.threads;

    // training noise matches the evaluation PSD at every sweep point
    std::optional<HierarchicalAligner> hier;
    std::optional<SingleTierAligner> single;
    for (MethodKind kind : config.methods) {
      MethodSpec spec;
      spec.kind = kind;
      spec.n1 = n1;
      spec.n2 = n2;
      spec.wide_size = n1 + n2;
      if (kind == MethodKind::kLearnedHier && !hier)
        hier = train_hierarchical(data.train, data.train_labels, point.alignment,
                                  config.hyper);
      if (kind == MethodKind::kLearnedSingle && !single)
        single = train_single_tier(data.train, data.train_labels, n1 + n2,
                                   point.alignment, config.hyper);
      ReportRow row;
      row.method = method_name(kind);
      row.n1 = n1;
      row.n2 = n2;
      row.measurements = measurement_count(spec, config.alignment.n_v);
      row.noise_psd_dbm_hz = psd;
      row.accuracy = evaluate_method(spec, ctx, hier ? &*hier : nullptr,
                                     single ? &*single : nullptr);
      row.n_samples = data.test.size();
      row.seed = config.seed;
      report.rows.push_back(std::move(row));
    }
    flush_report(report, config, "accuracy_vs_noise");
  }

  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  flush_report(report, config, "accuracy_vs_noise");
  return report;
}

void export_patterns(const HierarchicalAligner& model, const ClusterModel& clusters,
                     const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto grid = default_angle_grid();
  const double spacing = model.config.radio.spacing;

  auto write_codebook = [&](const PhaseCodebook& pc, const std::string& name) {
    const CMat w = phases_to_beams(pc);
    std::vector<RVec> patterns;
    for (int j = 0; j < pc.size(); ++j)
      patterns.push_back(beam_gain_pattern(w.col(j), grid, spacing));
    std::ofstream out(out_dir + "/" + name + ".csv");
    if (!out) throw std::runtime_error("export_patterns: cannot open output");
    out << "sin_psi";
    for (int j = 0; j < pc.size(); ++j) out << ",beam_" << j << "_dB";
    out << ",cluster_id\n";
    out.precision(10);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double s = std::sin(grid[k]);
      out << s;
      for (int j = 0; j < pc.size(); ++j)
        out << ',' << patterns[j][static_cast<Eigen::Index>(k)];
      out << ',' << clusters.assign(s) << '\n';
    }
  };

  write_codebook(model.coarse, "pattern_coarse");
  for (int k = 0; k < model.config.groups; ++k)
    write_codebook(model.fine[k], "pattern_fine_" + std::to_string(k));
}

}  // namespace beamalign
