// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#include "beamalign/aligner.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>

namespace beamalign {

namespace {

// fixed stream ids per training concern, all derived from config.seed
enum StreamId : std::uint64_t {
  kCoarseThetaInit = 101,
  kSelectorInit = 102,
  kStatsNoise = 103,
  kValSplit = 104,
  kValNoise = 105,
  kShuffle = 106,
  kTrainNoise = 107,
  kFineThetaInit = 201,
  kPredictorInit = 301,
  kFineStatsNoise = 401,
  kFineValNoise = 402,
  kFineShuffle = 403,
  kFineTrainNoise = 404,
  kSingleThetaInit = 501,
  kSinglePredictorInit = 502,
  kSingleStatsNoise = 503,
  kSingleValNoise = 504,
  kSingleShuffle = 505,
  kSingleTrainNoise = 506,
};

int argmax_first(const RVec& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

CMat dataset_matrix(const Dataset& ds, const std::vector<std::size_t>& idx) {
  CMat h(ds.n_t, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t c = 0; c < idx.size(); ++c) h.col(static_cast<Eigen::Index>(c)) = ds.samples[idx[c]].h;
  return h;
}

std::pair<RMat, RMat> make_noise(RngStream& rng, int rows, Eigen::Index cols,
                                 double variance) {
  RMat re(rows, cols), im(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) {
      const Complex n = rng.next_complex_gaussian(variance);
      re(r, c) = n.real();
      im(r, c) = n.imag();
    }
  return {std::move(re), std::move(im)};
}

template <typename T>
std::vector<T> gather(const std::vector<T>& src, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(src[i]);
  return out;
}

// 90/10-style carve-out of 0..n-1 index lists
struct ValSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

ValSplit carve_validation(std::size_t n, double fraction, RngStream& rng) {
  ValSplit s;
  const auto perm = rng.permutation(n);
  std::size_t n_val = static_cast<std::size_t>(std::floor(fraction * n));
  if (n_val == n) n_val = n - 1;
  for (std::size_t i = 0; i < n; ++i)
    (i < n_val ? s.val : s.train).push_back(perm[i]);
  return s;
}

void scale_pack(ParamPack& pack, double factor) {
  for (std::size_t i = 0; i < pack.tensors(); ++i) pack.view(i) *= factor;
}

}  // namespace

void AlignmentConfig::validate() const {
  if (n_t < 1 || n_v < 2 || n1 < 1 || n2 < 1 || groups < 1 || n_u < n_v)
    throw std::invalid_argument("AlignmentConfig: invalid sizes");
  if (n2 < n1)
    throw std::invalid_argument("AlignmentConfig: fine probing size N2 < N1");
  if (!(radio.tx_power_w > 0.0) || radio.noise_var_w < 0.0)
    throw std::invalid_argument("AlignmentConfig: invalid radio parameters");
  if (n1 + n2 >= n_v)
    std::cerr << "warning: probing size N1+N2 = " << (n1 + n2)
              << " is not small relative to N_V = " << n_v << "\n";
}

SelectResult select_fine(const RVec& z_c, const Mlp& selector,
                         const TransformStats& stats) {
  if (z_c.size() != selector.input_dim())
    throw std::invalid_argument("select_fine: dimension mismatch");
  SelectResult res;
  res.p = mlp_forward(selector, input_transform(z_c, stats));
  res.k_star = argmax_first(res.p);
  return res;
}

PredictResult predict_beam(const RVec& z_c, const RVec& z_f, const Mlp& predictor,
                           const TransformStats& stats) {
  if (z_c.size() + z_f.size() != predictor.input_dim())
    throw std::invalid_argument("predict_beam: dimension mismatch");
  RVec z(z_c.size() + z_f.size());
  z << z_c, z_f;
  PredictResult res;
  res.q = mlp_forward(predictor, input_transform(z, stats));
  res.beam = argmax_first(res.q);
  return res;
}

AlignResult align(const CVec& h, const HierarchicalAligner& model, RngStream& rng) {
  if (h.size() != model.config.n_t)
    throw std::invalid_argument("align: channel length does not match model N_t");
  AlignResult out;
  const PcMeasurement mc =
      pc_forward(model.coarse, h, model.config.radio, rng, &out.trace.measurements);
  const SelectResult sel = select_fine(mc.z, model.selector, model.selector_stats);
  const PcMeasurement mf = pc_forward(model.fine[sel.k_star], h, model.config.radio,
                                      rng, &out.trace.measurements);
  const PredictResult pred = predict_beam(
      mc.z, mf.z, model.predictors[sel.k_star], model.predictor_stats[sel.k_star]);
  out.beam = pred.beam;
  out.trace = {mc.z, mf.z, sel.p, pred.q, sel.k_star, out.trace.measurements};
  return out;
}

SingleAlignResult align_single_tier(const CVec& h, const SingleTierAligner& model,
                                    RngStream& rng) {
  if (h.size() != model.config.n_t)
    throw std::invalid_argument("align_single_tier: channel length mismatch");
  SingleAlignResult out;
  const PcMeasurement m =
      pc_forward(model.codebook, h, model.config.radio, rng, &out.measurements);
  out.q = mlp_forward(model.predictor, input_transform(m.z, model.stats));
  out.beam = argmax_first(out.q);
  return out;
}

int worst_case_sweep_count(const AlignmentConfig& config) {
  return config.n1 + config.groups * config.n2;
}

// ---------------------------------------------------------------------------
// Sum-reduced batch losses.

double coarse_loss_grad(const PhaseCodebook& coarse, const Mlp& selector,
                        const TransformStats& stats, const CoarseBatch& batch,
                        double tx_power_w, RMat* d_theta, MlpGrad* d_selector) {
  const Eigen::Index b = batch.h.cols();
  if (static_cast<Eigen::Index>(batch.group.size()) != b)
    throw std::invalid_argument("coarse_loss_grad: label count mismatch");
  if ((d_theta == nullptr) != (d_selector == nullptr))
    throw std::invalid_argument("coarse_loss_grad: pass both gradient sinks or neither");
  const int groups = selector.output_dim();
  const double scale = 1.0 / groups;

  const PcBatch pcb =
      pc_forward_batch(coarse.theta, batch.h, tx_power_w, batch.noise_re, batch.noise_im);
  const RMat t = input_transform(pcb.z, stats);
  MlpCache cache;
  const RMat p = mlp_forward(selector, t, d_selector ? &cache : nullptr);

  double loss = 0.0;
  for (Eigen::Index c = 0; c < b; ++c)
    loss += cross_entropy(p.col(c), batch.group[c], scale);
  if (!d_selector && !d_theta) return loss;

  RMat dlogits(p.rows(), b);
  for (Eigen::Index c = 0; c < b; ++c)
    dlogits.col(c) = ce_logit_grad(p.col(c), batch.group[c], scale);
  const RMat dt = mlp_backward(selector, cache, dlogits, *d_selector);
  if (d_theta) {
    const RMat dz = transform_backward(pcb.z, stats, dt);
    RMat dy_re, dy_im;
    power_backward(pcb.y_re, pcb.y_im, dz, dy_re, dy_im);
    *d_theta = pc_backward_batch(coarse.theta, batch.h, tx_power_w, dy_re, dy_im);
  }
  return loss;
}

double fine_loss_grad(const HierarchicalAligner& model, const FineBatch& batch,
                      std::vector<RMat>* d_theta_f, std::vector<MlpGrad>* d_pred,
                      std::vector<int>* routed) {
  const Eigen::Index b = batch.h.cols();
  if (static_cast<Eigen::Index>(batch.beam.size()) != b)
    throw std::invalid_argument("fine_loss_grad: label count mismatch");
  if ((d_theta_f == nullptr) != (d_pred == nullptr))
    throw std::invalid_argument("fine_loss_grad: pass both gradient sinks or neither");
  const AlignmentConfig& cfg = model.config;
  const double rho = cfg.radio.tx_power_w;
  const double scale = 1.0 / cfg.n_v;

  // frozen coarse sweep; the same z_c noise serves routing and predictor input
  const PcBatch pcc = pc_forward_batch(model.coarse.theta, batch.h, rho,
                                       batch.nc_re, batch.nc_im);
  const RMat tc = input_transform(pcc.z, model.selector_stats);
  const RMat p = mlp_forward(model.selector, tc);

  std::vector<std::vector<std::size_t>> branch_members(cfg.groups);
  if (routed) routed->assign(b, 0);
  for (Eigen::Index c = 0; c < b; ++c) {
    RVec col = p.col(c);
    const int k = argmax_first(col);
    branch_members[k].push_back(static_cast<std::size_t>(c));
    if (routed) (*routed)[c] = k;
  }

  double loss = 0.0;
  for (int k = 0; k < cfg.groups; ++k) {
    const auto& members = branch_members[k];
    if (members.empty()) continue;
    const Eigen::Index bk = static_cast<Eigen::Index>(members.size());
    CMat hk(cfg.n_t, bk);
    RMat nf_re(cfg.n2, bk), nf_im(cfg.n2, bk);
    RMat zc(cfg.n1, bk);
    std::vector<int> labels(members.size());
    for (Eigen::Index c = 0; c < bk; ++c) {
      const Eigen::Index src = static_cast<Eigen::Index>(members[c]);
      hk.col(c) = batch.h.col(src);
      nf_re.col(c) = batch.nf_re.col(src);
      nf_im.col(c) = batch.nf_im.col(src);
      zc.col(c) = pcc.z.col(src);
      labels[c] = batch.beam[members[c]];
    }

    const PcBatch pcf = pc_forward_batch(model.fine[k].theta, hk, rho, nf_re, nf_im);
    RMat zcat(cfg.n1 + cfg.n2, bk);
    zcat.topRows(cfg.n1) = zc;
    zcat.bottomRows(cfg.n2) = pcf.z;
    const RMat t = input_transform(zcat, model.predictor_stats[k]);
    MlpCache cache;
    const RMat q = mlp_forward(model.predictors[k], t, d_pred ? &cache : nullptr);
    for (Eigen::Index c = 0; c < bk; ++c)
      loss += cross_entropy(q.col(c), labels[c], scale);
    if (!d_pred && !d_theta_f) continue;

    RMat dlogits(q.rows(), bk);
    for (Eigen::Index c = 0; c < bk; ++c)
      dlogits.col(c) = ce_logit_grad(q.col(c), labels[c], scale);
    const RMat dt = mlp_backward(model.predictors[k], cache, dlogits, (*d_pred)[k]);
    if (d_theta_f) {
      const RMat dzcat = transform_backward(zcat, model.predictor_stats[k], dt);
      // coarse rows are dropped: the coarse part is frozen in step 2
      const RMat dzf = dzcat.bottomRows(cfg.n2);
      RMat dy_re, dy_im;
      power_backward(pcf.y_re, pcf.y_im, dzf, dy_re, dy_im);
      (*d_theta_f)[k] = pc_backward_batch(model.fine[k].theta, hk, rho, dy_re, dy_im);
    }
  }
  return loss;
}

double single_loss_grad(const PhaseCodebook& pc, const Mlp& predictor,
                        const TransformStats& stats, const SingleBatch& batch,
                        double tx_power_w, RMat* d_theta, MlpGrad* d_pred) {
  const Eigen::Index b = batch.h.cols();
  if (static_cast<Eigen::Index>(batch.beam.size()) != b)
    throw std::invalid_argument("single_loss_grad: label count mismatch");
  if ((d_theta == nullptr) != (d_pred == nullptr))
    throw std::invalid_argument("single_loss_grad: pass both gradient sinks or neither");
  const double scale = 1.0 / predictor.output_dim();

  const PcBatch pcb =
      pc_forward_batch(pc.theta, batch.h, tx_power_w, batch.noise_re, batch.noise_im);
  const RMat t = input_transform(pcb.z, stats);
  MlpCache cache;
  const RMat q = mlp_forward(predictor, t, d_pred ? &cache : nullptr);

  double loss = 0.0;
  for (Eigen::Index c = 0; c < b; ++c)
    loss += cross_entropy(q.col(c), batch.beam[c], scale);
  if (!d_pred && !d_theta) return loss;

  RMat dlogits(q.rows(), b);
  for (Eigen::Index c = 0; c < b; ++c)
    dlogits.col(c) = ce_logit_grad(q.col(c), batch.beam[c], scale);
  const RMat dt = mlp_backward(predictor, cache, dlogits, *d_pred);
  if (d_theta) {
    const RMat dz = transform_backward(pcb.z, stats, dt);
    RMat dy_re, dy_im;
    power_backward(pcb.y_re, pcb.y_im, dz, dy_re, dy_im);
    *d_theta = pc_backward_batch(pc.theta, batch.h, tx_power_w, dy_re, dy_im);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Training.

void train_coarse(HierarchicalAligner& model, const Dataset& train,
                  const LabelSet& labels, const TrainHyper& hyper) {
  const AlignmentConfig& cfg = model.config;
  cfg.validate();
  if (labels.size() != train.size() || train.n_t != cfg.n_t)
    throw std::invalid_argument("train_coarse: dataset/label/config mismatch");
  const std::size_t n = train.size();
  const double var = cfg.radio.noise_var_w;
  const double rho = cfg.radio.tx_power_w;

  RngStream theta_rng(cfg.seed, kCoarseThetaInit);
  model.coarse = random_phase_codebook(cfg.n_t, cfg.n1, theta_rng);
  std::vector<int> sizes{cfg.n1};
  sizes.insert(sizes.end(), hyper.selector_hidden.begin(), hyper.selector_hidden.end());
  sizes.push_back(cfg.groups);
  RngStream mlp_rng(cfg.seed, kSelectorInit);
  model.selector = make_mlp(sizes, mlp_rng);

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const CMat h_all = dataset_matrix(train, all);

  // transform statistics frozen from the training split at initialization
  RngStream stats_rng(cfg.seed, kStatsNoise);
  auto [stats_re, stats_im] = make_noise(stats_rng, cfg.n1, h_all.cols(), var);
  model.selector_stats = fit_transform_stats(
      pc_forward_batch(model.coarse.theta, h_all, rho, stats_re, stats_im).z);

  RngStream split_rng(cfg.seed, kValSplit);
  const ValSplit split = carve_validation(n, hyper.val_fraction, split_rng);
  const CMat h_val = dataset_matrix(train, split.val);
  RngStream val_noise_rng(cfg.seed, kValNoise);
  auto [val_re, val_im] = make_noise(val_noise_rng, cfg.n1, h_val.cols(), var);
  CoarseBatch val_batch{h_val, val_re, val_im, gather(labels.group_id, split.val)};

  ParamPack params;
  params.add(model.coarse.theta);
  params.add(model.selector);
  AdamConfig adam;
  adam.lr = hyper.lr;
  OptimizerState opt = make_optimizer_state(params, adam);

  RngStream shuffle_rng(cfg.seed, kShuffle);
  RngStream noise_rng(cfg.seed, kTrainNoise);
  double best_val = std::numeric_limits<double>::infinity();
  RVec best = params.flatten();
  int since_best = 0;

  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    const auto order = shuffle_rng.permutation(split.train.size());
    for (std::size_t at = 0; at < order.size(); at += hyper.batch) {
      const std::size_t take = std::min<std::size_t>(hyper.batch, order.size() - at);
      std::vector<std::size_t> idx(take);
      for (std::size_t i = 0; i < take; ++i) idx[i] = split.train[order[at + i]];
      CoarseBatch batch;
      batch.h = dataset_matrix(train, idx);
      std::tie(batch.noise_re, batch.noise_im) =
          make_noise(noise_rng, cfg.n1, batch.h.cols(), var);
      batch.group = gather(labels.group_id, idx);

      RMat d_theta;
      MlpGrad d_sel = zero_grad_like(model.selector);
      coarse_loss_grad(model.coarse, model.selector, model.selector_stats, batch,
                       rho, &d_theta, &d_sel);
      ParamPack grads;
      grads.add(d_theta);
      grads.add(d_sel);
      scale_pack(grads, 1.0 / static_cast<double>(take));
      optimizer_step(params, grads, opt);
    }

    const bool have_val = !split.val.empty();
    double vloss;
    if (have_val) {
      vloss = coarse_loss_grad(model.coarse, model.selector, model.selector_stats,
                               val_batch, rho, nullptr, nullptr) /
              static_cast<double>(split.val.size());
    } else {
      vloss = best_val;  // no carve-out: run all epochs
    }
    if (vloss < best_val - 1e-12) {
      best_val = vloss;
      best = params.flatten();
      since_best = 0;
    } else if (have_val && ++since_best >= hyper.patience) {
      break;
    }
  }
  params.unflatten(best);
}

void train_fine(HierarchicalAligner& model, const Dataset& train,
                const LabelSet& labels, const TrainHyper& hyper) {
  const AlignmentConfig& cfg = model.config;
  if (labels.size() != train.size() || train.n_t != cfg.n_t)
    throw std::invalid_argument("train_fine: dataset/label/config mismatch");
  if (model.coarse.size() != cfg.n1 || model.selector.layers() == 0)
    throw std::invalid_argument("train_fine: coarse part not trained");
  const std::size_t n = train.size();
  const double var = cfg.radio.noise_var_w;
  const double rho = cfg.radio.tx_power_w;

  model.fine.clear();
  model.predictors.clear();
  model.predictor_stats.clear();
  std::vector<int> sizes{cfg.n1 + cfg.n2};
  sizes.insert(sizes.end(), hyper.predictor_hidden.begin(), hyper.predictor_hidden.end());
  sizes.push_back(cfg.n_v);
  for (int k = 0; k < cfg.groups; ++k) {
    // Each branch only ever serves channels inside its cluster's direction
    // cell, so its codebook starts as beams steered evenly across that cell
    // (the coarse codebook stays quasi-omni: the selector must hear all
    // directions). Training refines the in-cell shapes from there.
    const auto [lo, hi] = labels.clusters.cell(k);
    RngStream t_rng(cfg.seed, kFineThetaInit + static_cast<std::uint64_t>(k));
    PhaseCodebook fine;
    fine.theta = RMat(cfg.n_t, cfg.n2);
    for (int j = 0; j < cfg.n2; ++j) {
      const double s = lo + (j + 0.5) * (hi - lo) / cfg.n2;
      for (int m = 0; m < cfg.n_t; ++m)
        fine.theta(m, j) = 2.0 * M_PI * cfg.radio.spacing * m * s +
                           (t_rng.next_double() - 0.5) * 0.25 * M_PI;
    }
    model.fine.push_back(std::move(fine));
    RngStream mlp_rng(cfg.seed, kPredictorInit + static_cast<std::uint64_t>(k));
    model.predictors.push_back(make_mlp(sizes, mlp_rng));
  }

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const CMat h_all = dataset_matrix(train, all);

  // per-branch transform statistics: route once with frozen coarse part and
  // fixed noise, then fit over [z_c; z_f] with the initial fine codebooks
  RngStream stats_rng(cfg.seed, kFineStatsNoise);
  auto [sc_re, sc_im] = make_noise(stats_rng, cfg.n1, h_all.cols(), var);
  auto [sf_re, sf_im] = make_noise(stats_rng, cfg.n2, h_all.cols(), var);
  const PcBatch pcc = pc_forward_batch(model.coarse.theta, h_all, rho, sc_re, sc_im);
  const RMat p_all =
      mlp_forward(model.selector, input_transform(pcc.z, model.selector_stats));
  std::vector<std::vector<std::size_t>> members(cfg.groups);
  for (Eigen::Index c = 0; c < p_all.cols(); ++c) {
    RVec col = p_all.col(c);
    members[argmax_first(col)].push_back(static_cast<std::size_t>(c));
  }
  for (int k = 0; k < cfg.groups; ++k) {
    const auto& idx = members[k].empty() ? all : members[k];
    CMat hk(cfg.n_t, static_cast<Eigen::Index>(idx.size()));
    RMat nf_re(cfg.n2, hk.cols()), nf_im(cfg.n2, hk.cols());
    RMat zcat(cfg.n1 + cfg.n2, hk.cols());
    for (Eigen::Index c = 0; c < hk.cols(); ++c) {
      const auto src = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(c)]);
      hk.col(c) = h_all.col(src);
      nf_re.col(c) = sf_re.col(src);
      nf_im.col(c) = sf_im.col(src);
      zcat.col(c).head(cfg.n1) = pcc.z.col(src);
    }
    const PcBatch pcf = pc_forward_batch(model.fine[k].theta, hk, rho, nf_re, nf_im);
    zcat.bottomRows(cfg.n2) = pcf.z;
    model.predictor_stats.push_back(fit_transform_stats(zcat));
  }

  RngStream split_rng(cfg.seed, kValSplit);
  const ValSplit split = carve_validation(n, hyper.val_fraction, split_rng);
  FineBatch val_batch;
  val_batch.h = dataset_matrix(train, split.val);
  RngStream val_noise_rng(cfg.seed, kFineValNoise);
  std::tie(val_batch.nc_re, val_batch.nc_im) =
      make_noise(val_noise_rng, cfg.n1, val_batch.h.cols(), var);
  std::tie(val_batch.nf_re, val_batch.nf_im) =
      make_noise(val_noise_rng, cfg.n2, val_batch.h.cols(), var);
  val_batch.beam = gather(labels.oracle_index, split.val);

  // one optimizer per branch so that a batch never perturbs unselected branches
  std::vector<ParamPack> branch_params(cfg.groups);
  std::vector<OptimizerState> branch_opt;
  AdamConfig adam;
  adam.lr = hyper.lr;
  ParamPack snapshot;  // all fine parameters, for best-epoch restore
  for (int k = 0; k < cfg.groups; ++k) {
    branch_params[k].add(model.fine[k].theta);
    branch_params[k].add(model.predictors[k]);
    branch_opt.push_back(make_optimizer_state(branch_params[k], adam));
    snapshot.add(model.fine[k].theta);
    snapshot.add(model.predictors[k]);
  }

  RngStream shuffle_rng(cfg.seed, kFineShuffle);
  RngStream noise_rng(cfg.seed, kFineTrainNoise);
  double best_val = std::numeric_limits<double>::infinity();
  RVec best = snapshot.flatten();
  int since_best = 0;

  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    const auto order = shuffle_rng.permutation(split.train.size());
    for (std::size_t at = 0; at < order.size(); at += hyper.batch) {
      const std::size_t take = std::min<std::size_t>(hyper.batch, order.size() - at);
      std::vector<std::size_t> idx(take);
      for (std::size_t i = 0; i < take; ++i) idx[i] = split.train[order[at + i]];
      FineBatch batch;
      batch.h = dataset_matrix(train, idx);
      std::tie(batch.nc_re, batch.nc_im) =
          make_noise(noise_rng, cfg.n1, batch.h.cols(), var);
      std::tie(batch.nf_re, batch.nf_im) =
          make_noise(noise_rng, cfg.n2, batch.h.cols(), var);
      batch.beam = gather(labels.oracle_index, idx);

      std::vector<RMat> d_theta(cfg.groups);
      std::vector<MlpGrad> d_pred;
      for (int k = 0; k < cfg.groups; ++k) {
        d_theta[k] = RMat::Zero(cfg.n_t, cfg.n2);
        d_pred.push_back(zero_grad_like(model.predictors[k]));
      }
      std::vector<int> routed;
      fine_loss_grad(model, batch, &d_theta, &d_pred, &routed);

      std::vector<bool> present(cfg.groups, false);
      for (int k : routed) present[k] = true;
      for (int k = 0; k < cfg.groups; ++k) {
        if (!present[k]) continue;
        ParamPack grads;
        grads.add(d_theta[k]);
        grads.add(d_pred[k]);
        scale_pack(grads, 1.0 / static_cast<double>(take));
        optimizer_step(branch_params[k], grads, branch_opt[k]);
      }
    }

    const bool have_val = !split.val.empty();
    double vloss;
    if (have_val) {
      vloss = fine_loss_grad(model, val_batch, nullptr, nullptr) /
              static_cast<double>(split.val.size());
    } else {
      vloss = best_val;
    }
    if (vloss < best_val - 1e-12) {
      best_val = vloss;
      best = snapshot.flatten();
      since_best = 0;
    } else if (have_val && ++since_best >= hyper.patience) {
      break;
    }
  }
  snapshot.unflatten(best);
}

HierarchicalAligner train_hierarchical(const Dataset& train, const LabelSet& labels,
                                       const AlignmentConfig& config,
                                       const TrainHyper& hyper) {
  HierarchicalAligner model;
  model.config = config;
  train_coarse(model, train, labels, hyper);
  train_fine(model, train, labels, hyper);
  return model;
}

HierarchicalAligner train_hierarchical_end_to_end(const Dataset& train,
                                                  const LabelSet& labels,
                                                  const AlignmentConfig& config,
                                                  const TrainHyper& hyper) {
  const AlignmentConfig& cfg = config;
  cfg.validate();
  HierarchicalAligner model;
  model.config = config;
  const std::size_t n = train.size();
  const double var = cfg.radio.noise_var_w;
  const double rho = cfg.radio.tx_power_w;

  // initialize everything up front, statistics from the initial codebooks
  RngStream theta_rng(cfg.seed, kCoarseThetaInit);
  model.coarse = random_phase_codebook(cfg.n_t, cfg.n1, theta_rng);
  std::vector<int> ssizes{cfg.n1};
  ssizes.insert(ssizes.end(), hyper.selector_hidden.begin(), hyper.selector_hidden.end());
  ssizes.push_back(cfg.groups);
  RngStream mlp_rng(cfg.seed, kSelectorInit);
  model.selector = make_mlp(ssizes, mlp_rng);

  std::vector<int> psizes{cfg.n1 + cfg.n2};
  psizes.insert(psizes.end(), hyper.predictor_hidden.begin(), hyper.predictor_hidden.end());
  psizes.push_back(cfg.n_v);
  for (int k = 0; k < cfg.groups; ++k) {
    RngStream t_rng(cfg.seed, kFineThetaInit + static_cast<std::uint64_t>(k));
    model.fine.push_back(random_phase_codebook(cfg.n_t, cfg.n2, t_rng));
    RngStream p_rng(cfg.seed, kPredictorInit + static_cast<std::uint64_t>(k));
    model.predictors.push_back(make_mlp(psizes, p_rng));
  }

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const CMat h_all = dataset_matrix(train, all);
  RngStream stats_rng(cfg.seed, kStatsNoise);
  auto [sc_re, sc_im] = make_noise(stats_rng, cfg.n1, h_all.cols(), var);
  auto [sf_re, sf_im] = make_noise(stats_rng, cfg.n2, h_all.cols(), var);
  const PcBatch pcc0 = pc_forward_batch(model.coarse.theta, h_all, rho, sc_re, sc_im);
  model.selector_stats = fit_transform_stats(pcc0.z);
  for (int k = 0; k < cfg.groups; ++k) {
    const PcBatch pcf0 = pc_forward_batch(model.fine[k].theta, h_all, rho, sf_re, sf_im);
    RMat zcat(cfg.n1 + cfg.n2, h_all.cols());
    zcat.topRows(cfg.n1) = pcc0.z;
    zcat.bottomRows(cfg.n2) = pcf0.z;
    model.predictor_stats.push_back(fit_transform_stats(zcat));
  }

  RngStream split_rng(cfg.seed, kValSplit);
  const ValSplit split = carve_validation(n, hyper.val_fraction, split_rng);

  ParamPack params;
  params.add(model.coarse.theta);
  params.add(model.selector);
  for (int k = 0; k < cfg.groups; ++k) {
    params.add(model.fine[k].theta);
    params.add(model.predictors[k]);
  }
  AdamConfig adam;
  adam.lr = hyper.lr;
  OptimizerState opt = make_optimizer_state(params, adam);

  RngStream shuffle_rng(cfg.seed, kShuffle);
  RngStream noise_rng(cfg.seed, kTrainNoise);
  double best_val = std::numeric_limits<double>::infinity();
  RVec best = params.flatten();
  int since_best = 0;

  FineBatch val_batch;
  val_batch.h = dataset_matrix(train, split.val);
  RngStream val_noise_rng(cfg.seed, kValNoise);
  std::tie(val_batch.nc_re, val_batch.nc_im) =
      make_noise(val_noise_rng, cfg.n1, val_batch.h.cols(), var);
  std::tie(val_batch.nf_re, val_batch.nf_im) =
      make_noise(val_noise_rng, cfg.n2, val_batch.h.cols(), var);
  val_batch.beam = gather(labels.oracle_index, split.val);

  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    const auto order = shuffle_rng.permutation(split.train.size());
    for (std::size_t at = 0; at < order.size(); at += hyper.batch) {
      const std::size_t take = std::min<std::size_t>(hyper.batch, order.size() - at);
      std::vector<std::size_t> idx(take);
      for (std::size_t i = 0; i < take; ++i) idx[i] = split.train[order[at + i]];

      FineBatch fb;
      fb.h = dataset_matrix(train, idx);
      std::tie(fb.nc_re, fb.nc_im) = make_noise(noise_rng, cfg.n1, fb.h.cols(), var);
      std::tie(fb.nf_re, fb.nf_im) = make_noise(noise_rng, cfg.n2, fb.h.cols(), var);
      fb.beam = gather(labels.oracle_index, idx);
      CoarseBatch cb{fb.h, fb.nc_re, fb.nc_im, gather(labels.group_id, idx)};

      RMat d_theta_c;
      MlpGrad d_sel = zero_grad_like(model.selector);
      coarse_loss_grad(model.coarse, model.selector, model.selector_stats, cb, rho,
                       &d_theta_c, &d_sel);
      std::vector<RMat> d_theta_f(cfg.groups);
      std::vector<MlpGrad> d_pred;
      for (int k = 0; k < cfg.groups; ++k) {
        d_theta_f[k] = RMat::Zero(cfg.n_t, cfg.n2);
        d_pred.push_back(zero_grad_like(model.predictors[k]));
      }
      fine_loss_grad(model, fb, &d_theta_f, &d_pred);

      ParamPack grads;
      grads.add(d_theta_c);
      grads.add(d_sel);
      for (int k = 0; k < cfg.groups; ++k) {
        grads.add(d_theta_f[k]);
        grads.add(d_pred[k]);
      }
      scale_pack(grads, 1.0 / static_cast<double>(take));
      optimizer_step(params, grads, opt);
    }

    const bool have_val = !split.val.empty();
    double vloss;
    if (have_val) {
      vloss = fine_loss_grad(model, val_batch, nullptr, nullptr) /
              static_cast<double>(split.val.size());
    } else {
      vloss = best_val;
    }
    if (vloss < best_val - 1e-12) {
      best_val = vloss;
      best = params.flatten();
      since_best = 0;
    } else if (have_val && ++since_best >= hyper.patience) {
      break;
    }
  }
  params.unflatten(best);
  return model;
}

SingleTierAligner train_single_tier(const Dataset& train, const LabelSet& labels,
                                    int probing_size, const AlignmentConfig& config,
                                    const TrainHyper& hyper) {
  if (probing_size < 1)
    throw std::invalid_argument("train_single_tier: probing size >= 1 required");
  config.validate();
  if (labels.size() != train.size() || train.n_t != config.n_t)
    throw std::invalid_argument("train_single_tier: dataset/label/config mismatch");
  SingleTierAligner model;
  model.config = config;
  model.probing_size = probing_size;
  const std::size_t n = train.size();
  const double var = config.radio.noise_var_w;
  const double rho = config.radio.tx_power_w;

  RngStream theta_rng(config.seed, kSingleThetaInit);
  model.codebook = random_phase_codebook(config.n_t, probing_size, theta_rng);
  std::vector<int> sizes{probing_size};
  sizes.insert(sizes.end(), hyper.predictor_hidden.begin(), hyper.predictor_hidden.end());
  sizes.push_back(config.n_v);
  RngStream mlp_rng(config.seed, kSinglePredictorInit);
  model.predictor = make_mlp(sizes, mlp_rng);

  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const CMat h_all = dataset_matrix(train, all);
  RngStream stats_rng(config.seed, kSingleStatsNoise);
  auto [stats_re, stats_im] = make_noise(stats_rng, probing_size, h_all.cols(), var);
  model.stats = fit_transform_stats(
      pc_forward_batch(model.codebook.theta, h_all, rho, stats_re, stats_im).z);

  RngStream split_rng(config.seed, kValSplit);
  const ValSplit split = carve_validation(n, hyper.val_fraction, split_rng);
  SingleBatch val_batch;
  val_batch.h = dataset_matrix(train, split.val);
  RngStream val_noise_rng(config.seed, kSingleValNoise);
  std::tie(val_batch.noise_re, val_batch.noise_im) =
      make_noise(val_noise_rng, probing_size, val_batch.h.cols(), var);
  val_batch.beam = gather(labels.oracle_index, split.val);

  ParamPack params;
  params.add(model.codebook.theta);
  params.add(model.predictor);
  AdamConfig adam;
  adam.lr = hyper.lr;
  OptimizerState opt = make_optimizer_state(params, adam);

  RngStream shuffle_rng(config.seed, kSingleShuffle);
  RngStream noise_rng(config.seed, kSingleTrainNoise);
  double best_val = std::numeric_limits<double>::infinity();
  RVec best = params.flatten();
  int since_best = 0;

  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    const auto order = shuffle_rng.permutation(split.train.size());
    for (std::size_t at = 0; at < order.size(); at += hyper.batch) {
      const std::size_t take = std::min<std::size_t>(hyper.batch, order.size() - at);
      std::vector<std::size_t> idx(take);
      for (std::size_t i = 0; i < take; ++i) idx[i] = split.train[order[at + i]];
      SingleBatch batch;
      batch.h = dataset_matrix(train, idx);
      std::tie(batch.noise_re, batch.noise_im) =
          make_noise(noise_rng, probing_size, batch.h.cols(), var);
      batch.beam = gather(labels.oracle_index, idx);

      RMat d_theta;
      MlpGrad d_pred = zero_grad_like(model.predictor);
      single_loss_grad(model.codebook, model.predictor, model.stats, batch, rho,
                       &d_theta, &d_pred);
      ParamPack grads;
      grads.add(d_theta);
      grads.add(d_pred);
      scale_pack(grads, 1.0 / static_cast<double>(take));
      optimizer_step(params, grads, opt);
    }

    const bool have_val = !split.val.empty();
    double vloss;
    if (have_val) {
      vloss = single_loss_grad(model.codebook, model.predictor, model.stats,
                               val_batch, rho, nullptr, nullptr) /
              static_cast<double>(split.val.size());
    } else {
      vloss = best_val;
    }
    if (vloss < best_val - 1e-12) {
      best_val = vloss;
      best = params.flatten();
      since_best = 0;
    } else if (have_val && ++since_best >= hyper.patience) {
      break;
    }
  }
  params.unflatten(best);
  return model;
}

// ---------------------------------------------------------------------------
// Checkpoints.

namespace {

constexpr char kModelMagic[4] = {'B', 'A', 'L', 'C'};
constexpr std::uint32_t kModelVersion = 1;
constexpr std::uint32_t kTypeHier = 1;
constexpr std::uint32_t kTypeSingle = 2;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("load_model: truncated file");
  return v;
}

void write_mat(std::ostream& out, const RMat& m) {
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
}

RMat read_mat(std::istream& in) {
  const auto rows = read_pod<std::uint64_t>(in);
  const auto cols = read_pod<std::uint64_t>(in);
  if (rows == 0 || cols == 0 || rows * cols > (1ull << 32))
    throw std::runtime_error("load_model: implausible tensor shape");
  RMat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  in.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!in) throw std::runtime_error("load_model: truncated tensor");
  return m;
}

void write_vec(std::ostream& out, const RVec& v) {
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * v.size()));
}

RVec read_vec(std::istream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  if (n > (1ull << 32)) throw std::runtime_error("load_model: implausible vector");
  RVec v(static_cast<Eigen::Index>(n));
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(sizeof(double) * v.size()));
  if (!in) throw std::runtime_error("load_model: truncated vector");
  return v;
}

void write_mlp(std::ostream& out, const Mlp& m) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(m.layers()));
  for (int l = 0; l < m.layers(); ++l) {
    write_mat(out, m.w[l]);
    write_vec(out, m.b[l]);
  }
}

Mlp read_mlp(std::istream& in) {
  const auto layers = read_pod<std::uint32_t>(in);
  if (layers == 0 || layers > 64) throw std::runtime_error("load_model: bad MLP");
  Mlp m;
  for (std::uint32_t l = 0; l < layers; ++l) {
    m.w.push_back(read_mat(in));
    m.b.push_back(read_vec(in));
  }
  return m;
}

void write_stats(std::ostream& out, const TransformStats& s) {
  write_vec(out, s.mean);
  write_vec(out, s.stdev);
}

TransformStats read_stats(std::istream& in) {
  TransformStats s;
  s.mean = read_vec(in);
  s.stdev = read_vec(in);
  return s;
}

void write_config(std::ostream& out, const AlignmentConfig& c) {
  write_pod<std::int32_t>(out, c.n_t);
  write_pod<std::int32_t>(out, c.n_v);
  write_pod<std::int32_t>(out, c.n1);
  write_pod<std::int32_t>(out, c.n2);
  write_pod<std::int32_t>(out, c.groups);
  write_pod<std::int32_t>(out, c.n_u);
  write_pod<double>(out, c.radio.tx_power_w);
  write_pod<double>(out, c.radio.noise_var_w);
  write_pod<std::int32_t>(out, c.radio.n_t);
  write_pod<double>(out, c.radio.spacing);
  write_pod<std::uint64_t>(out, c.seed);
}

AlignmentConfig read_config(std::istream& in) {
  AlignmentConfig c;
  c.n_t = read_pod<std::int32_t>(in);
  c.n_v = read_pod<std::int32_t>(in);
  c.n1 = read_pod<std::int32_t>(in);
  c.n2 = read_pod<std::int32_t>(in);
  c.groups = read_pod<std::int32_t>(in);
  c.n_u = read_pod<std::int32_t>(in);
  c.radio.tx_power_w = read_pod<double>(in);
  c.radio.noise_var_w = read_pod<double>(in);
  c.radio.n_t = read_pod<std::int32_t>(in);
  c.radio.spacing = read_pod<double>(in);
  c.seed = read_pod<std::uint64_t>(in);
  return c;
}

std::uint32_t open_checkpoint(std::ifstream& in, const std::string& path) {
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kModelMagic, 4) != 0)
    throw std::runtime_error("load_model: bad magic in " + path);
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kModelVersion)
    throw std::runtime_error("load_model: unsupported version in " + path);
  return read_pod<std::uint32_t>(in);
}

}  // namespace

void save_model(const HierarchicalAligner& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out.write(kModelMagic, 4);
  write_pod<std::uint32_t>(out, kModelVersion);
  write_pod<std::uint32_t>(out, kTypeHier);
  write_config(out, model.config);
  write_mat(out, model.coarse.theta);
  write_mlp(out, model.selector);
  write_stats(out, model.selector_stats);
  for (int k = 0; k < model.config.groups; ++k) {
    write_mat(out, model.fine[k].theta);
    write_mlp(out, model.predictors[k]);
    write_stats(out, model.predictor_stats[k]);
  }
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

void save_model(const SingleTierAligner& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  out.write(kModelMagic, 4);
  write_pod<std::uint32_t>(out, kModelVersion);
  write_pod<std::uint32_t>(out, kTypeSingle);
  write_config(out, model.config);
  write_pod<std::int32_t>(out, model.probing_size);
  write_mat(out, model.codebook.theta);
  write_mlp(out, model.predictor);
  write_stats(out, model.stats);
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

HierarchicalAligner load_hierarchical(const std::string& path, int expect_n_t) {
  std::ifstream in(path, std::ios::binary);
  const auto type = open_checkpoint(in, path);
  if (type != kTypeHier)
    throw std::runtime_error("load_model: " + path + " is not a hierarchical model");
  HierarchicalAligner model;
  model.config = read_config(in);
  if (expect_n_t != 0 && model.config.n_t != expect_n_t)
    throw std::runtime_error("load_model: checkpoint N_t " +
                             std::to_string(model.config.n_t) +
                             " does not match expected " +
                             std::to_string(expect_n_t));
  model.coarse.theta = read_mat(in);
  model.selector = read_mlp(in);
  model.selector_stats = read_stats(in);
  for (int k = 0; k < model.config.groups; ++k) {
    model.fine.push_back(PhaseCodebook{read_mat(in)});
    model.predictors.push_back(read_mlp(in));
    model.predictor_stats.push_back(read_stats(in));
  }
  return model;
}

SingleTierAligner load_single_tier(const std::string& path, int expect_n_t) {
  std::ifstream in(path, std::ios::binary);
  const auto type = open_checkpoint(in, path);
  if (type != kTypeSingle)
    throw std::runtime_error("load_model: " + path + " is not a single-tier model");
  SingleTierAligner model;
  model.config = read_config(in);
  if (expect_n_t != 0 && model.config.n_t != expect_n_t)
    throw std::runtime_error("load_model: checkpoint N_t mismatch");
  model.probing_size = read_pod<std::int32_t>(in);
  model.codebook.theta = read_mat(in);
  model.predictor = read_mlp(in);
  model.stats = read_stats(in);
  return model;
}

}  // namespace beamalign
