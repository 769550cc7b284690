// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#pragma once

#include <string>
#include <vector>

#include "beamalign/channel.hpp"
#include "beamalign/codebook.hpp"
#include "beamalign/labeling.hpp"
#include "beamalign/neural.hpp"

namespace beamalign {

struct AlignmentConfig {
  int n_t = 64;
  int n_v = 128;
  int n1 = 6;   // coarse probing codebook size
  int n2 = 8;   // fine probing codebook size (equal across branches)
  int groups = 4;
  int n_u = 1024;  // fine-direction label grid
  RadioConfig radio;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainHyper {
  double lr = 1e-3;
  int batch = 256;
  int max_epochs = 200;
  int patience = 20;          // early stop on the validation carve-out
  double val_fraction = 0.1;
  std::vector<int> selector_hidden{64, 64};
  std::vector<int> predictor_hidden{256, 256};
};

/// Coarse codebook + selector, G fine codebooks + beam predictors, and the
/// frozen input-transform statistics of each classifier head.
struct HierarchicalAligner {
  AlignmentConfig config;
  PhaseCodebook coarse;
  Mlp selector;
  TransformStats selector_stats;
  std::vector<PhaseCodebook> fine;
  std::vector<Mlp> predictors;
  std::vector<TransformStats> predictor_stats;
};

/// One probing codebook of M beams trained jointly with one predictor.
struct SingleTierAligner {
  AlignmentConfig config;
  int probing_size = 0;
  PhaseCodebook codebook;
  Mlp predictor;
  TransformStats stats;
};

struct SelectResult {
  int k_star = 0;
  RVec p;
};

struct PredictResult {
  int beam = 0;
  RVec q;
};

/// k* = argmax_k f(transform(z_c)); ties to the lowest index.
SelectResult select_fine(const RVec& z_c, const Mlp& selector,
                         const TransformStats& stats);

/// q = g(transform([z_c; z_f])); beam = argmax over the N_V entries.
PredictResult predict_beam(const RVec& z_c, const RVec& z_f, const Mlp& predictor,
                           const TransformStats& stats);

struct AlignTrace {
  RVec z_c;
  RVec z_f;
  RVec p;
  RVec q;
  int k_star = 0;
  std::uint64_t measurements = 0;
};

struct AlignResult {
  int beam = 0;
  AlignTrace trace;
};

/// Coarse sweep -> selector -> selected fine sweep -> predictor. Consumes
/// exactly N1 + N2 scalar power measurements.
AlignResult align(const CVec& h, const HierarchicalAligner& model, RngStream& rng);

struct SingleAlignResult {
  int beam = 0;
  RVec q;
  std::uint64_t measurements = 0;
};

SingleAlignResult align_single_tier(const CVec& h, const SingleTierAligner& model,
                                    RngStream& rng);

/// Worst multi-UE overhead: N1 + G * N2.
int worst_case_sweep_count(const AlignmentConfig& config);

// ---------------------------------------------------------------------------
// Batched loss/gradient evaluation. Noise is supplied explicitly so the same
// functions serve training (fresh noise per pass) and finite-difference
// verification (frozen noise).

struct CoarseBatch {
  CMat h;                    // N_t x B
  RMat noise_re, noise_im;   // N1 x B
  std::vector<int> group;    // labels
};

/// Sum-reduced cross-entropy over the batch (per-sample scale 1/G), so a
/// duplicated sample contributes its gradient twice. Gradient sinks must be
/// passed together (zero-initialized) or both omitted.
double coarse_loss_grad(const PhaseCodebook& coarse, const Mlp& selector,
                        const TransformStats& stats, const CoarseBatch& batch,
                        double tx_power_w, RMat* d_theta, MlpGrad* d_selector);

struct FineBatch {
  CMat h;
  RMat nc_re, nc_im;  // N1 x B, shared between routing and predictor input
  RMat nf_re, nf_im;  // N2 x B
  std::vector<int> beam;  // oracle labels
};

/// Routes each sample through the frozen selector's hard argmax, then scores
/// the selected branch's predictor (scale 1/N_V). Gradients flow only into
/// the selected branch per sample; unselected branch tensors get zero.
double fine_loss_grad(const HierarchicalAligner& model, const FineBatch& batch,
                      std::vector<RMat>* d_theta_f, std::vector<MlpGrad>* d_pred,
                      std::vector<int>* routed = nullptr);

struct SingleBatch {
  CMat h;
  RMat noise_re, noise_im;  // M x B
  std::vector<int> beam;
};

double single_loss_grad(const PhaseCodebook& pc, const Mlp& predictor,
                        const TransformStats& stats, const SingleBatch& batch,
                        double tx_power_w, RMat* d_theta, MlpGrad* d_pred);

// ---------------------------------------------------------------------------
// Training (Algorithm: two-step, coarse part first, then fine part against
// the frozen coarse part).

/// Step 1: jointly optimizes the coarse codebook and selector against the
/// K-means group labels. Fills coarse, selector, selector_stats of `model`.
void train_coarse(HierarchicalAligner& model, const Dataset& train,
                  const LabelSet& labels, const TrainHyper& hyper);

/// Step 2: trains all fine codebooks and predictors against the oracle-beam
/// labels with the coarse part frozen.
void train_fine(HierarchicalAligner& model, const Dataset& train,
                const LabelSet& labels, const TrainHyper& hyper);

/// Both steps.
HierarchicalAligner train_hierarchical(const Dataset& train, const LabelSet& labels,
                                       const AlignmentConfig& config,
                                       const TrainHyper& hyper);

/// Opt-in single-step training of all parameters at once (combined selector +
/// predictor cross-entropy); kept for comparison against the two-step default.
HierarchicalAligner train_hierarchical_end_to_end(const Dataset& train,
                                                  const LabelSet& labels,
                                                  const AlignmentConfig& config,
                                                  const TrainHyper& hyper);

SingleTierAligner train_single_tier(const Dataset& train, const LabelSet& labels,
                                    int probing_size, const AlignmentConfig& config,
                                    const TrainHyper& hyper);

// ---------------------------------------------------------------------------
// Checkpoints (versioned binary container, bit-exact round trip).

void save_model(const HierarchicalAligner& model, const std::string& path);
void save_model(const SingleTierAligner& model, const std::string& path);
HierarchicalAligner load_hierarchical(const std::string& path, int expect_n_t = 0);
SingleTierAligner load_single_tier(const std::string& path, int expect_n_t = 0);

}  // namespace beamalign
