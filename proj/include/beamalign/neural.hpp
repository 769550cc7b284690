// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#pragma once

#include <functional>
#include <vector>

#include "beamalign/numerics.hpp"

namespace beamalign {

// Floor inside log10 of the measurement transform; far below any physical
// measurement magnitude at the configured powers.
constexpr double kPowerEps = 1e-30;
// Floor on the hot-class probability inside the cross-entropy log.
constexpr double kProbFloor = 1e-12;

// ---------------------------------------------------------------------------
// MLP with rectifier hidden units and softmax output. Batched: matrices hold
// one sample per column.

struct Mlp {
  std::vector<RMat> w;  // w[l]: out_l x in_l
  std::vector<RVec> b;

  int layers() const { return static_cast<int>(w.size()); }
  int input_dim() const { return static_cast<int>(w.front().cols()); }
  int output_dim() const { return static_cast<int>(w.back().rows()); }
};

/// He-initialized weights, zero biases.
Mlp make_mlp(const std::vector<int>& sizes, RngStream& rng);

struct MlpCache {
  std::vector<RMat> acts;  // acts[0] = input; acts[l] = post-activation of layer l
};

/// Returns softmax probabilities, one column per sample.
RMat mlp_forward(const Mlp& m, const RMat& x, MlpCache* cache = nullptr);

struct MlpGrad {
  std::vector<RMat> dw;
  std::vector<RVec> db;
};

MlpGrad zero_grad_like(const Mlp& m);

/// Backprop from output-layer logit gradients; accumulates into grad and
/// returns the gradient w.r.t. the input columns.
RMat mlp_backward(const Mlp& m, const MlpCache& cache, const RMat& dlogits,
                  MlpGrad& grad);

/// -scale * log(p[hot]), natural log, hot probability floored at kProbFloor.
double cross_entropy(const RVec& p, int hot_index, double scale);

/// d(cross_entropy)/d(logits) for a softmax head: scale * (p - onehot).
RVec ce_logit_grad(const RVec& p, int hot_index, double scale);

// ---------------------------------------------------------------------------
// Measurement transform: t = (log10(z + eps) - mean) / std, statistics frozen
// from the training split.

struct TransformStats {
  RVec mean;
  RVec stdev;
};

/// Per-coordinate mean/std of log10(z + eps) over columns of z.
TransformStats fit_transform_stats(const RMat& z_columns);

RMat input_transform(const RMat& z, const TransformStats& stats);
RVec input_transform(const RVec& z, const TransformStats& stats);

/// Chain rule through the transform: dz = dt / ((z + eps) * ln(10) * std).
RMat transform_backward(const RMat& z, const TransformStats& stats, const RMat& dt);

/// Power layer |y|^2: dRe = 2*Re(y).*dz, dIm = 2*Im(y).*dz.
inline void power_backward(const RMat& y_re, const RMat& y_im, const RMat& dz,
                           RMat& dy_re, RMat& dy_im) {
  dy_re = 2.0 * y_re.cwiseProduct(dz);
  dy_im = 2.0 * y_im.cwiseProduct(dz);
}

// ---------------------------------------------------------------------------
// Probing-codebook (phase) layer, batched over columns of H.

struct PcBatch {
  RMat y_re;  // N x B
  RMat y_im;
  RMat z;
};

/// [Re y; Im y] = sqrt(rho) [[cosT^T, -sinT^T],[sinT^T, cosT^T]] [Re h*; Im h*] + n.
PcBatch pc_forward_batch(const RMat& theta, const CMat& h_cols, double tx_power_w,
                         const RMat& noise_re, const RMat& noise_im);

/// Gradient of the batch loss w.r.t. the phase matrix.
RMat pc_backward_batch(const RMat& theta, const CMat& h_cols, double tx_power_w,
                       const RMat& dy_re, const RMat& dy_im);

// ---------------------------------------------------------------------------
// Flat parameter views and the adaptive-moment optimizer.

/// Non-owning flat views over a model's tensors, in registration order.
class ParamPack {
 public:
  void add(RMat& m) { views_.emplace_back(m.data(), m.size()); }
  void add(RVec& v) { views_.emplace_back(v.data(), v.size()); }
  void add(Mlp& m) {
    for (int l = 0; l < m.layers(); ++l) {
      add(m.w[l]);
      add(m.b[l]);
    }
  }
  void add(MlpGrad& g) {
    // same tensor order as add(Mlp) so grads mirror params position-wise
    for (std::size_t l = 0; l < g.dw.size(); ++l) {
      add(g.dw[l]);
      add(g.db[l]);
    }
  }

  std::size_t tensors() const { return views_.size(); }
  Eigen::Map<RVec>& view(std::size_t i) { return views_[i]; }
  const Eigen::Map<RVec>& view(std::size_t i) const { return views_[i]; }

  Eigen::Index total_size() const {
    Eigen::Index n = 0;
    for (const auto& v : views_) n += v.size();
    return n;
  }
  RVec flatten() const {
    RVec out(total_size());
    Eigen::Index at = 0;
    for (const auto& v : views_) {
      out.segment(at, v.size()) = v;
      at += v.size();
    }
    return out;
  }
  void unflatten(const RVec& flat) {
    if (flat.size() != total_size())
      throw std::invalid_argument("ParamPack::unflatten: size mismatch");
    Eigen::Index at = 0;
    for (auto& v : views_) {
      v = flat.segment(at, v.size());
      at += v.size();
    }
  }

 private:
  std::vector<Eigen::Map<RVec>> views_;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  std::vector<RVec> m1;
  std::vector<RVec> m2;
  long step_count = 0;
  AdamConfig cfg;
};

OptimizerState make_optimizer_state(const ParamPack& params, const AdamConfig& cfg);

/// Bias-corrected adaptive-moment update; grads must mirror params tensor-wise.
void optimizer_step(ParamPack& params, const ParamPack& grads, OptimizerState& state);

// ---------------------------------------------------------------------------
// Verification.

/// Central-difference check of `analytic_grad` (flat, ParamPack order) against
/// the loss evaluated through `loss` while perturbing params in place. Checks
/// a random subsample of at least `min_coords` coordinates and returns the
/// worst relative error, with a floor on the denominator so that near-zero
/// gradients are compared absolutely at the gradient's own scale.
double finite_difference_check(const std::function<double()>& loss,
                               ParamPack& params, const RVec& analytic_grad,
                               double step, std::size_t min_coords, RngStream& rng);

}  // namespace beamalign
