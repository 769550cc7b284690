// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#include "beamalign/neural.hpp"

#include <algorithm>

namespace beamalign {

Mlp make_mlp(const std::vector<int>& sizes, RngStream& rng) {
  if (sizes.size() < 2)
    throw std::invalid_argument("make_mlp: need at least input and output sizes");
  Mlp m;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    if (in < 1 || out < 1) throw std::invalid_argument("make_mlp: bad layer size");
    RMat w(out, in);
    const double var = 2.0 / in;  // He init for rectifier units
    for (int j = 0; j < in; ++j)
      for (int i = 0; i < out; ++i) w(i, j) = rng.next_gaussian(var);
    m.w.push_back(std::move(w));
    m.b.push_back(RVec::Zero(out));
  }
  return m;
}

namespace {

// Column-wise softmax with max-shift for stability.
RMat softmax_cols(const RMat& logits) {
  RMat p(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    p.col(c) = (logits.col(c).array() - mx).exp();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

}  // namespace

RMat mlp_forward(const Mlp& m, const RMat& x, MlpCache* cache) {
  if (x.rows() != m.input_dim())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  if (cache) {
    cache->acts.clear();
    cache->acts.push_back(x);
  }
  RMat a = x;
  for (int l = 0; l < m.layers(); ++l) {
    RMat z = m.w[l] * a;
    z.colwise() += m.b[l];
    if (l + 1 < m.layers())
      a = z.cwiseMax(0.0);
    else
      a = softmax_cols(z);
    if (cache) cache->acts.push_back(a);
  }
  return a;
}

MlpGrad zero_grad_like(const Mlp& m) {
  MlpGrad g;
  for (int l = 0; l < m.layers(); ++l) {
    g.dw.push_back(RMat::Zero(m.w[l].rows(), m.w[l].cols()));
    g.db.push_back(RVec::Zero(m.b[l].size()));
  }
  return g;
}

RMat mlp_backward(const Mlp& m, const MlpCache& cache, const RMat& dlogits,
                  MlpGrad& grad) {
  if (cache.acts.size() != static_cast<std::size_t>(m.layers()) + 1)
    throw std::logic_error("mlp_backward: forward cache missing");
  RMat delta = dlogits;  // gradient at the output-layer pre-activation
  for (int l = m.layers() - 1; l >= 0; --l) {
    grad.dw[l] += delta * cache.acts[l].transpose();
    grad.db[l] += delta.rowwise().sum();
    if (l > 0) {
      delta = m.w[l].transpose() * delta;
      // rectifier mask from the post-activation of the previous layer
      delta = delta.cwiseProduct(
          (cache.acts[l].array() > 0.0).cast<double>().matrix());
    } else {
      delta = m.w[0].transpose() * delta;
    }
  }
  return delta;
}

double cross_entropy(const RVec& p, int hot_index, double scale) {
  if (hot_index < 0 || hot_index >= p.size())
    throw std::invalid_argument("cross_entropy: hot index out of range");
  return -scale * std::log(std::max(p[hot_index], kProbFloor));
}

RVec ce_logit_grad(const RVec& p, int hot_index, double scale) {
  RVec g = scale * p;
  g[hot_index] -= scale;
  return g;
}

TransformStats fit_transform_stats(const RMat& z_columns) {
  if (z_columns.cols() < 1)
    throw std::invalid_argument("fit_transform_stats: empty sample set");
  const RMat t = (z_columns.array() + kPowerEps).log10();
  TransformStats s;
  s.mean = t.rowwise().mean();
  RMat centered = t.colwise() - s.mean;
  s.stdev = (centered.array().square().rowwise().mean()).sqrt();
  // degenerate coordinates pass through un-scaled
  s.stdev = s.stdev.cwiseMax(1e-12);
  return s;
}

RMat input_transform(const RMat& z, const TransformStats& stats) {
  RMat t = (z.array() + kPowerEps).log10();
  t.colwise() -= stats.mean;
  return stats.stdev.cwiseInverse().asDiagonal() * t;
}

RVec input_transform(const RVec& z, const TransformStats& stats) {
  return ((z.array() + kPowerEps).log10() - stats.mean.array()) /
         stats.stdev.array();
}

RMat transform_backward(const RMat& z, const TransformStats& stats,
                        const RMat& dt) {
  const double ln10 = std::log(10.0);
  RMat dz = dt.array() / ((z.array() + kPowerEps) * ln10);
  return stats.stdev.cwiseInverse().asDiagonal() * dz;
}

PcBatch pc_forward_batch(const RMat& theta, const CMat& h_cols, double tx_power_w,
                         const RMat& noise_re, const RMat& noise_im) {
  if (theta.rows() != h_cols.rows())
    throw std::invalid_argument("pc_forward_batch: dimension mismatch");
  const double scale = std::sqrt(tx_power_w / static_cast<double>(theta.rows()));
  const RMat a = h_cols.real();         // Re h*
  const RMat b = -h_cols.imag().eval(); // Im h*
  const RMat cos_t = theta.array().cos().matrix();
  const RMat sin_t = theta.array().sin().matrix();
  PcBatch out;
  out.y_re = scale * (cos_t.transpose() * a - sin_t.transpose() * b) + noise_re;
  out.y_im = scale * (sin_t.transpose() * a + cos_t.transpose() * b) + noise_im;
  out.z = out.y_re.array().square() + out.y_im.array().square();
  return out;
}

RMat pc_backward_batch(const RMat& theta, const CMat& h_cols, double tx_power_w,
                       const RMat& dy_re, const RMat& dy_im) {
  const double scale = std::sqrt(tx_power_w / static_cast<double>(theta.rows()));
  const RMat a = h_cols.real();
  const RMat b = -h_cols.imag().eval();
  const RMat cos_t = theta.array().cos().matrix();
  const RMat sin_t = theta.array().sin().matrix();
  // dTheta = scale * (-sinT .* (a dyre' + b dyim') + cosT .* (a dyim' - b dyre'))
  const RMat term1 = a * dy_re.transpose() + b * dy_im.transpose();
  const RMat term2 = a * dy_im.transpose() - b * dy_re.transpose();
  return scale * (cos_t.cwiseProduct(term2) - sin_t.cwiseProduct(term1));
}

OptimizerState make_optimizer_state(const ParamPack& params, const AdamConfig& cfg) {
  OptimizerState s;
  s.cfg = cfg;
  for (std::size_t i = 0; i < params.tensors(); ++i) {
    s.m1.push_back(RVec::Zero(params.view(i).size()));
    s.m2.push_back(RVec::Zero(params.view(i).size()));
  }
  return s;
}

void optimizer_step(ParamPack& params, const ParamPack& grads,
                    OptimizerState& state) {
  if (params.tensors() != grads.tensors() ||
      params.tensors() != state.m1.size())
    throw std::invalid_argument("optimizer_step: shape mismatch");
  ++state.step_count;
  const auto& c = state.cfg;
  const double corr1 = 1.0 - std::pow(c.beta1, state.step_count);
  const double corr2 = 1.0 - std::pow(c.beta2, state.step_count);
  for (std::size_t i = 0; i < params.tensors(); ++i) {
    const auto& g = grads.view(i);
    if (g.size() != params.view(i).size())
      throw std::invalid_argument("optimizer_step: tensor shape mismatch");
    state.m1[i] = c.beta1 * state.m1[i] + (1.0 - c.beta1) * g;
    state.m2[i] = c.beta2 * state.m2[i].array().matrix() +
                  (1.0 - c.beta2) * g.array().square().matrix();
    params.view(i).array() -=
        c.lr * (state.m1[i].array() / corr1) /
        ((state.m2[i].array() / corr2).sqrt() + c.eps);
  }
}

double finite_difference_check(const std::function<double()>& loss,
                               ParamPack& params, const RVec& analytic_grad,
                               double step, std::size_t min_coords,
                               RngStream& rng) {
  if (step <= 0.0)
    throw std::domain_error("finite_difference_check: step must be positive");
  const Eigen::Index n = params.total_size();
  if (analytic_grad.size() != n)
    throw std::invalid_argument("finite_difference_check: gradient size mismatch");

  std::vector<Eigen::Index> coords;
  if (static_cast<Eigen::Index>(min_coords) >= n) {
    for (Eigen::Index i = 0; i < n; ++i) coords.push_back(i);
  } else {
    const auto perm = rng.permutation(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < min_coords; ++i)
      coords.push_back(static_cast<Eigen::Index>(perm[i]));
  }

  // locate (tensor, offset) for a flat coordinate
  auto locate = [&](Eigen::Index flat) {
    std::size_t t = 0;
    while (flat >= params.view(t).size()) {
      flat -= params.view(t).size();
      ++t;
    }
    return std::pair<std::size_t, Eigen::Index>(t, flat);
  };

  const double floor = 1e-4 * std::max(1.0, analytic_grad.cwiseAbs().maxCoeff());
  double worst = 0.0;
  for (Eigen::Index flat : coords) {
    const auto [t, off] = locate(flat);
    double& x = params.view(t)[off];
    const double saved = x;
    x = saved + step;
    const double lp = loss();
    x = saved - step;
    const double lm = loss();
    x = saved;
    const double fd = (lp - lm) / (2.0 * step);
    const double a = analytic_grad[flat];
    const double rel =
        std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace beamalign
