// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#include "beamalign/codebook.hpp"

namespace beamalign {

namespace {
constexpr double kPatternFloor = 1e-12;  // keeps nulls finite in dB exports
}

DftCodebook dft_codebook(int n_t, int n_v, double spacing) {
  if (n_t < 1 || n_v < 1)
    throw std::invalid_argument("dft_codebook: n_t, n_v >= 1 required");
  DftCodebook cb;
  cb.spacing = spacing;
  cb.omega.resize(n_v);
  cb.v.resize(n_t, n_v);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_t));
  for (int i = 0; i < n_v; ++i) {
    cb.omega[i] = 2.0 * M_PI * spacing * (2.0 * i - n_v) / n_v;
    for (int m = 0; m < n_t; ++m) {
      const double ph = m * cb.omega[i];
      cb.v(m, i) = scale * Complex(std::cos(ph), std::sin(ph));
    }
  }
  return cb;
}

CMat phases_to_beams(const PhaseCodebook& pc) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(pc.n_t()));
  CMat w(pc.theta.rows(), pc.theta.cols());
  for (Eigen::Index j = 0; j < pc.theta.cols(); ++j)
    for (Eigen::Index i = 0; i < pc.theta.rows(); ++i)
      w(i, j) = scale * Complex(std::cos(pc.theta(i, j)), std::sin(pc.theta(i, j)));
  return w;
}

PhaseCodebook random_phase_codebook(int n_t, int size, RngStream& rng) {
  PhaseCodebook pc;
  pc.theta.resize(n_t, size);
  for (int j = 0; j < size; ++j)
    for (int i = 0; i < n_t; ++i)
      pc.theta(i, j) = rng.next_double() * 2.0 * M_PI;
  return pc;
}

PcMeasurement pc_forward(const PhaseCodebook& pc, const CVec& h,
                         const RadioConfig& radio, RngStream& rng,
                         std::uint64_t* measurements) {
  if (pc.theta.rows() != h.size())
    throw std::invalid_argument("pc_forward: dimension mismatch");
  const int n = pc.size();
  const double scale =
      std::sqrt(radio.tx_power_w) / std::sqrt(static_cast<double>(pc.n_t()));
  // h* components
  const RVec a = h.real();
  const RVec b = -h.imag();
  const RMat cos_t = pc.theta.array().cos().matrix();
  const RMat sin_t = pc.theta.array().sin().matrix();
  PcMeasurement m;
  m.y_re = scale * (cos_t.transpose() * a - sin_t.transpose() * b);
  m.y_im = scale * (sin_t.transpose() * a + cos_t.transpose() * b);
  for (int i = 0; i < n; ++i) {
    if (measurements) ++*measurements;
    const Complex noise = rng.next_complex_gaussian(radio.noise_var_w);
    m.y_re[i] += noise.real();
    m.y_im[i] += noise.imag();
  }
  m.z = m.y_re.array().square() + m.y_im.array().square();
  return m;
}

RVec beam_gain_pattern(const CVec& w, const std::vector<double>& angle_grid,
                       double spacing) {
  if (angle_grid.empty())
    throw std::invalid_argument("beam_gain_pattern: empty grid");
  RVec g(static_cast<Eigen::Index>(angle_grid.size()));
  const int n_t = static_cast<int>(w.size());
  for (std::size_t k = 0; k < angle_grid.size(); ++k) {
    const CVec a = steering_vector(angle_grid[k], n_t, spacing);
    g[static_cast<Eigen::Index>(k)] =
        10.0 * std::log10(std::norm(hermitian_inner(a, w)) + kPatternFloor);
  }
  return g;
}

std::vector<double> default_angle_grid(int points) {
  std::vector<double> grid(points);
  for (int k = 0; k < points; ++k) {
    // uniform in sin-space over [-1, 1]
    const double s = -1.0 + 2.0 * k / (points - 1.0);
    grid[k] = std::asin(std::min(1.0, std::max(-1.0, s)));
  }
  return grid;
}

}  // namespace beamalign
