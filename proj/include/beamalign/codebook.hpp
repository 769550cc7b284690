// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#pragma once

#include "beamalign/channel.hpp"
#include "beamalign/numerics.hpp"

namespace beamalign {

/// Fixed DFT transmission codebook: column i has linear phase slope
/// omega_i = 2*pi*(d/lambda) * (2*i - N_V) / N_V (0-based i).
struct DftCodebook {
  CMat v;            // N_t x N_V, |entry| = 1/sqrt(N_t)
  RVec omega;        // spatial frequency per column
  double spacing = 0.5;

  int n_t() const { return static_cast<int>(v.rows()); }
  int n_v() const { return static_cast<int>(v.cols()); }
  /// sin(psi) the column steers to: (2i - N_V) / N_V, computed directly so
  /// grid values are exact (omega / (2*pi*spacing) would round).
  double sin_psi(int i) const { return (2.0 * i - n_v()) / n_v(); }
};

/// Trainable constant-modulus probing codebook. Only the real phase matrix
/// is ever stored or updated, so |w_ij| = 1/sqrt(N_t) holds structurally.
struct PhaseCodebook {
  RMat theta;  // N_t x N, radians

  int n_t() const { return static_cast<int>(theta.rows()); }
  int size() const { return static_cast<int>(theta.cols()); }
};

DftCodebook dft_codebook(int n_t, int n_v, double spacing);

/// W = (1/sqrt(N_t)) * (cos(Theta) + j*sin(Theta)).
CMat phases_to_beams(const PhaseCodebook& pc);

PhaseCodebook random_phase_codebook(int n_t, int size, RngStream& rng);

struct PcMeasurement {
  RVec y_re;  // Re{y}
  RVec y_im;  // Im{y}
  RVec z;     // |y_i|^2
};

/// Probing forward pass in the real-expanded block form
///   [Re y; Im y] = sqrt(rho) [[cosT^T, -sinT^T],[sinT^T, cosT^T]] [Re h*; Im h*] + n,
/// then z_i = |y_i|^2. Equals sqrt(rho) * W^T h* + n computed directly.
PcMeasurement pc_forward(const PhaseCodebook& pc, const CVec& h,
                         const RadioConfig& radio, RngStream& rng,
                         std::uint64_t* measurements = nullptr);

/// 10*log10(|a(psi)^H w|^2 + eps) per grid angle (radians).
RVec beam_gain_pattern(const CVec& w, const std::vector<double>& angle_grid,
                       double spacing);

/// 1024 points uniform in sin(psi) over [-1, 1]; returned as radians.
std::vector<double> default_angle_grid(int points = 1024);

}  // namespace beamalign
