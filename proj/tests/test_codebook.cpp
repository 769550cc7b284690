// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "beamalign/codebook.hpp"

using namespace beamalign;

namespace {

CVec random_channel(int n_t, RngStream& rng) {
  CVec h(n_t);
  for (int i = 0; i < n_t; ++i)
    h[i] = Complex(rng.next_gaussian(1.0), rng.next_gaussian(1.0));
  return h;
}

}  // namespace

TEST_CASE("dft codebook 4x4 spatial frequencies and broadside column") {
  const DftCodebook cb = dft_codebook(4, 4, 0.5);
  CHECK(cb.omega[0] == doctest::Approx(-M_PI).epsilon(1e-14));
  CHECK(cb.omega[1] == doctest::Approx(-M_PI / 2).epsilon(1e-14));
  CHECK(cb.omega[2] == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(cb.omega[3] == doctest::Approx(M_PI / 2).epsilon(1e-14));
  for (int m = 0; m < 4; ++m)
    CHECK(std::abs(cb.v(m, 2) - Complex(0.5, 0)) < 1e-15);
}

TEST_CASE("dft codebook column norms and entry moduli") {
  const DftCodebook cb = dft_codebook(64, 128, 0.5);
  for (int i = 0; i < 128; ++i) {
    CHECK(cb.v.col(i).norm() == doctest::Approx(1.0).epsilon(1e-12));
    for (int m = 0; m < 64; ++m)
      CHECK(std::abs(cb.v(m, i)) == doctest::Approx(1.0 / 8.0).epsilon(1e-13));
  }
}

TEST_CASE("dft columns pairwise orthogonal when square") {
  const DftCodebook cb = dft_codebook(16, 16, 0.5);
  for (int i = 0; i < 16; ++i)
    for (int j = i + 1; j < 16; ++j)
      CHECK(std::abs(hermitian_inner(cb.v.col(i), cb.v.col(j))) < 1e-12);
}

TEST_CASE("sin_psi grid values are exact") {
  const DftCodebook cb = dft_codebook(64, 128, 0.5);
  for (int i = 0; i < 128; ++i)
    CHECK(cb.sin_psi(i) == (2.0 * i - 128.0) / 128.0);
}

TEST_CASE("phases_to_beams structure") {
  PhaseCodebook zero;
  zero.theta = RMat::Zero(9, 3);
  const CMat wz = phases_to_beams(zero);
  for (int j = 0; j < 3; ++j)
    for (int m = 0; m < 9; ++m)
      CHECK(std::abs(wz(m, j) - Complex(1.0 / 3.0, 0)) < 1e-15);

  // phase-linear column equals the DFT-style beam at that frequency
  const double omega0 = 0.77;
  PhaseCodebook lin;
  lin.theta = RMat(8, 1);
  for (int m = 0; m < 8; ++m) lin.theta(m, 0) = m * omega0;
  const CMat wl = phases_to_beams(lin);
  const double s = 1.0 / std::sqrt(8.0);
  for (int m = 0; m < 8; ++m) {
    const Complex want = s * Complex(std::cos(m * omega0), std::sin(m * omega0));
    CHECK(std::abs(wl(m, 0) - want) < 1e-15);
  }

  RngStream rng(2, 0);
  const PhaseCodebook rnd = random_phase_codebook(16, 5, rng);
  const CMat wr = phases_to_beams(rnd);
  for (int j = 0; j < 5; ++j)
    for (int m = 0; m < 16; ++m)
      CHECK(std::abs(std::abs(wr(m, j)) - 0.25) < 1e-15);
}

TEST_CASE("pc_forward real-expanded equals complex oracle over 1000 pairs") {
  RadioConfig radio;
  radio.tx_power_w = 2.5;
  radio.noise_var_w = 0.0;
  radio.n_t = 16;
  RngStream rng(31, 0);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const PhaseCodebook pc = random_phase_codebook(16, 4, rng);
    const CVec h = random_channel(16, rng);
    RngStream noise(1, t);
    const PcMeasurement m = pc_forward(pc, h, radio, noise);
    // direct complex oracle: y = sqrt(rho) * W^T conj(h)
    const CMat w = phases_to_beams(pc);
    const CVec y = std::sqrt(radio.tx_power_w) * (w.transpose() * h.conjugate());
    for (int i = 0; i < 4; ++i) {
      const double rel =
          std::abs(Complex(m.y_re[i], m.y_im[i]) - y[i]) / std::abs(y[i]);
      worst = std::max(worst, rel);
      CHECK(m.z[i] == doctest::Approx(std::norm(y[i])).epsilon(1e-10));
      CHECK(m.z[i] >= 0.0);
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("pc_forward aligned all-ones case and measurement counter") {
  PhaseCodebook pc;
  pc.theta = RMat::Zero(9, 2);
  RadioConfig radio;
  radio.tx_power_w = 1.0;
  radio.noise_var_w = 0.0;
  const CVec h = CVec::Ones(9);
  RngStream rng(1, 0);
  std::uint64_t count = 0;
  const PcMeasurement m = pc_forward(pc, h, radio, rng, &count);
  CHECK(count == 2);
  for (int i = 0; i < 2; ++i) {
    CHECK(m.y_re[i] == doctest::Approx(3.0).epsilon(1e-14));  // sqrt(N_t)
    CHECK(std::abs(m.y_im[i]) < 1e-14);
  }
}

TEST_CASE("beam gain pattern matched-gain and peak location") {
  const int n_t = 64;
  CVec w = CVec::Constant(n_t, Complex(1.0 / 8.0, 0));
  const RVec g0 = beam_gain_pattern(w, {0.0}, 0.5);
  CHECK(g0[0] == doctest::Approx(10.0 * std::log10(64.0)).epsilon(1e-9));

  const DftCodebook cb = dft_codebook(n_t, 128, 0.5);
  const auto grid = default_angle_grid();
  const int col = 37;
  const RVec g = beam_gain_pattern(cb.v.col(col), grid, 0.5);
  int peak = 0;
  for (int k = 1; k < g.size(); ++k)
    if (g[k] > g[peak]) peak = k;
  CHECK(std::sin(grid[peak]) == doctest::Approx(cb.sin_psi(col)).epsilon(3e-3));
}

TEST_CASE("mean pattern gain over sin grid is unity for unit-norm beams") {
  RngStream rng(8, 0);
  const PhaseCodebook pc = random_phase_codebook(32, 1, rng);
  const CVec w = phases_to_beams(pc).col(0);
  const auto grid = default_angle_grid();
  const RVec g = beam_gain_pattern(w, grid, 0.5);
  double mean = 0.0;
  for (int k = 0; k < g.size(); ++k) mean += std::pow(10.0, g[k] / 10.0);
  mean /= static_cast<double>(g.size());
  CHECK(mean == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("default angle grid spans sin space uniformly") {
  const auto grid = default_angle_grid();
  REQUIRE(grid.size() == 1024);
  CHECK(std::sin(grid.front()) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(std::sin(grid.back()) == doctest::Approx(1.0).epsilon(1e-12));
  const double step = std::sin(grid[1]) - std::sin(grid[0]);
  for (std::size_t k = 1; k + 1 < grid.size(); ++k)
    CHECK(std::sin(grid[k + 1]) - std::sin(grid[k]) ==
          doctest::Approx(step).epsilon(1e-6));
}
