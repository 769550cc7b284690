// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>

namespace beamalign {

using Complex = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;

/// Counter-based random stream: the n-th sample depends only on
/// (seed, stream id, n), so per-sample streams are independent of
/// scheduling and batch order.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_(stream_id), key_(derive_key(seed, stream_id)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  /// Independent child stream; mixing keeps distinct ids decorrelated.
  RngStream substream(std::uint64_t id) const {
    return RngStream(seed_, mix(stream_ ^ mix(id + 0x632BE59BD9B4E019ULL)));
  }

  std::uint64_t next_u64() { return mix(key_ + counter_++ * 0x9E3779B97F4A7C15ULL); }

  /// Uniform in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1]; safe as a log() argument.
  double next_double_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Real N(0, variance) via Box-Muller.
  double next_gaussian(double variance) {
    if (variance < 0.0) throw std::domain_error("next_gaussian: negative variance");
    if (variance == 0.0) return 0.0;
    const double u1 = next_double_open();
    const double u2 = next_double();
    return std::sqrt(-2.0 * variance * std::log(u1)) *
           std::cos(2.0 * M_PI * u2);
  }

  /// Circularly-symmetric complex Gaussian, E|n|^2 = variance.
  Complex next_complex_gaussian(double variance) {
    if (variance < 0.0)
      throw std::domain_error("next_complex_gaussian: negative variance");
    if (variance == 0.0) return Complex(0.0, 0.0);
    const double u1 = next_double_open();
    const double u2 = next_double();
    const double r = std::sqrt(-variance * std::log(u1));
    return Complex(r * std::cos(2.0 * M_PI * u2), r * std::sin(2.0 * M_PI * u2));
  }

  /// Deterministic Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = next_u64() % i;
      std::swap(idx[i - 1], idx[j]);
    }
    return idx;
  }

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

 private:
  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
    return mix(mix(seed) ^ mix(stream + 0xD6E8FEB86659FD93ULL));
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Sum_i conj(a_i) * b_i.
inline Complex hermitian_inner(const CVec& a, const CVec& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("hermitian_inner: length mismatch");
  return a.dot(b);  // Eigen's dot conjugates the left argument
}

inline CVec cmat_vec(const CMat& m, const CVec& x) {
  if (m.cols() != x.size())
    throw std::invalid_argument("cmat_vec: dimension mismatch");
  return m * x;
}

inline bool all_finite(const CVec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i].real()) || !std::isfinite(v[i].imag())) return false;
  return true;
}

inline bool all_finite(const RVec& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (!std::isfinite(v[i])) return false;
  return true;
}

}  // namespace beamalign
