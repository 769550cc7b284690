// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#include "beamalign/baselines.hpp"

#include <algorithm>
#include <map>
#include <mutex>
#include <tuple>

namespace beamalign {

const char* method_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::kExhaustive: return "exhaustive";
    case MethodKind::kBinary: return "binary";
    case MethodKind::kTwoTier: return "two-tier";
    case MethodKind::kLearnedSingle: return "learned-single";
    case MethodKind::kLearnedHier: return "learned-hier";
  }
  return "unknown";
}

MethodKind method_kind_from_name(const std::string& name) {
  if (name == "exhaustive") return MethodKind::kExhaustive;
  if (name == "binary") return MethodKind::kBinary;
  if (name == "two-tier") return MethodKind::kTwoTier;
  if (name == "learned-single") return MethodKind::kLearnedSingle;
  if (name == "learned-hier") return MethodKind::kLearnedHier;
  throw std::invalid_argument("unknown method: " + name);
}

SearchResult exhaustive_search(const CVec& h, const DftCodebook& v,
                               const RadioConfig& radio, RngStream& rng) {
  SearchResult res;
  const RVec z = sweep_measure(h, v.v, radio, rng, &res.measurements);
  z.maxCoeff(&res.index);
  // ties toward the lowest index (maxCoeff already returns the first)
  return res;
}

namespace {

// Linear-FM phase profile: spatial frequency sweeps from a to b across the
// aperture, phase(m) = 2*pi*(d/lambda) * m * (a + (b - a) * m / (2 * n_t)).
RVec chirp_phases(double a, double b, int n_t, double spacing) {
  RVec phi(n_t);
  const double k = 2.0 * M_PI * spacing;
  for (int m = 0; m < n_t; ++m)
    phi[m] = k * m * (a + 0.5 * (b - a) * m / n_t);
  return phi;
}

CVec phases_to_beam(const RVec& phi) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(phi.size()));
  CVec w(phi.size());
  for (Eigen::Index m = 0; m < phi.size(); ++m)
    w[m] = scale * Complex(std::cos(phi[m]), std::sin(phi[m]));
  return w;
}

// Deterministic soft-min ascent that lifts the chirp's in-band ripple nulls:
// repeatedly pushes the phases toward larger minimum gain over an in-sector
// sin grid. Chirp-initialized, fixed budget, no randomness.
RVec flatten_in_band(RVec phi, double a, double b, double spacing) {
  const int n_t = static_cast<int>(phi.size());
  const int grid = 512;
  const int iters = 400;
  const double lr = 0.05;
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_t));
  const double k = 2.0 * M_PI * spacing;

  RMat er(n_t, grid), ei(n_t, grid);  // e^{-j*k*m*s} per (antenna, direction)
  for (int g = 0; g < grid; ++g) {
    const double s = a + (b - a) * g / (grid - 1.0);
    for (int m = 0; m < n_t; ++m) {
      er(m, g) = std::cos(k * m * s);
      ei(m, g) = -std::sin(k * m * s);
    }
  }

  RVec wr(n_t), wi(n_t);
  for (int it = 0; it < iters; ++it) {
    for (int m = 0; m < n_t; ++m) {
      wr[m] = scale * std::cos(phi[m]);
      wi[m] = scale * std::sin(phi[m]);
    }
    const RVec ar = er.transpose() * wr - ei.transpose() * wi;
    const RVec ai = er.transpose() * wi + ei.transpose() * wr;
    const RVec gain = ar.array().square() + ai.array().square();
    const double t = 0.05 * gain.mean();
    RVec wts = (-(gain.array() - gain.minCoeff()) / t).exp();
    wts /= wts.sum();
    // d gain_g / d phi_m = 2 * (ar_g * d ar + ai_g * d ai); d w_m/d phi_m = j w_m
    const RVec cr = ar.cwiseProduct(wts);
    const RVec ci = ai.cwiseProduct(wts);
    for (int m = 0; m < n_t; ++m) {
      double acc = 0.0;
      for (int g = 0; g < grid; ++g) {
        const double dar = -wi[m] * er(m, g) - wr[m] * ei(m, g);
        const double dai = wr[m] * er(m, g) - wi[m] * ei(m, g);
        acc += 2.0 * (cr[g] * dar + ci[g] * dai);
      }
      phi[m] += lr * acc;
    }
  }
  return phi;
}

struct SectorKey {
  double a, b, spacing;
  int n_t;
  bool operator<(const SectorKey& o) const {
    return std::tie(a, b, spacing, n_t) < std::tie(o.a, o.b, o.spacing, o.n_t);
  }
};

std::map<SectorKey, CVec> g_sector_cache;
std::mutex g_sector_mutex;

}  // namespace

CVec sector_wide_beam(double a, double b, int n_t, double spacing) {
  if (!(a < b)) throw std::invalid_argument("sector_wide_beam: need a < b");
  // sectors no wider than a single-beam mainlobe: the chirp already matches
  // the steered-beam shape, and flattening would only blunt it
  if ((b - a) * n_t <= 4.0)
    return phases_to_beam(chirp_phases(a, b, n_t, spacing));

  const SectorKey key{a, b, spacing, n_t};
  {
    std::lock_guard<std::mutex> lock(g_sector_mutex);
    const auto it = g_sector_cache.find(key);
    if (it != g_sector_cache.end()) return it->second;
  }
  const CVec w =
      phases_to_beam(flatten_in_band(chirp_phases(a, b, n_t, spacing), a, b, spacing));
  std::lock_guard<std::mutex> lock(g_sector_mutex);
  return g_sector_cache.emplace(key, w).first->second;
}

namespace {

// Best DFT-beam gain whose steering direction lies inside [a, b); the ideal
// sector score used by SectorScoring::kIdealOracle.
double ideal_sector_score(const CVec& h, const DftCodebook& v, double a, double b) {
  double best = 0.0;
  for (int i = 0; i < v.n_v(); ++i) {
    const double s = v.sin_psi(i);
    if (s >= a && s < b) best = std::max(best, std::norm(hermitian_inner(h, v.v.col(i))));
  }
  return best;
}

}  // namespace

SearchResult binary_search(const CVec& h, const DftCodebook& v,
                           const RadioConfig& radio, RngStream& rng,
                           SectorScoring scoring) {
  const int n_v = v.n_v();
  if (n_v < 2 || (n_v & (n_v - 1)) != 0)
    throw std::invalid_argument("binary_search: N_V must be a power of two");
  const int n_t = static_cast<int>(h.size());
  SearchResult res;
  double lo = -1.0, hi = 1.0;
  const int levels = static_cast<int>(std::round(std::log2(n_v)));
  for (int level = 0; level < levels; ++level) {
    const double mid = 0.5 * (lo + hi);
    double score_left, score_right;
    if (scoring == SectorScoring::kIdealOracle) {
      res.measurements += 2;
      score_left = ideal_sector_score(h, v, lo, mid);
      score_right = ideal_sector_score(h, v, mid, hi);
    } else {
      const CVec wl = sector_wide_beam(lo, mid, n_t, v.spacing);
      const CVec wr = sector_wide_beam(mid, hi, n_t, v.spacing);
      score_left = std::norm(receive(h, wl, radio, rng, &res.measurements));
      score_right = std::norm(receive(h, wr, radio, rng, &res.measurements));
    }
    // ties toward lower sin values
    if (score_right > score_left)
      lo = mid;
    else
      hi = mid;
  }
  // final sector holds exactly one DFT steering direction
  res.index = std::min(
      n_v - 1,
      std::max(0, static_cast<int>(std::round((lo + 1.0) * n_v / 2.0))));
  return res;
}

std::vector<std::pair<int, int>> two_tier_sector_beams(int n_v, int wide_size) {
  const int per = (n_v + wide_size - 1) / wide_size;  // ceil(N_V / M)
  std::vector<std::pair<int, int>> out(wide_size);
  for (int j = 0; j < wide_size; ++j) {
    int start = static_cast<int>((static_cast<long>(j) * n_v) / wide_size);
    start = std::min(start, n_v - per);
    out[j] = {start, start + per};  // half-open
  }
  return out;
}

SearchResult two_tier_search(const CVec& h, const DftCodebook& v, int wide_size,
                             const RadioConfig& radio, RngStream& rng) {
  if (wide_size < 1) throw std::invalid_argument("two_tier_search: M >= 1 required");
  const int n_t = static_cast<int>(h.size());
  SearchResult res;
  // stage 1: M wide sectors tiling [-1, 1]
  int best_sector = 0;
  double best_score = -1.0;
  for (int j = 0; j < wide_size; ++j) {
    const double a = -1.0 + 2.0 * j / wide_size;
    const double b = -1.0 + 2.0 * (j + 1) / wide_size;
    const CVec w = sector_wide_beam(a, b, n_t, v.spacing);
    const double score = std::norm(receive(h, w, radio, rng, &res.measurements));
    if (score > best_score) {
      best_score = score;
      best_sector = j;
    }
  }
  // stage 2: exhaustive over that sector's DFT beams
  const auto ranges = two_tier_sector_beams(v.n_v(), wide_size);
  const auto [first, last] = ranges[best_sector];
  int best_beam = first;
  double best_power = -1.0;
  for (int i = first; i < last; ++i) {
    const double p = std::norm(receive(h, v.v.col(i), radio, rng, &res.measurements));
    if (p > best_power) {
      best_power = p;
      best_beam = i;
    }
  }
  res.index = best_beam;
  return res;
}

std::uint64_t measurement_count(const MethodSpec& spec, int n_v) {
  switch (spec.kind) {
    case MethodKind::kExhaustive:
      return static_cast<std::uint64_t>(n_v);
    case MethodKind::kBinary: {
      if (n_v < 2 || (n_v & (n_v - 1)) != 0)
        throw std::invalid_argument("measurement_count: binary needs power-of-two N_V");
      return 2 * static_cast<std::uint64_t>(std::round(std::log2(n_v)));
    }
    case MethodKind::kTwoTier: {
      if (spec.wide_size < 1)
        throw std::invalid_argument("measurement_count: two-tier needs M >= 1");
      return static_cast<std::uint64_t>(spec.wide_size) +
             static_cast<std::uint64_t>((n_v + spec.wide_size - 1) / spec.wide_size);
    }
    case MethodKind::kLearnedSingle:
    case MethodKind::kLearnedHier: {
      if (spec.n1 + spec.n2 < 1)
        throw std::invalid_argument("measurement_count: learned needs probing size");
      return static_cast<std::uint64_t>(spec.n1 + spec.n2);
    }
  }
  throw std::invalid_argument("measurement_count: invalid spec");
}

}  // namespace beamalign
