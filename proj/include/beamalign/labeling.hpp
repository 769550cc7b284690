// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#pragma once

#include <string>
#include <vector>

#include "beamalign/channel.hpp"
#include "beamalign/codebook.hpp"

namespace beamalign {

struct ClusterModel {
  std::vector<double> centroids;  // ascending, in sin-direction domain

  int groups() const { return static_cast<int>(centroids.size()); }
  /// Nearest centroid; ties toward the lower index.
  int assign(double value) const;
  /// Voronoi cell [lo, hi] of group k within [-1, 1].
  std::pair<double, double> cell(int k) const;
};

struct LabelSet {
  std::vector<int> oracle_index;  // i*_V per sample
  std::vector<double> sin_psi;    // fine-grid direction per sample
  std::vector<int> group_id;      // K-means group per sample
  ClusterModel clusters;
  int n_v = 0;
  int groups = 0;

  std::size_t size() const { return oracle_index.size(); }
  RVec onehot_group(std::size_t i) const;
  RVec onehot_beam(std::size_t i) const;
};

/// Noiseless argmax_i |h^H v_i|^2; ties broken by lowest index.
int oracle_best_beam(const CVec& h, const DftCodebook& v);

/// Exhaustive search over an N_U-point DFT grid; returns sin(psi) of the winner.
double fine_direction(const CVec& h, int n_u, double spacing);

struct KmeansResult {
  ClusterModel model;
  std::vector<int> assignments;
  double objective = 0.0;  // within-cluster sum of squared distances
};

/// Lloyd iterations to an assignment fixpoint with farthest-point seeding.
KmeansResult kmeans_1d(const std::vector<double>& values, int groups,
                       std::uint64_t seed);

LabelSet build_labels(const Dataset& ds, const DftCodebook& v, int n_u, int groups,
                      std::uint64_t seed);

/// Cache CSV: sample_id, oracle_index, sin_psi, group_id.
void save_labels(const LabelSet& labels, const std::string& path);
LabelSet load_labels(const std::string& path, int n_v, int groups);

}  // namespace beamalign
