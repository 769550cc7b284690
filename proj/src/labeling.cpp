// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#include "beamalign/labeling.hpp"

#include <algorithm>
#include <cassert>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace beamalign {

int ClusterModel::assign(double value) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < groups(); ++k) {
    const double d = std::abs(value - centroids[k]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::pair<double, double> ClusterModel::cell(int k) const {
  const double lo = (k == 0) ? -1.0 : 0.5 * (centroids[k - 1] + centroids[k]);
  const double hi =
      (k + 1 == groups()) ? 1.0 : 0.5 * (centroids[k] + centroids[k + 1]);
  return {lo, hi};
}

RVec LabelSet::onehot_group(std::size_t i) const {
  RVec v = RVec::Zero(groups);
  v[group_id[i]] = 1.0;
  return v;
}

RVec LabelSet::onehot_beam(std::size_t i) const {
  RVec v = RVec::Zero(n_v);
  v[oracle_index[i]] = 1.0;
  return v;
}

int oracle_best_beam(const CVec& h, const DftCodebook& v) {
  if (h.size() != v.v.rows())
    throw std::invalid_argument("oracle_best_beam: dimension mismatch");
  int best = 0;
  double best_g = -1.0;
  for (int i = 0; i < v.n_v(); ++i) {
    const double g = std::norm(hermitian_inner(h, v.v.col(i)));
    if (g > best_g) {
      best_g = g;
      best = i;
    }
  }
  return best;
}

double fine_direction(const CVec& h, int n_u, double spacing) {
  const DftCodebook u = dft_codebook(static_cast<int>(h.size()), n_u, spacing);
  return u.sin_psi(oracle_best_beam(h, u));
}

namespace {

double kmeans_objective(const std::vector<double>& values,
                        const std::vector<int>& assign,
                        const std::vector<double>& centroids) {
  double obj = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - centroids[assign[i]];
    obj += d * d;
  }
  return obj;
}

}  // namespace

namespace {

// One Lloyd run to an assignment fixpoint from the given seeding; asserts
// the objective never increases.
KmeansResult lloyd_run(const std::vector<double>& values, int groups,
                       std::vector<double> centroids) {
  const std::size_t n = values.size();
  std::sort(centroids.begin(), centroids.end());

  std::vector<int> assign(n, 0);
  double prev_obj = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 1000; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int k = 0; k < groups; ++k) {
        const double d = std::abs(values[i] - centroids[k]);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }

    // empty-cluster repair: grab the value farthest from its centroid
    bool repaired = false;
    for (int k = 0; k < groups; ++k) {
      if (std::count(assign.begin(), assign.end(), k) > 0) continue;
      repaired = true;
      std::size_t worst = 0;
      double worst_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = std::abs(values[i] - centroids[assign[i]]);
        if (d > worst_d) {
          worst_d = d;
          worst = i;
        }
      }
      assign[worst] = k;
      changed = true;
    }

    const double obj_after_assign = kmeans_objective(values, assign, centroids);
    if (!repaired && obj_after_assign > prev_obj + 1e-12)
      throw std::logic_error("kmeans_1d: objective increased at assignment step");

    // centroid update: cluster means
    std::vector<double> sum(groups, 0.0);
    std::vector<std::size_t> cnt(groups, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[assign[i]] += values[i];
      ++cnt[assign[i]];
    }
    for (int k = 0; k < groups; ++k) centroids[k] = sum[k] / cnt[k];

    const double obj = kmeans_objective(values, assign, centroids);
    assert(obj <= obj_after_assign + 1e-12);
    if (!changed) break;
    prev_obj = obj;
  }

  // sort centroids ascending and remap assignments
  std::vector<int> order(groups);
  for (int k = 0; k < groups; ++k) order[k] = k;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return centroids[a] < centroids[b]; });
  std::vector<double> sorted(groups);
  std::vector<int> remap(groups);
  for (int k = 0; k < groups; ++k) {
    sorted[k] = centroids[order[k]];
    remap[order[k]] = k;
  }
  for (auto& a : assign) a = remap[a];

  KmeansResult res;
  res.model.centroids = std::move(sorted);
  res.assignments = std::move(assign);
  res.objective = kmeans_objective(values, res.assignments, res.model.centroids);
  return res;
}

}  // namespace

KmeansResult kmeans_1d(const std::vector<double>& values, int groups,
                       std::uint64_t seed) {
  if (groups < 1) throw std::invalid_argument("kmeans_1d: groups >= 1 required");
  std::set<double> distinct(values.begin(), values.end());
  if (static_cast<int>(distinct.size()) < groups)
    throw std::invalid_argument("kmeans_1d: fewer distinct values than groups");

  const std::size_t n = values.size();
  RngStream rng(seed, 0x6B4Du);

  // Lloyd converges to a local optimum that depends on the seeding. In one
  // dimension the global optimum is a contiguous partition of the sorted
  // distinct values, so a dynamic program over (distinct value, count) pairs
  // yields optimal segment means cheaply; seeding Lloyd there keeps the
  // converged objective at (or below) that optimum. A farthest-point seeding
  // from the caller's seed is kept as a second restart.
  std::vector<double> dv(distinct.begin(), distinct.end());
  std::vector<double> weight(dv.size(), 0.0);
  {
    std::size_t at = 0;
    std::vector<double> sorted(values);
    std::sort(sorted.begin(), sorted.end());
    for (double v : sorted) {
      while (dv[at] != v) ++at;
      weight[at] += 1.0;
    }
  }
  const std::size_t d = dv.size();
  std::vector<double> pw(d + 1, 0.0), ps(d + 1, 0.0), ps2(d + 1, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    pw[i + 1] = pw[i] + weight[i];
    ps[i + 1] = ps[i] + weight[i] * dv[i];
    ps2[i + 1] = ps2[i] + weight[i] * dv[i] * dv[i];
  }
  auto seg_sse = [&](std::size_t a, std::size_t b) {  // dv[a..b)
    const double w = pw[b] - pw[a], s = ps[b] - ps[a], s2 = ps2[b] - ps2[a];
    return s2 - s * s / w;
  };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> dp(groups + 1, std::vector<double>(d + 1, inf));
  std::vector<std::vector<std::size_t>> cut(groups + 1,
                                            std::vector<std::size_t>(d + 1, 0));
  dp[0][0] = 0.0;
  for (int k = 1; k <= groups; ++k) {
    for (std::size_t b = k; b <= d; ++b) {
      for (std::size_t a = k - 1; a < b; ++a) {
        const double cand = dp[k - 1][a] + seg_sse(a, b);
        if (cand < dp[k][b]) {
          dp[k][b] = cand;
          cut[k][b] = a;
        }
      }
    }
  }
  std::vector<double> dp_centroids(groups);
  {
    std::size_t b = d;
    for (int k = groups; k >= 1; --k) {
      const std::size_t a = cut[k][b];
      dp_centroids[k - 1] = (ps[b] - ps[a]) / (pw[b] - pw[a]);
      b = a;
    }
  }

  std::vector<double> fp_centroids;
  fp_centroids.push_back(values[rng.next_u64() % n]);
  while (static_cast<int>(fp_centroids.size()) < groups) {
    double best_v = values[0], best_d = -1.0;
    for (double v : values) {
      double dist = std::numeric_limits<double>::infinity();
      for (double c : fp_centroids) dist = std::min(dist, std::abs(v - c));
      if (dist > best_d) {
        best_d = dist;
        best_v = v;
      }
    }
    fp_centroids.push_back(best_v);
  }

  KmeansResult best = lloyd_run(values, groups, std::move(dp_centroids));
  KmeansResult fp = lloyd_run(values, groups, std::move(fp_centroids));
  if (fp.objective < best.objective) best = std::move(fp);
  return best;
}

LabelSet build_labels(const Dataset& ds, const DftCodebook& v, int n_u, int groups,
                      std::uint64_t seed) {
  if (ds.samples.empty()) throw std::invalid_argument("build_labels: empty dataset");
  LabelSet labels;
  labels.n_v = v.n_v();
  labels.groups = groups;
  labels.oracle_index.resize(ds.size());
  labels.sin_psi.resize(ds.size());
  const DftCodebook u = dft_codebook(ds.n_t, n_u, v.spacing);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    labels.oracle_index[i] = oracle_best_beam(ds.samples[i].h, v);
    labels.sin_psi[i] = u.sin_psi(oracle_best_beam(ds.samples[i].h, u));
  }
  auto km = kmeans_1d(labels.sin_psi, groups, seed);
  labels.clusters = std::move(km.model);
  labels.group_id = std::move(km.assignments);
  return labels;
}

void save_labels(const LabelSet& labels, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_labels: cannot open " + path);
  out << "sample_id,oracle_index,sin_psi,group_id\n";
  out.precision(17);
  for (std::size_t i = 0; i < labels.size(); ++i)
    out << i << ',' << labels.oracle_index[i] << ',' << labels.sin_psi[i] << ','
        << labels.group_id[i] << '\n';
}

LabelSet load_labels(const std::string& path, int n_v, int groups) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_labels: cannot open " + path);
  LabelSet labels;
  labels.n_v = n_v;
  labels.groups = groups;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> fields;
    while (std::getline(ss, tok, ',')) fields.push_back(tok);
    if (fields.size() != 4)
      throw std::runtime_error("load_labels: malformed row in " + path);
    labels.oracle_index.push_back(std::stoi(fields[1]));
    labels.sin_psi.push_back(std::stod(fields[2]));
    labels.group_id.push_back(std::stoi(fields[3]));
  }
  // reconstruct centroids as group means
  std::vector<double> sum(groups, 0.0);
  std::vector<std::size_t> cnt(groups, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    sum[labels.group_id[i]] += labels.sin_psi[i];
    ++cnt[labels.group_id[i]];
  }
  labels.clusters.centroids.resize(groups);
  for (int k = 0; k < groups; ++k)
    labels.clusters.centroids[k] = cnt[k] ? sum[k] / cnt[k] : 0.0;
  return labels;
}

}  // namespace beamalign
