// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#pragma once

#include "beamalign/channel.hpp"
#include "beamalign/codebook.hpp"

namespace beamalign {

enum class MethodKind {
  kExhaustive,
  kBinary,
  kTwoTier,
  kLearnedSingle,
  kLearnedHier,
};

struct MethodSpec {
  MethodKind kind = MethodKind::kExhaustive;
  int wide_size = 0;  // two-tier wide-beam codebook size M
  int n1 = 0;         // learned methods
  int n2 = 0;
};

const char* method_name(MethodKind kind);
MethodKind method_kind_from_name(const std::string& name);

struct SearchResult {
  int index = 0;
  std::uint64_t measurements = 0;
};

/// Sweep all N_V beams with noise, return argmax of measured power.
SearchResult exhaustive_search(const CVec& h, const DftCodebook& v,
                               const RadioConfig& radio, RngStream& rng);

/// Constant-modulus beam approximating uniform gain over the sin-space
/// sector [a, b]: a linear-FM phase profile whose spatial frequency sweeps
/// the sector across the aperture. Unit norm.
CVec sector_wide_beam(double a, double b, int n_t, double spacing);

/// Sector-scoring hook for the descent logic: measured wide-beam power, or an
/// ideal noiseless oracle (max DFT-beam gain inside the sector) that isolates
/// decision-logic correctness from wide-beam shape artifacts.
enum class SectorScoring { kWideBeam, kIdealOracle };

/// log2(N_V) levels of halving in sin-space, 2 sector measurements per level.
SearchResult binary_search(const CVec& h, const DftCodebook& v,
                           const RadioConfig& radio, RngStream& rng,
                           SectorScoring scoring = SectorScoring::kWideBeam);

/// M wide sectors tiling [-1, 1], then the ceil(N_V / M) DFT beams of the
/// winning sector.
SearchResult two_tier_search(const CVec& h, const DftCodebook& v, int wide_size,
                             const RadioConfig& radio, RngStream& rng);

/// DFT-beam index ranges per two-tier sector; union covers [0, N_V).
std::vector<std::pair<int, int>> two_tier_sector_beams(int n_v, int wide_size);

std::uint64_t measurement_count(const MethodSpec& spec, int n_v);

}  // namespace beamalign
