// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "beamalign/numerics.hpp"

namespace beamalign {

struct PathComponent {
  double aod = 0.0;           // radians, in (-pi/2, pi/2)
  Complex gain{1.0, 0.0};     // linear amplitude
};

struct ChannelSample {
  CVec h;
  std::vector<PathComponent> paths;  // empty when ingested from file
  std::uint64_t sample_id = 0;
};

enum class Provenance { kSynthetic, kIngested };

struct Dataset {
  std::vector<ChannelSample> samples;
  int n_t = 0;
  Provenance provenance = Provenance::kSynthetic;
  std::uint64_t generation_seed = 0;

  std::size_t size() const { return samples.size(); }
};

struct RadioConfig {
  double tx_power_w = 1.0;      // rho, linear watts
  double noise_var_w = 0.0;     // sigma_n^2, linear watts
  int n_t = 1;
  double spacing = 0.5;         // d / lambda
};

/// Total noise power in watts from a PSD in dBm/Hz and a bandwidth.
double noise_power_w(double psd_dbm_per_hz, double bandwidth_hz);
double dbm_to_watts(double dbm);

/// Entry m = exp(j * 2*pi*(d/lambda) * m * sin(aod)); all entries unit modulus.
CVec steering_vector(double aod, int n_t, double spacing);

/// h = sum_l gain_l * steering_vector(aod_l).
ChannelSample synthesize_channel(const std::vector<PathComponent>& paths, int n_t,
                                 double spacing, std::uint64_t sample_id = 0);

struct DatasetSpec {
  std::size_t count = 1;
  int min_paths = 1;
  int max_paths = 3;
  double secondary_gain_min = 0.1;
  double secondary_gain_max = 0.5;
  // AoD sectors in radians; a sample's paths are drawn uniformly inside a
  // uniformly chosen sector. The default models users concentrated in a few
  // angular clusters in front of the array rather than spread uniformly.
  std::vector<std::pair<double, double>> aod_sectors{
      {-65.0 * M_PI / 180.0, -35.0 * M_PI / 180.0},
      {-15.0 * M_PI / 180.0, 10.0 * M_PI / 180.0},
      {25.0 * M_PI / 180.0, 50.0 * M_PI / 180.0},
      {60.0 * M_PI / 180.0, 75.0 * M_PI / 180.0}};
};

Dataset generate_dataset(const DatasetSpec& spec, int n_t, double spacing,
                         std::uint64_t seed);

/// Disjoint partition shuffled by seed; train side gets floor(fraction * N).
std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_fraction,
                                          std::uint64_t seed);

/// Binary "BALN" container or CSV (auto-detected by .csv extension).
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

/// y = sqrt(rho) * h^H w + n, pilot s = 1. Increments *measurements if given.
Complex receive(const CVec& h, const CVec& w, const RadioConfig& radio,
                RngStream& rng, std::uint64_t* measurements = nullptr);

/// 10*log10(rho * |h^H w|^2 / sigma_n^2); requires sigma_n^2 > 0.
double snr_db(const CVec& h, const CVec& w, const RadioConfig& radio);

/// z_i = |y_i|^2 with independent noise per beam (codebook columns are beams).
RVec sweep_measure(const CVec& h, const CMat& codebook, const RadioConfig& radio,
                   RngStream& rng, std::uint64_t* measurements = nullptr);

}  // namespace beamalign
