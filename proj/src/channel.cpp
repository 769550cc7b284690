// SPDX-License-Identifier: Apache-2.0
//
// beamalign: learned hierarchical beam alignment workbench for mmWave MISO links

#include "beamalign/channel.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace beamalign {

namespace {

constexpr char kMagic[4] = {'B', 'A', 'L', 'N'};
constexpr std::uint32_t kFormatVersion = 1;

bool has_csv_extension(const std::string& path) {
  const auto dot = path.find_last_of('.');
  if (dot == std::string::npos) return false;
  std::string ext = path.substr(dot);
  for (auto& c : ext) c = static_cast<char>(std::tolower(c));
  return ext == ".csv";
}

[[noreturn]] void parse_fail(const std::string& path, const std::string& what,
                             std::int64_t record = -1) {
  std::ostringstream os;
  os << "load_dataset: " << path << ": " << what;
  if (record >= 0) os << " (record " << record << ")";
  throw std::runtime_error(os.str());
}

}  // namespace

double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

double noise_power_w(double psd_dbm_per_hz, double bandwidth_hz) {
  if (bandwidth_hz <= 0.0)
    throw std::domain_error("noise_power_w: bandwidth must be positive");
  return dbm_to_watts(psd_dbm_per_hz + 10.0 * std::log10(bandwidth_hz));
}

CVec steering_vector(double aod, int n_t, double spacing) {
  if (n_t < 1) throw std::invalid_argument("steering_vector: n_t >= 1 required");
  CVec a(n_t);
  const double slope = 2.0 * M_PI * spacing * std::sin(aod);
  for (int m = 0; m < n_t; ++m)
    a[m] = Complex(std::cos(slope * m), std::sin(slope * m));
  return a;
}

ChannelSample synthesize_channel(const std::vector<PathComponent>& paths, int n_t,
                                 double spacing, std::uint64_t sample_id) {
  if (paths.empty())
    throw std::domain_error("synthesize_channel: at least one path required");
  CVec h = CVec::Zero(n_t);
  for (const auto& p : paths) h += p.gain * steering_vector(p.aod, n_t, spacing);
  return ChannelSample{std::move(h), paths, sample_id};
}

Dataset generate_dataset(const DatasetSpec& spec, int n_t, double spacing,
                         std::uint64_t seed) {
  if (spec.count < 1)
    throw std::invalid_argument("generate_dataset: count >= 1 required");
  if (spec.min_paths < 1 || spec.max_paths < spec.min_paths)
    throw std::invalid_argument("generate_dataset: bad path-count range");
  if (spec.secondary_gain_max < spec.secondary_gain_min)
    throw std::invalid_argument("generate_dataset: bad gain range");
  if (spec.aod_sectors.empty())
    throw std::invalid_argument("generate_dataset: no AoD sectors");
  for (const auto& [lo, hi] : spec.aod_sectors)
    if (!(lo < hi)) throw std::invalid_argument("generate_dataset: empty sector");

  Dataset ds;
  ds.n_t = n_t;
  ds.provenance = Provenance::kSynthetic;
  ds.generation_seed = seed;
  ds.samples.reserve(spec.count);
  RngStream root(seed, 0);
  for (std::size_t i = 0; i < spec.count; ++i) {
    RngStream rng = root.substream(i);
    const auto& sector =
        spec.aod_sectors[rng.next_u64() % spec.aod_sectors.size()];
    const int n_paths =
        spec.min_paths +
        static_cast<int>(rng.next_u64() %
                         static_cast<std::uint64_t>(spec.max_paths - spec.min_paths + 1));
    std::vector<PathComponent> paths(n_paths);
    for (int p = 0; p < n_paths; ++p) {
      const double aod =
          sector.first + rng.next_double() * (sector.second - sector.first);
      // dominant path has unit amplitude, secondaries are weaker
      const double amp =
          (p == 0) ? 1.0
                   : spec.secondary_gain_min +
                         rng.next_double() *
                             (spec.secondary_gain_max - spec.secondary_gain_min);
      const double phase = rng.next_double() * 2.0 * M_PI;
      paths[p] = {aod, Complex(amp * std::cos(phase), amp * std::sin(phase))};
    }
    ds.samples.push_back(synthesize_channel(paths, n_t, spacing, i));
  }
  return ds;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double train_fraction,
                                          std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw std::invalid_argument("split_dataset: fraction must be in (0, 1)");
  RngStream rng(seed, 0x5917u);  // dedicated split stream
  const auto perm = rng.permutation(ds.size());
  const std::size_t n_train =
      static_cast<std::size_t>(std::floor(train_fraction * ds.size()));
  Dataset train, test;
  train.n_t = test.n_t = ds.n_t;
  train.provenance = test.provenance = ds.provenance;
  train.generation_seed = test.generation_seed = ds.generation_seed;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    Dataset& dst = (i < n_train) ? train : test;
    ChannelSample s = ds.samples[perm[i]];
    s.sample_id = dst.samples.size();
    dst.samples.push_back(std::move(s));
  }
  return {std::move(train), std::move(test)};
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_dataset: cannot open " + path);
  if (has_csv_extension(path)) {
    out.precision(17);
    for (const auto& s : ds.samples) {
      for (int m = 0; m < ds.n_t; ++m) {
        if (m) out << ',';
        out << s.h[m].real() << ',' << s.h[m].imag();
      }
      out << '\n';
    }
    return;
  }
  out.write(kMagic, 4);
  const std::uint32_t version = kFormatVersion;
  const std::uint32_t n_t = static_cast<std::uint32_t>(ds.n_t);
  const std::uint64_t count = ds.samples.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&n_t), sizeof(n_t));
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  for (const auto& s : ds.samples)
    out.write(reinterpret_cast<const char*>(s.h.data()),
              static_cast<std::streamsize>(2 * sizeof(double) * ds.n_t));
  if (!out) throw std::runtime_error("save_dataset: write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);
  Dataset ds;
  ds.provenance = Provenance::kIngested;

  if (has_csv_extension(path)) {
    std::string line;
    std::int64_t record = 0;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<double> vals;
      std::stringstream ss(line);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        try {
          vals.push_back(std::stod(tok));
        } catch (const std::exception&) {
          parse_fail(path, "non-numeric field '" + tok + "'", record);
        }
      }
      if (vals.size() < 2 || vals.size() % 2 != 0)
        parse_fail(path, "row must hold 2*N_t floats", record);
      const int n_t = static_cast<int>(vals.size() / 2);
      if (ds.n_t == 0)
        ds.n_t = n_t;
      else if (n_t != ds.n_t)
        parse_fail(path, "N_t mismatch across rows", record);
      ChannelSample s;
      s.h.resize(n_t);
      for (int m = 0; m < n_t; ++m) s.h[m] = Complex(vals[2 * m], vals[2 * m + 1]);
      if (!all_finite(s.h)) parse_fail(path, "non-finite entry", record);
      s.sample_id = static_cast<std::uint64_t>(record);
      ds.samples.push_back(std::move(s));
      ++record;
    }
    if (ds.samples.empty()) parse_fail(path, "no samples");
    return ds;
  }

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    parse_fail(path, "bad magic (expected BALN)");
  std::uint32_t version = 0, n_t = 0;
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&n_t), sizeof(n_t));
  in.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!in) parse_fail(path, "truncated header");
  if (version != kFormatVersion) parse_fail(path, "unsupported format version");
  if (n_t == 0) parse_fail(path, "header N_t = 0");
  ds.n_t = static_cast<int>(n_t);
  ds.samples.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    ChannelSample s;
    s.h.resize(ds.n_t);
    in.read(reinterpret_cast<char*>(s.h.data()),
            static_cast<std::streamsize>(2 * sizeof(double) * ds.n_t));
    if (!in) parse_fail(path, "truncated sample data", static_cast<std::int64_t>(i));
    if (!all_finite(s.h)) parse_fail(path, "non-finite entry", static_cast<std::int64_t>(i));
    s.sample_id = i;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

Complex receive(const CVec& h, const CVec& w, const RadioConfig& radio,
                RngStream& rng, std::uint64_t* measurements) {
  if (h.size() != w.size())
    throw std::invalid_argument("receive: dimension mismatch");
  if (measurements) ++*measurements;
  const Complex n = rng.next_complex_gaussian(radio.noise_var_w);
  return std::sqrt(radio.tx_power_w) * hermitian_inner(h, w) + n;
}

double snr_db(const CVec& h, const CVec& w, const RadioConfig& radio) {
  if (radio.noise_var_w <= 0.0)
    throw std::domain_error("snr_db: noise variance must be positive");
  const double g = std::norm(hermitian_inner(h, w));
  return 10.0 * std::log10(radio.tx_power_w * g / radio.noise_var_w);
}

RVec sweep_measure(const CVec& h, const CMat& codebook, const RadioConfig& radio,
                   RngStream& rng, std::uint64_t* measurements) {
  if (codebook.rows() != h.size())
    throw std::invalid_argument("sweep_measure: dimension mismatch");
  RVec z(codebook.cols());
  for (Eigen::Index i = 0; i < codebook.cols(); ++i)
    z[i] = std::norm(receive(h, codebook.col(i), radio, rng, measurements));
  return z;
}

}  // namespace beamalign
