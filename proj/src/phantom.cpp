#include "octrecon/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "octrecon/dsp.hpp"
#include "octrecon/errors.hpp"
#include "octrecon/stats.hpp"

namespace octrecon::phantom {
namespace {

constexpr std::size_t kCalibrationLines = 32;
constexpr double kCalibrationPercentile = 99.0;
constexpr std::uint64_t kCalibrationStream = 0xCA11B4A7E0000000ULL;
constexpr int kUndulationTerms = 3;
constexpr double kMinLayerGap = 1.0;

double nyquist_limit(std::size_t n_samples) { return static_cast<double>(n_samples) / 2.0 - 1.0; }

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over the combined key
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void PhantomSpec::validate() const {
  if (n_bscans == 0 || n_alines == 0) throw InvalidArgument("phantom: n_bscans and n_alines must be positive");
  if (n_samples < 4 || n_samples % 2 != 0) throw InvalidArgument("phantom: n_samples must be even and >= 4");
  if (scatterers_per_layer_density < 0.0) throw InvalidArgument("phantom: negative scatterer density");
  if (axial_decay_rate < 0.0) throw InvalidArgument("phantom: negative axial decay rate");
  if (!(envelope_sigma > 0.0)) throw InvalidArgument("phantom: envelope_sigma must be > 0");
  if (dc_level < 0.0 || noise_sigma < 0.0) throw InvalidArgument("phantom: dc_level and noise_sigma must be >= 0");
  double previous = -1.0;
  for (const auto& b : layer_boundaries) {
    if (b.depth < 0.0 || b.depth >= static_cast<double>(n_samples) / 2.0) {
      throw InvalidArgument("phantom: boundary depth outside [0, n_samples/2)");
    }
    if (b.depth < previous) throw InvalidArgument("phantom: boundaries must be ordered shallow to deep");
    if (b.undulation < 0.0 || b.reflectivity < 0.0) throw InvalidArgument("phantom: negative boundary parameter");
    if (b.scatter_strength < 0.0 || b.scatter_strength > 1.0) {
      throw InvalidArgument("phantom: scatter_strength must lie in [0, 1]");
    }
    previous = b.depth;
  }
}

void to_json(nlohmann::json& j, const PhantomSpec& spec) {
  nlohmann::json boundaries = nlohmann::json::array();
  for (const auto& b : spec.layer_boundaries) {
    boundaries.push_back({{"depth", b.depth},
                          {"undulation", b.undulation},
                          {"reflectivity", b.reflectivity},
                          {"scatter_strength", b.scatter_strength}});
  }
  j = nlohmann::json{{"n_bscans", spec.n_bscans},
                     {"n_alines", spec.n_alines},
                     {"n_samples", spec.n_samples},
                     {"layer_boundaries", boundaries},
                     {"scatterers_per_layer_density", spec.scatterers_per_layer_density},
                     {"axial_decay_rate", spec.axial_decay_rate},
                     {"envelope_sigma", spec.envelope_sigma},
                     {"dc_level", spec.dc_level},
                     {"noise_sigma", spec.noise_sigma},
                     {"rng_seed", spec.rng_seed}};
}

void from_json(const nlohmann::json& j, PhantomSpec& spec) {
  PhantomSpec out;
  out.n_bscans = j.at("n_bscans").get<std::size_t>();
  out.n_alines = j.at("n_alines").get<std::size_t>();
  out.n_samples = j.value("n_samples", std::size_t{1280});
  for (const auto& b : j.value("layer_boundaries", nlohmann::json::array())) {
    BoundaryCurve curve;
    curve.depth = b.at("depth").get<double>();
    curve.undulation = b.value("undulation", 0.0);
    curve.reflectivity = b.value("reflectivity", 1.0);
    curve.scatter_strength = b.value("scatter_strength", 0.3);
    out.layer_boundaries.push_back(curve);
  }
  out.scatterers_per_layer_density = j.value("scatterers_per_layer_density", 0.0);
  out.axial_decay_rate = j.value("axial_decay_rate", 0.0);
  out.envelope_sigma = j.value("envelope_sigma", 1e30);
  out.dc_level = j.value("dc_level", 0.0);
  out.noise_sigma = j.value("noise_sigma", 0.0);
  out.rng_seed = j.value("rng_seed", std::uint64_t{0});
  spec = std::move(out);
}

PhantomSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open phantom spec: " + path);
  nlohmann::json j;
  try {
    in >> j;
    return j.get<PhantomSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("phantom spec " + path + ": " + e.what());
  }
}

std::span<const double> SpectralVolume::aline(std::size_t bscan, std::size_t line) const {
  return {data.data() + (bscan * n_alines + line) * n_samples, n_samples};
}

std::span<double> SpectralVolume::aline(std::size_t bscan, std::size_t line) {
  return {data.data() + (bscan * n_alines + line) * n_samples, n_samples};
}

std::vector<double> fringe_for_aline(std::span<const Reflector> reflectors, std::size_t n_samples,
                                     double envelope_sigma, double dc_level, double noise_sigma, Rng& rng) {
  if (n_samples < 2) throw InvalidArgument("fringe_for_aline: n_samples must be >= 2");
  const double half = static_cast<double>(n_samples) / 2.0;
  for (const auto& r : reflectors) {
    if (r.cycles < 0.0 || r.cycles >= half) {
      throw InvalidArgument("fringe_for_aline: reflector cycles must lie in [0, n_samples/2)");
    }
  }
  const double n = static_cast<double>(n_samples);
  const double centre = (n - 1.0) / 2.0;
  std::vector<double> out(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = static_cast<double>(i);
    double s = dc_level;
    for (const auto& r : reflectors) {
      s += r.amplitude * std::cos(2.0 * std::numbers::pi * r.cycles * t / n + r.phase);
    }
    const double d = t - centre;
    out[i] = std::exp(-(d * d) / (2.0 * envelope_sigma * envelope_sigma)) * s;
  }
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_sigma);
    for (auto& v : out) v += noise(rng);
  }
  return out;
}

std::vector<std::vector<double>> boundary_depths(const PhantomSpec& spec, Rng& rng) {
  const double limit = nyquist_limit(spec.n_samples);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> depths;
  depths.reserve(spec.layer_boundaries.size());
  for (std::size_t j = 0; j < spec.layer_boundaries.size(); ++j) {
    const auto& curve = spec.layer_boundaries[j];
    double weight[kUndulationTerms];
    double freq[kUndulationTerms];
    double phase[kUndulationTerms];
    double total = 0.0;
    for (int t = 0; t < kUndulationTerms; ++t) {
      weight[t] = unit(rng);
      freq[t] = 0.25 + 1.25 * unit(rng);
      phase[t] = 2.0 * std::numbers::pi * unit(rng);
      total += weight[t];
    }
    std::vector<double> row(spec.n_alines);
    for (std::size_t a = 0; a < spec.n_alines; ++a) {
      const double x = static_cast<double>(a) / static_cast<double>(spec.n_alines);
      double wiggle = 0.0;
      for (int t = 0; t < kUndulationTerms; ++t) {
        wiggle += weight[t] * std::sin(2.0 * std::numbers::pi * freq[t] * x + phase[t]);
      }
      double d = curve.depth + (total > 0.0 ? curve.undulation * wiggle / total : 0.0);
      if (j > 0) d = std::max(d, depths[j - 1][a] + kMinLayerGap);
      row[a] = std::clamp(d, 0.0, limit);
    }
    depths.push_back(std::move(row));
  }
  return depths;
}

std::vector<std::vector<Reflector>> layered_scene(const PhantomSpec& spec, std::size_t bscan_index, Rng& rng) {
  if (bscan_index >= spec.n_bscans) throw InvalidArgument("layered_scene: bscan_index out of range");
  const double limit = nyquist_limit(spec.n_samples);
  const auto depths = boundary_depths(spec, rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<Reflector>> scene(spec.n_alines);
  for (std::size_t a = 0; a < spec.n_alines; ++a) {
    auto& line = scene[a];
    for (std::size_t j = 0; j < depths.size(); ++j) {
      const double c = depths[j][a];
      line.push_back({c, spec.layer_boundaries[j].reflectivity * std::exp(-spec.axial_decay_rate * c),
                      2.0 * std::numbers::pi * unit(rng)});
    }
    if (spec.scatterers_per_layer_density <= 0.0) continue;
    for (std::size_t j = 0; j < depths.size(); ++j) {
      const double top = depths[j][a];
      const double bottom = (j + 1 < depths.size()) ? depths[j + 1][a] : limit;
      if (bottom <= top) continue;
      std::poisson_distribution<int> count(spec.scatterers_per_layer_density * (bottom - top));
      const int n = count(rng);
      const auto& curve = spec.layer_boundaries[j];
      for (int s = 0; s < n; ++s) {
        const double c = top + (bottom - top) * unit(rng);
        const double amp = curve.reflectivity * curve.scatter_strength * unit(rng) * std::exp(-spec.axial_decay_rate * c);
        line.push_back({c, amp, 2.0 * std::numbers::pi * unit(rng)});
      }
    }
  }
  return scene;
}

SpectralVolume generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  SpectralVolume vol;
  vol.n_bscans = spec.n_bscans;
  vol.n_alines = spec.n_alines;
  vol.n_samples = spec.n_samples;
  vol.data.assign(spec.n_bscans * spec.n_alines * spec.n_samples, 0.0);
  for (std::size_t b = 0; b < spec.n_bscans; ++b) {
    Rng rng(derive_seed(spec.rng_seed, b));
    const auto scene = layered_scene(spec, b, rng);
    for (std::size_t a = 0; a < spec.n_alines; ++a) {
      const auto fringe =
          fringe_for_aline(scene[a], spec.n_samples, spec.envelope_sigma, spec.dc_level, spec.noise_sigma, rng);
      std::copy(fringe.begin(), fringe.end(), vol.aline(b, a).begin());
    }
  }

  // Noise floor: reflector-free, DC-free lines carrying only detector noise,
  // pushed through the full-spectrum chain.
  Rng cal_rng(derive_seed(spec.rng_seed, kCalibrationStream));
  const auto window = dsp::hann_window(spec.n_samples);
  std::vector<double> levels;
  levels.reserve(kCalibrationLines * spec.n_samples / 2);
  for (std::size_t i = 0; i < kCalibrationLines; ++i) {
    auto noise = fringe_for_aline({}, spec.n_samples, spec.envelope_sigma, 0.0, spec.noise_sigma, cal_rng);
    for (std::size_t n = 0; n < noise.size(); ++n) noise[n] *= window[n];
    auto spectrum = dsp::dft(dsp::to_complex(noise));
    spectrum.resize(spec.n_samples / 2);
    const auto db = dsp::magnitude_db(spectrum);
    levels.insert(levels.end(), db.begin(), db.end());
  }
  vol.noise_floor_db = stats::percentile(levels, kCalibrationPercentile);

  nlohmann::json spec_json = spec;
  vol.meta["generator"] = "layered-phantom";
  vol.meta["spec"] = spec_json.dump();
  return vol;
}

}  // namespace octrecon::phantom
