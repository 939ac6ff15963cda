#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace octrecon::phantom {

using Rng = std::mt19937_64;

/// One point reflector along an A-line. `cycles` is the fringe frequency in
/// cycles per full sweep, which equals the depth bin after a full-length DFT.
struct Reflector {
  double cycles = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;
};

/// A tissue boundary. Lateral shape is base depth plus a random sum of
/// low-frequency sinusoids whose peak excursion is `undulation` cycles.
/// Scatterers below this boundary (until the next one) draw amplitudes up to
/// `scatter_strength * reflectivity`.
struct BoundaryCurve {
  double depth = 0.0;
  double undulation = 0.0;
  double reflectivity = 1.0;
  double scatter_strength = 0.3;
};

struct PhantomSpec {
  std::size_t n_bscans = 1;
  std::size_t n_alines = 64;
  std::size_t n_samples = 1280;
  std::vector<BoundaryCurve> layer_boundaries;
  double scatterers_per_layer_density = 0.0;  // expected scatterers per depth bin per A-line
  double axial_decay_rate = 0.0;              // amplitude *= exp(-rate * cycles)
  double envelope_sigma = 1e30;               // Gaussian source envelope width, samples
  double dc_level = 0.0;
  double noise_sigma = 0.0;
  std::uint64_t rng_seed = 0;

  /// Throws InvalidArgument on any violated invariant.
  void validate() const;
};

void to_json(nlohmann::json& j, const PhantomSpec& spec);
void from_json(const nlohmann::json& j, PhantomSpec& spec);
PhantomSpec load_spec(const std::string& path);

/// Raw interferograms, row-major [bscan][aline][sample].
struct SpectralVolume {
  std::size_t n_bscans = 0;
  std::size_t n_alines = 0;
  std::size_t n_samples = 0;
  std::vector<double> data;
  double noise_floor_db = 0.0;
  std::map<std::string, std::string> meta;

  std::span<const double> aline(std::size_t bscan, std::size_t line) const;
  std::span<double> aline(std::size_t bscan, std::size_t line);
};

/// x[n] = E[n] * (dc + sum_j a_j cos(2 pi c_j n / N + phi_j)) + N(0, noise_sigma^2),
/// E a Gaussian envelope centred mid-sweep. An infinite sigma gives a flat envelope.
std::vector<double> fringe_for_aline(std::span<const Reflector> reflectors, std::size_t n_samples,
                                     double envelope_sigma, double dc_level, double noise_sigma, Rng& rng);

/// Per-A-line reflector lists for one B-scan: boundary reflectors first
/// (shallow to deep), then intra-layer scatterers.
std::vector<std::vector<Reflector>> layered_scene(const PhantomSpec& spec, std::size_t bscan_index, Rng& rng);

/// Lateral boundary depths for one B-scan, indexed [boundary][aline].
std::vector<std::vector<double>> boundary_depths(const PhantomSpec& spec, Rng& rng);

SpectralVolume generate_phantom(const PhantomSpec& spec);

/// Independent stream seed for a sub-task of a seeded job.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace octrecon::phantom
