#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <nlohmann/json.hpp>

#include "octrecon/dsp.hpp"
#include "octrecon/errors.hpp"
#include "octrecon/phantom.hpp"
#include "octrecon/recon.hpp"

using namespace octrecon;
using phantom::PhantomSpec;

namespace {

PhantomSpec small_spec() {
  PhantomSpec spec;
  spec.n_bscans = 3;
  spec.n_alines = 16;
  spec.n_samples = 256;
  spec.layer_boundaries = {{40.0, 6.0, 1.0, 0.3}, {70.0, 4.0, 0.5, 0.4}};
  spec.scatterers_per_layer_density = 0.2;
  spec.axial_decay_rate = 0.01;
  spec.envelope_sigma = 1e30;
  spec.noise_sigma = 0.01;
  spec.rng_seed = 77;
  return spec;
}

}  // namespace

TEST(Fringe, SingleReflectorIsACosine) {
  phantom::Rng rng(1);
  const std::vector<phantom::Reflector> r{{12.0, 0.5, 0.25}};
  const auto x = phantom::fringe_for_aline(r, 64, 1e30, 0.2, 0.0, rng);
  for (std::size_t n = 0; n < 64; ++n) {
    EXPECT_NEAR(x[n], 0.2 + 0.5 * std::cos(2.0 * std::numbers::pi * 12.0 * n / 64.0 + 0.25), 1e-12);
  }
}

TEST(Fringe, RejectsReflectorsPastNyquist) {
  phantom::Rng rng(1);
  const std::vector<phantom::Reflector> r{{32.0, 1.0, 0.0}};
  EXPECT_THROW(phantom::fringe_for_aline(r, 64, 1e30, 0.0, 0.0, rng), InvalidArgument);
}

TEST(Fringe, EnvelopePeaksMidSweep) {
  phantom::Rng rng(1);
  const auto x = phantom::fringe_for_aline({}, 65, 10.0, 1.0, 0.0, rng);
  EXPECT_NEAR(x[32], 1.0, 1e-12);
  EXPECT_LT(x[0], x[16]);
  EXPECT_NEAR(x[10], x[54], 1e-12);
}

TEST(Phantom, SameSeedSameVolume) {
  const auto a = phantom::generate_phantom(small_spec());
  const auto b = phantom::generate_phantom(small_spec());
  EXPECT_EQ(a.data, b.data);
  EXPECT_EQ(a.noise_floor_db, b.noise_floor_db);
  auto other = small_spec();
  other.rng_seed = 78;
  EXPECT_NE(phantom::generate_phantom(other).data, a.data);
}

TEST(Phantom, BoundariesStayOrderedAndInRange) {
  auto spec = small_spec();
  spec.layer_boundaries = {{40.0, 30.0, 1.0, 0.3}, {41.0, 30.0, 1.0, 0.3}, {126.0, 30.0, 1.0, 0.3}};
  phantom::Rng rng(3);
  const auto depths = phantom::boundary_depths(spec, rng);
  ASSERT_EQ(depths.size(), 3u);
  for (std::size_t a = 0; a < spec.n_alines; ++a) {
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_GE(depths[j][a], 0.0);
      EXPECT_LE(depths[j][a], 127.0);
      if (j > 0) EXPECT_GE(depths[j][a], depths[j - 1][a]);
    }
  }
}

TEST(Phantom, NoiseFreeBoundariesPeakWithinOneBin) {
  auto spec = small_spec();
  spec.noise_sigma = 0.0;
  spec.scatterers_per_layer_density = 0.0;
  spec.layer_boundaries = {{60.0, 5.0, 1.0, 0.0}};
  const auto vol = phantom::generate_phantom(spec);
  for (std::size_t b = 0; b < spec.n_bscans; ++b) {
    phantom::Rng rng(phantom::derive_seed(spec.rng_seed, b));
    const auto depths = phantom::boundary_depths(spec, rng);
    for (std::size_t a = 0; a < spec.n_alines; ++a) {
      const auto [bins, db] = recon::reconstruct_aline_full(vol.aline(b, a));
      std::size_t best = 1;
      for (std::size_t k = 1; k < db.size(); ++k) {
        if (db[k] > db[best]) best = k;
      }
      EXPECT_LE(std::abs(static_cast<double>(best) - depths[0][a]), 1.0);
    }
  }
}

TEST(Phantom, NoiseFloorTracksNoiseLevel) {
  auto quiet = small_spec();
  auto loud = small_spec();
  loud.noise_sigma = 0.1;
  const double q = phantom::generate_phantom(quiet).noise_floor_db;
  const double l = phantom::generate_phantom(loud).noise_floor_db;
  EXPECT_NEAR(l - q, 20.0, 1.5);
}

TEST(Phantom, SpecValidation) {
  auto spec = small_spec();
  spec.layer_boundaries.push_back({10.0, 0.0, 1.0, 0.3});  // out of order
  EXPECT_THROW(spec.validate(), InvalidArgument);
  spec = small_spec();
  spec.n_samples = 255;
  EXPECT_THROW(spec.validate(), InvalidArgument);
  spec = small_spec();
  spec.layer_boundaries[0].scatter_strength = 1.5;
  EXPECT_THROW(spec.validate(), InvalidArgument);
  spec = small_spec();
  spec.layer_boundaries[0].depth = 128.0;
  EXPECT_THROW(spec.validate(), InvalidArgument);
}

TEST(Phantom, SpecJsonRoundTrip) {
  const auto spec = small_spec();
  const nlohmann::json j = spec;
  const auto back = j.get<PhantomSpec>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(back.layer_boundaries.size(), 2u);
  EXPECT_EQ(back.rng_seed, 77u);
}

TEST(Phantom, DeriveSeedSeparatesStreams) {
  EXPECT_NE(phantom::derive_seed(1, 0), phantom::derive_seed(1, 1));
  EXPECT_NE(phantom::derive_seed(1, 0), phantom::derive_seed(2, 0));
  EXPECT_EQ(phantom::derive_seed(5, 9), phantom::derive_seed(5, 9));
}
