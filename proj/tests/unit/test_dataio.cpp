#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "octrecon/dataio.hpp"
#include "octrecon/errors.hpp"
#include "octrecon/pipeline.hpp"

using namespace octrecon;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "octrecon_dataio_tests";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) { std::ofstream(p, std::ios::binary | std::ios::trunc) << bytes; }

phantom::SpectralVolume random_volume(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  phantom::SpectralVolume v;
  v.n_bscans = 2;
  v.n_alines = 3;
  v.n_samples = 8;
  v.noise_floor_db = -12.5;
  v.data.resize(48);
  for (auto& x : v.data) x = g(rng);
  return v;
}

phantom::PhantomSpec tiny_spec() {
  phantom::PhantomSpec spec;
  spec.n_bscans = 2;
  spec.n_alines = 24;
  spec.n_samples = 32;
  spec.layer_boundaries = {{8.0, 1.0, 1.0, 0.4}};
  spec.scatterers_per_layer_density = 0.5;
  spec.noise_sigma = 0.01;
  spec.rng_seed = 3;
  return spec;
}

}  // namespace

TEST(VolumeFile, RoundTripFloat64IsExact) {
  std::mt19937_64 rng(1);
  const auto v = random_volume(rng);
  const auto path = scratch("vol_stem.octv");
  dataio::write_volume(v, path);
  const auto back = dataio::read_volume(path);
  EXPECT_EQ(back.data, v.data);
  EXPECT_EQ(back.noise_floor_db, v.noise_floor_db);
  EXPECT_EQ(back.n_samples, 8u);
  EXPECT_EQ(back.meta.at("source"), "vol_stem");
  const auto again = scratch("vol_again.octv");
  dataio::write_volume(back, again);
  EXPECT_EQ(slurp(path), slurp(again));
  EXPECT_EQ(slurp(path).size(), 5u + 16u + 8u + 48u * 8u);
}

TEST(VolumeFile, Float32StoresRoundedSamples) {
  std::mt19937_64 rng(2);
  const auto v = random_volume(rng);
  const auto path = scratch("vol32.octv");
  dataio::write_volume(v, path, dataio::VolumeDtype::float32);
  const auto back = dataio::read_volume(path);
  for (std::size_t i = 0; i < v.data.size(); ++i) EXPECT_EQ(back.data[i], static_cast<double>(static_cast<float>(v.data[i])));
}

TEST(VolumeFile, CorruptionIsAFormatError) {
  std::mt19937_64 rng(3);
  const auto path = scratch("good.octv");
  dataio::write_volume(random_volume(rng), path);
  const auto bytes = slurp(path);
  const auto bad = scratch("bad.octv");

  spit(bad, "OCTV2" + bytes.substr(5));
  EXPECT_THROW(dataio::read_volume(bad), FormatError);
  spit(bad, bytes.substr(0, bytes.size() - 1));
  try {
    dataio::read_volume(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
  spit(bad, bytes + "x");
  EXPECT_THROW(dataio::read_volume(bad), FormatError);
  std::string dtype = bytes;
  dtype[17] = 7;
  spit(bad, dtype);
  EXPECT_THROW(dataio::read_volume(bad), FormatError);
  spit(bad, bytes.substr(0, 10));
  EXPECT_THROW(dataio::read_volume(bad), FormatError);
}

TEST(ImageFile, RoundTripKeepsEverything) {
  const auto vol = phantom::generate_phantom(tiny_spec());
  auto gts = recon::reconstruct_volume(vol, 1, recon::PrepMethod::none);
  gts[1].source = "v";
  const auto path = scratch("img.octi");
  dataio::write_image(gts[1], path);
  const auto back = dataio::read_image(path);
  EXPECT_EQ(back.amplitude_db.data, gts[1].amplitude_db.data);
  EXPECT_EQ(back.complex_data, gts[1].complex_data);
  EXPECT_EQ(back.background_db, gts[1].background_db);
  EXPECT_EQ(back.kind, recon::ImageKind::ground_truth);
  EXPECT_EQ(back.bscan_index, 1u);
  EXPECT_EQ(back.source, "v");
  EXPECT_EQ(back.noise_floor_db, vol.noise_floor_db);

  auto bytes = slurp(path);
  spit(scratch("cut.octi"), bytes.substr(0, bytes.size() - 8));
  EXPECT_THROW(dataio::read_image(scratch("cut.octi")), FormatError);
  bytes[9] = '}';
  spit(scratch("cut.octi"), bytes);
  EXPECT_THROW(dataio::read_image(scratch("cut.octi")), FormatError);
}

TEST(Pgm, QuantizesAndRoundTrips) {
  Image img(3, 4);
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = -20.0 + 5.0 * static_cast<double>(i);
  const auto path = scratch("img.pgm");
  dataio::export_image(img, path, dataio::ExportFormat::pgm16);
  const auto bytes = slurp(path);
  EXPECT_EQ(bytes.substr(0, 13), "P5\n4 3\n65535\n");
  EXPECT_EQ(bytes.size(), 13u + 24u);
  const auto back = dataio::read_pgm(path);
  ASSERT_EQ(back.rows, 3u);
  ASSERT_EQ(back.cols, 4u);
  const auto q = dataio::quantize16(img);
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_EQ(back.data[i], q[i]);
    // dequantized value within half a level of the original
    EXPECT_NEAR(-20.0 + back.data[i] * 55.0 / 65535.0, img.data[i], 0.5 * 55.0 / 65535.0 + 1e-12);
  }
  EXPECT_EQ(q.front(), 0);
  EXPECT_EQ(q.back(), 65535);
  dataio::export_image(back, scratch("img2.pgm"), dataio::ExportFormat::pgm16);
  EXPECT_EQ(slurp(scratch("img2.pgm")), bytes);

  spit(scratch("trunc.pgm"), bytes.substr(0, bytes.size() - 1));
  EXPECT_THROW(dataio::read_pgm(scratch("trunc.pgm")), FormatError);
  spit(scratch("trunc.pgm"), "P2\n4 3\n255\n");
  EXPECT_THROW(dataio::read_pgm(scratch("trunc.pgm")), FormatError);
}

TEST(Pgm, ConstantImageMapsToZero) {
  for (auto v : dataio::quantize16(Image(2, 2, 7.0))) EXPECT_EQ(v, 0);
}

TEST(Png, WritesSignature) {
  Image img(4, 5);
  for (std::size_t i = 0; i < img.size(); ++i) img.data[i] = static_cast<double>(i);
  const auto path = scratch("img.png");
  dataio::export_image(img, path, dataio::ExportFormat::png);
  EXPECT_EQ(slurp(path).substr(0, 8), "\x89PNG\r\n\x1a\n");
}

TEST(Patches, WindowsBlanksAndNormalization) {
  const auto vol = phantom::generate_phantom(tiny_spec());
  const auto gts = recon::reconstruct_volume(vol, 1, recon::PrepMethod::none);
  const auto ins = recon::reconstruct_volume(vol, 2, recon::PrepMethod::zero_interp);
  const auto pairs = dataio::extract_patches(gts[0], ins[0], 16, 4);
  ASSERT_EQ(pairs.size(), 3u);  // floor((24 - 16) / 4) + 1
  EXPECT_EQ(pairs[2].column_offset, 8u);
  EXPECT_EQ(pairs[2].target_db(3, 5), gts[0].amplitude_db(3, 13));
  EXPECT_EQ(pairs[2].input_imag(3, 5), ins[0].at(3, 13).imag());
  EXPECT_THROW(dataio::extract_patches(gts[0], ins[0], 32, 4), InvalidArgument);

  const auto all_blank = dataio::remove_blanks(pairs, 1e9);
  EXPECT_EQ(all_blank.removed, 3u);
  EXPECT_TRUE(all_blank.kept.empty());
  const auto none_blank = dataio::remove_blanks(pairs, -1e9);
  EXPECT_EQ(none_blank.kept.size(), 3u);

  const auto s = dataio::normalize_pair(pairs[0]);
  EXPECT_EQ(s.input.shape, (nn::Shape{2, 16, 16}));
  double m = 0.0, v = 0.0;
  for (std::size_t i = 0; i < 256; ++i) m += s.target[i];
  m /= 256.0;
  for (std::size_t i = 0; i < 256; ++i) v += (s.target[i] - m) * (s.target[i] - m);
  EXPECT_NEAR(m, 0.0, 1e-5);
  EXPECT_NEAR(v / 256.0, 1.0, 1e-4);
  const auto restored = dataio::destandardize(dataio::standardize(pairs[0].target_db, "t").values, s.norm_meta[2]);
  for (std::size_t i = 0; i < 256; ++i) EXPECT_NEAR(restored.data[i], pairs[0].target_db.data[i], 1e-9);
  EXPECT_THROW(dataio::standardize(Image(4, 4, 1.0), "flat"), DegenerateError);
}

TEST(Manifest, BuildWriteReadLoad) {
  const auto vol = phantom::generate_phantom(tiny_spec());
  const auto gt_dir = scratch("m_gt");
  const auto in_dir = scratch("m_in");
  fs::remove_all(gt_dir);
  fs::remove_all(in_dir);
  auto gts = recon::reconstruct_volume(vol, 1, recon::PrepMethod::none);
  auto ins = recon::reconstruct_volume(vol, 2, recon::PrepMethod::zero_pad);
  for (std::size_t b = 0; b < gts.size(); ++b) {
    gts[b].source = ins[b].source = "vol";
    dataio::write_image(gts[b], gt_dir / pipeline::image_filename("vol", b));
    dataio::write_image(ins[b], in_dir / pipeline::image_filename("vol", b));
  }
  const auto m = dataio::build_manifest(gt_dir, in_dir, 16, 8, 0.0);
  EXPECT_EQ(m.samples.size(), 4u);
  EXPECT_EQ(m.undersample_factor, 2);
  EXPECT_EQ(m.prep_method, recon::PrepMethod::zero_pad);
  EXPECT_EQ(m.samples[1].column_offset, 8u);
  EXPECT_EQ(m.samples[2].bscan_index, 1u);

  const auto path = scratch("manifest.json");
  dataio::write_manifest(m, path);
  const auto back = dataio::read_manifest(path);
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(m));
  dataio::write_manifest(back, scratch("manifest2.json"));
  EXPECT_EQ(slurp(path), slurp(scratch("manifest2.json")));

  const auto samples = dataio::load_samples(back);
  ASSERT_EQ(samples.size(), 4u);
  const auto direct = dataio::normalize_pair(dataio::extract_patches(gts[1], ins[1], 16, 8)[0]);
  EXPECT_EQ(samples[2].input.data, direct.input.data);
  EXPECT_EQ(samples[2].norm_meta[2].mean, back.samples[2].norm_meta[2].mean);

  spit(scratch("broken.json"), slurp(path).substr(0, 40));
  EXPECT_THROW(dataio::read_manifest(scratch("broken.json")), FormatError);
}
