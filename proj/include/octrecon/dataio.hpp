#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "octrecon/image.hpp"
#include "octrecon/phantom.hpp"
#include "octrecon/recon.hpp"
#include "octrecon/unet.hpp"

namespace octrecon::dataio {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Spectral volumes (.octv)
//
//   "OCTV1"
//   uint32 LE n_bscans, n_alines, n_samples
//   uint32 LE dtype (0 = float32, 1 = float64)
//   float64 LE noise_floor_db
//   payload, row-major [bscan][aline][sample], little-endian
// ---------------------------------------------------------------------------

enum class VolumeDtype : std::uint32_t { float32 = 0, float64 = 1 };

void write_volume(const phantom::SpectralVolume& volume, const fs::path& path,
                  VolumeDtype dtype = VolumeDtype::float64);

/// Validates magic and payload length; sets meta["source"] to the file stem.
phantom::SpectralVolume read_volume(const fs::path& path);

// ---------------------------------------------------------------------------
// Reconstructed B-scans (.octi)
//
//   "OCTI1", uint32 LE header length, JSON header (kind, factor, method,
//   dimensions, noise floor, background A-scan, source, bscan), then float64
//   LE amplitude [depth][aline] followed, when present, by interleaved
//   (re, im) float64 LE complex data.
// ---------------------------------------------------------------------------

void write_image(const recon::BScanImage& image, const fs::path& path);
recon::BScanImage read_image(const fs::path& path);

/// Sorted *.octi files of a directory.
std::vector<fs::path> list_images(const fs::path& dir);

// ---------------------------------------------------------------------------
// Display export
// ---------------------------------------------------------------------------

enum class ExportFormat { pgm16, png };

/// Linear min-max mapping to 16-bit gray; a constant image maps to 0.
std::vector<std::uint16_t> quantize16(const Image& image);

/// PGM: "P5\n<w> <h>\n65535\n" then big-endian samples, row-major.
void export_image(const Image& image, const fs::path& path, ExportFormat format);

/// Reads a binary 8- or 16-bit PGM; values are returned as raw sample levels.
Image read_pgm(const fs::path& path);

// ---------------------------------------------------------------------------
// Dataset construction
// ---------------------------------------------------------------------------

/// Aligned ground-truth / input windows before standardization.
struct RawPair {
  std::string source;
  std::size_t bscan_index = 0;
  std::size_t column_offset = 0;
  Image target_db;                   // background-subtracted ground truth
  std::vector<double> background_db; // per patch row
  Image input_real;
  Image input_imag;
};

/// Lateral sliding windows of width patch_size; the depth window is the full
/// depth when it equals patch_size and the top patch_size rows otherwise.
/// Trailing columns that do not fill a window are dropped.
std::vector<RawPair> extract_patches(const recon::BScanImage& gt, const recon::BScanImage& input,
                                     std::size_t patch_size, std::size_t stride);

struct BlankFilterResult {
  std::vector<RawPair> kept;
  std::size_t removed = 0;
};

/// A pair is blank when fewer than min_fraction of its ground-truth pixels
/// exceed noise_floor_db on the absolute reconstruction scale.
BlankFilterResult remove_blanks(std::vector<RawPair> pairs, double noise_floor_db, double min_fraction = 0.01);

struct Standardized {
  Image values;
  unet::ChannelNorm norm;
};

/// Zero mean, unit (population) variance. Throws DegenerateError on a constant image.
Standardized standardize(const Image& image, const std::string& what);
Image destandardize(const Image& values, const unet::ChannelNorm& norm);

/// Independent per-channel standardization of input real, input imaginary and target.
unet::TrainSample normalize_pair(const RawPair& pair);

struct ManifestSample {
  std::string gt_path;
  std::string input_path;
  std::string source;
  std::size_t bscan_index = 0;
  std::size_t column_offset = 0;
  std::array<unet::ChannelNorm, 3> norm_meta{};
};

struct DatasetManifest {
  std::size_t patch_size = 0;
  std::size_t stride = 0;
  double min_fraction = 0.01;
  int undersample_factor = 2;
  recon::PrepMethod prep_method = recon::PrepMethod::zero_interp;
  std::size_t removed_blanks = 0;
  std::vector<ManifestSample> samples;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);
void write_manifest(const DatasetManifest& manifest, const fs::path& path);
DatasetManifest read_manifest(const fs::path& path);

/// Pairs every ground-truth image with the same-named input image, extracts
/// patches, drops blanks, standardizes, and lists samples in canonical
/// (source, bscan, offset) order. Pairs with a constant channel are skipped.
DatasetManifest build_manifest(const fs::path& gt_dir, const fs::path& input_dir, std::size_t patch_size,
                               std::size_t stride, double min_fraction);

/// Re-extracts and standardizes every manifest sample.
std::vector<unet::TrainSample> load_samples(const DatasetManifest& manifest);

}  // namespace octrecon::dataio
