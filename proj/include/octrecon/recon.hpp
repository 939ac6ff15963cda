#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "octrecon/dsp.hpp"
#include "octrecon/image.hpp"
#include "octrecon/phantom.hpp"

namespace octrecon::recon {

enum class PrepMethod { none, zero_interp, zero_pad, nearest, linear, cubic };

std::string_view to_string(PrepMethod m);
PrepMethod parse_prep_method(std::string_view name);

enum class ImageKind { ground_truth, undersampled_input, prediction };

std::string_view to_string(ImageKind k);
ImageKind parse_image_kind(std::string_view name);

/// One reconstructed B-scan. Pixel (d, a) lives at index d * n_alines + a.
///
/// `amplitude_db` is what the network sees as target (ground truth) or what
/// gets displayed (undersampled input). Background subtraction moves the
/// subtracted mean A-scan into `background_db`, so that
/// amplitude_db(d, a) + background_db[d] is always the absolute
/// reconstruction level; noise floors are expressed on that absolute scale.
/// For `prediction` images `amplitude_db` holds the standardized network
/// output and `complex_data` is empty.
struct BScanImage {
  std::size_t n_depth = 0;
  std::size_t n_alines = 0;
  std::vector<dsp::Complex> complex_data;
  Image amplitude_db;
  std::vector<double> background_db;
  ImageKind kind = ImageKind::ground_truth;
  int undersample_factor = 1;
  PrepMethod prep_method = PrepMethod::none;
  double noise_floor_db = 0.0;
  std::string source;  // originating volume
  std::size_t bscan_index = 0;

  dsp::Complex at(std::size_t depth, std::size_t line) const { return complex_data[depth * n_alines + line]; }
  Image absolute_db() const;
};

struct DownsamplePlan {
  int factor = 2;
  std::vector<std::size_t> kept_indices;
  std::size_t original_length = 0;
};

/// Hann window, DFT, conjugate discard, dB. Returns the kept complex bins and their dB amplitude.
std::pair<dsp::ComplexVector, dsp::RealVector> reconstruct_aline_full(std::span<const double> fringe);

/// Subtracts the volume-wide mean dB A-scan from every A-line.
std::vector<BScanImage> background_subtract(std::vector<BScanImage> images);

/// Keeps indices {0, f, 2f, ...} below original_length.
DownsamplePlan make_downsample_plan(std::size_t original_length, int factor);

std::vector<double> decimate(std::span<const double> fringe, const DownsamplePlan& plan);

/// Rebuilds a full-length spectrum from the kept samples.
std::vector<double> reinterpolate(std::span<const double> kept_values, const DownsamplePlan& plan, PrepMethod method);

/// Decimate, re-interpolate, remove the scalar mean, DFT, conjugate discard. No window.
dsp::ComplexVector reconstruct_aline_undersampled(std::span<const double> fringe, const DownsamplePlan& plan,
                                                  PrepMethod method);

/// factor 1: ground-truth chain with background subtraction (method must be none).
/// factor 2 or 3: undersampled chain with the given method.
std::vector<BScanImage> reconstruct_volume(const phantom::SpectralVolume& volume, int factor, PrepMethod method);

}  // namespace octrecon::recon
