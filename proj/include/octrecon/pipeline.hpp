#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "octrecon/metrics.hpp"
#include "octrecon/recon.hpp"
#include "octrecon/unet.hpp"

// Glue between reconstructed B-scans, the network and the metrics.
namespace octrecon::pipeline {

/// Standardizes the real and imaginary parts of an undersampled B-scan and
/// zero-pads both image axes up to a multiple of `multiple`. Returns a
/// [1, 2, H', W'] tensor.
unet::Tensor network_input(const recon::BScanImage& input, std::size_t multiple,
                           std::array<unet::ChannelNorm, 2>* norms = nullptr);

/// Runs the network on one undersampled B-scan. The result is a `prediction`
/// image whose amplitude holds the standardized network output, cropped back
/// to the input size.
recon::BScanImage predict(const unet::UNetModel& model, const recon::BScanImage& input);

/// Output image on the absolute dB scale, ready to compare against
/// `gt.absolute_db()`. Undersampled inputs use the magnitude of their complex
/// data; predictions are de-standardized with the ground truth's amplitude
/// statistics and get its background A-scan added back.
Image absolute_output(const recon::BScanImage& candidate, const recon::BScanImage& gt);

metrics::EvalPair make_eval_pair(const recon::BScanImage& candidate, const recon::BScanImage& gt,
                                 std::optional<double> noise_floor_db = std::nullopt);

/// Pairs every image of `candidate_dir` with the same-named ground truth.
/// The noise floor defaults to the ground truth's stored floor.
metrics::MetricsReport evaluate_dirs(const std::filesystem::path& candidate_dir, const std::filesystem::path& gt_dir,
                                     std::optional<double> noise_floor_db, const std::string& label);

/// File name used for B-scan `index` of a volume with stem `stem`.
std::string image_filename(const std::string& stem, std::size_t index);

}  // namespace octrecon::pipeline
