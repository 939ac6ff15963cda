#pragma once

#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "octrecon/image.hpp"

namespace octrecon::metrics {

struct SsimParams {
  double c1 = 0.01 * 0.01;
  double c2 = 0.03 * 0.03;
};

/// Clamp both dB images from below at `noise_floor_db`, then map both with
/// the affine transform taking the clamped target's [min, max] onto [0, 1];
/// values outside [0, 1] are clipped. Throws DegenerateError when the
/// clamped target is constant.
std::pair<Image, Image> prepare_for_metrics(const Image& output_db, const Image& target_db, double noise_floor_db);

double mse(const Image& a, const Image& b);

/// 10 log10(max_i^2 / mse); +infinity for mse == 0.
double psnr_from_mse(double mse_value, double max_i = 1.0);

/// psnr_from_mse(mse(a, b)); +infinity when the images are identical.
double psnr(const Image& a, const Image& b, double max_i = 1.0);

/// Global (single-window) SSIM with 1/N moments.
double ssim(const Image& a, const Image& b, const SsimParams& params = {});

/// Mean over columns [start, end) of log10|DFT along depth| (floored at 1e-12).
std::vector<double> spectrum_profile(const Image& image_db, std::size_t start, std::size_t end);

struct ImageScore {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct MetricsReport {
  std::string method_label;
  double psnr_mean = 0.0;
  double psnr_std = 0.0;
  double ssim_mean = 0.0;
  double ssim_std = 0.0;
  std::size_t infinite_psnr_count = 0;
  std::vector<ImageScore> per_image;
};

struct EvalPair {
  std::string id;
  Image output_db;
  Image target_db;
  double noise_floor_db = 0.0;
};

/// Per-image scores plus means and population standard deviations. Infinite
/// PSNR values are left out of the PSNR statistics and counted instead.
MetricsReport evaluate_pairs(const std::vector<EvalPair>& pairs, const std::string& label);

void to_json(nlohmann::json& j, const MetricsReport& report);
void from_json(const nlohmann::json& j, MetricsReport& report);

/// Header line plus one row per report: label,psnr_mean,psnr_std,ssim_mean,ssim_std.
std::string reports_to_csv(const std::vector<MetricsReport>& reports);

}  // namespace octrecon::metrics
