#include "octrecon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "octrecon/dsp.hpp"
#include "octrecon/errors.hpp"
#include "octrecon/stats.hpp"

namespace octrecon::metrics {

std::pair<Image, Image> prepare_for_metrics(const Image& output_db, const Image& target_db, double noise_floor_db) {
  require_same_shape(output_db, target_db, "prepare_for_metrics");
  Image out = output_db;
  Image tgt = target_db;
  for (auto& v : out.data) v = std::max(v, noise_floor_db);
  for (auto& v : tgt.data) v = std::max(v, noise_floor_db);
  const auto [lo_it, hi_it] = std::minmax_element(tgt.data.begin(), tgt.data.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw DegenerateError("prepare_for_metrics: target has no dynamic range above the noise floor");
  const double scale = 1.0 / (hi - lo);
  for (auto& v : out.data) v = std::clamp((v - lo) * scale, 0.0, 1.0);
  for (auto& v : tgt.data) v = std::clamp((v - lo) * scale, 0.0, 1.0);
  return {std::move(out), std::move(tgt)};
}

double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  if (a.size() == 0) throw InvalidArgument("mse: empty image");
  std::vector<double> sq(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) sq[i] = (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  return stats::pairwise_sum(sq) / static_cast<double>(a.size());
}

double psnr_from_mse(double mse_value, double max_i) {
  if (mse_value < 0.0 || !(max_i > 0.0)) throw InvalidArgument("psnr: need mse >= 0 and max_i > 0");
  if (mse_value == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_i * max_i / mse_value);
}

double psnr(const Image& a, const Image& b, double max_i) { return psnr_from_mse(mse(a, b), max_i); }

double ssim(const Image& a, const Image& b, const SsimParams& params) {
  require_same_shape(a, b, "ssim");
  if (a.size() < 2) throw InvalidArgument("ssim: need at least 2 pixels");
  const double n = static_cast<double>(a.size());
  const double mu_a = stats::pairwise_sum(a.data) / n;
  const double mu_b = stats::pairwise_sum(b.data) / n;
  std::vector<double> va(a.size()), vb(a.size()), cov(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a.data[i] - mu_a;
    const double db = b.data[i] - mu_b;
    va[i] = da * da;
    vb[i] = db * db;
    cov[i] = da * db;
  }
  const double var_a = stats::pairwise_sum(va) / n;
  const double var_b = stats::pairwise_sum(vb) / n;
  const double cov_ab = stats::pairwise_sum(cov) / n;
  return ((2.0 * mu_a * mu_b + params.c1) * (2.0 * cov_ab + params.c2)) /
         ((mu_a * mu_a + mu_b * mu_b + params.c1) * (var_a + var_b + params.c2));
}

std::vector<double> spectrum_profile(const Image& image_db, std::size_t start, std::size_t end) {
  if (!(start < end) || end > image_db.cols) {
    throw InvalidArgument("spectrum_profile: column range [" + std::to_string(start) + ", " + std::to_string(end) +
                          ") invalid for " + std::to_string(image_db.cols) + " columns");
  }
  const std::size_t depth = image_db.rows;
  std::vector<double> sum(depth, 0.0);
  dsp::ComplexVector column(depth);
  for (std::size_t c = start; c < end; ++c) {
    for (std::size_t d = 0; d < depth; ++d) column[d] = dsp::Complex(image_db(d, c), 0.0);
    const auto spectrum = dsp::dft(column);
    for (std::size_t k = 0; k < depth; ++k) {
      sum[k] += std::log10(std::max(std::abs(spectrum[k]), dsp::kAmplitudeFloor));
    }
  }
  const double count = static_cast<double>(end - start);
  for (auto& v : sum) v /= count;
  return sum;
}

MetricsReport evaluate_pairs(const std::vector<EvalPair>& pairs, const std::string& label) {
  if (pairs.empty()) throw InvalidArgument("evaluate_pairs: no image pairs");
  MetricsReport report;
  report.method_label = label;
  std::vector<double> finite_psnr;
  std::vector<double> ssims;
  for (const auto& p : pairs) {
    const auto [out, tgt] = prepare_for_metrics(p.output_db, p.target_db, p.noise_floor_db);
    ImageScore score{p.id, psnr(out, tgt), ssim(out, tgt)};
    if (std::isfinite(score.psnr)) {
      finite_psnr.push_back(score.psnr);
    } else {
      ++report.infinite_psnr_count;
    }
    ssims.push_back(score.ssim);
    report.per_image.push_back(std::move(score));
  }
  if (!finite_psnr.empty()) {
    report.psnr_mean = stats::mean(finite_psnr);
    report.psnr_std = stats::population_std(finite_psnr);
  } else {
    report.psnr_mean = std::numeric_limits<double>::infinity();
  }
  report.ssim_mean = stats::mean(ssims);
  report.ssim_std = stats::population_std(ssims);
  return report;
}

void to_json(nlohmann::json& j, const MetricsReport& report) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& s : report.per_image) {
    // JSON has no infinity; identical images are written as null.
    nlohmann::json psnr_value = std::isfinite(s.psnr) ? nlohmann::json(s.psnr) : nlohmann::json(nullptr);
    images.push_back({{"id", s.id}, {"psnr", psnr_value}, {"ssim", s.ssim}});
  }
  j = nlohmann::json{{"label", report.method_label},
                     {"psnr_mean", report.psnr_mean},
                     {"psnr_std", report.psnr_std},
                     {"ssim_mean", report.ssim_mean},
                     {"ssim_std", report.ssim_std},
                     {"infinite_psnr_count", report.infinite_psnr_count},
                     {"per_image", images}};
}

void from_json(const nlohmann::json& j, MetricsReport& report) {
  report.method_label = j.at("label").get<std::string>();
  report.psnr_mean = j.at("psnr_mean").get<double>();
  report.psnr_std = j.at("psnr_std").get<double>();
  report.ssim_mean = j.at("ssim_mean").get<double>();
  report.ssim_std = j.at("ssim_std").get<double>();
  report.infinite_psnr_count = j.value("infinite_psnr_count", std::size_t{0});
  report.per_image.clear();
  for (const auto& s : j.value("per_image", nlohmann::json::array())) {
    const auto& p = s.at("psnr");
    report.per_image.push_back({s.at("id").get<std::string>(),
                                p.is_null() ? std::numeric_limits<double>::infinity() : p.get<double>(),
                                s.at("ssim").get<double>()});
  }
}

std::string reports_to_csv(const std::vector<MetricsReport>& reports) {
  std::ostringstream os;
  os << "label,psnr_mean,psnr_std,ssim_mean,ssim_std\n";
  os << std::setprecision(6) << std::fixed;
  for (const auto& r : reports) {
    os << r.method_label << ',' << r.psnr_mean << ',' << r.psnr_std << ',' << r.ssim_mean << ',' << r.ssim_std
       << '\n';
  }
  return os.str();
}

}  // namespace octrecon::metrics
