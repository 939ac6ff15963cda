#include "octrecon/recon.hpp"

#include <algorithm>
#include <cmath>

#include "octrecon/errors.hpp"
#include "octrecon/stats.hpp"

namespace octrecon::recon {
namespace {

// Natural cubic spline through (x[i], y[i]); x strictly increasing.
class NaturalSpline {
 public:
  NaturalSpline(std::span<const double> x, std::span<const double> y) : x_(x.begin(), x.end()), y_(y.begin(), y.end()) {
    const std::size_t n = x_.size();
    second_.assign(n, 0.0);
    if (n < 3) return;
    // Tridiagonal system for interior second derivatives (Thomas algorithm).
    std::vector<double> diag(n, 0.0), upper(n, 0.0), rhs(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = x_[i] - x_[i - 1];
      const double h1 = x_[i + 1] - x_[i];
      diag[i] = 2.0 * (h0 + h1);
      upper[i] = h1;
      rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    }
    for (std::size_t i = 2; i + 1 < n; ++i) {
      const double lower = x_[i] - x_[i - 1];
      const double w = lower / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      second_[i] = (rhs[i] - upper[i] * second_[i + 1]) / diag[i];
    }
  }

  // Valid for x[0] <= t <= x[n-1].
  double operator()(double t) const {
    const auto it = std::upper_bound(x_.begin(), x_.end(), t);
    std::size_t hi = static_cast<std::size_t>(it - x_.begin());
    hi = std::clamp<std::size_t>(hi, 1, x_.size() - 1);
    const std::size_t lo = hi - 1;
    const double h = x_[hi] - x_[lo];
    const double a = (x_[hi] - t) / h;
    const double b = (t - x_[lo]) / h;
    return a * y_[lo] + b * y_[hi] + ((a * a * a - a) * second_[lo] + (b * b * b - b) * second_[hi]) * h * h / 6.0;
  }

 private:
  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> second_;
};

}  // namespace

std::string_view to_string(PrepMethod m) {
  switch (m) {
    case PrepMethod::none: return "none";
    case PrepMethod::zero_interp: return "zero_interp";
    case PrepMethod::zero_pad: return "zero_pad";
    case PrepMethod::nearest: return "nearest";
    case PrepMethod::linear: return "linear";
    case PrepMethod::cubic: return "cubic";
  }
  return "none";
}

PrepMethod parse_prep_method(std::string_view name) {
  for (auto m : {PrepMethod::none, PrepMethod::zero_interp, PrepMethod::zero_pad, PrepMethod::nearest,
                 PrepMethod::linear, PrepMethod::cubic}) {
    if (to_string(m) == name) return m;
  }
  throw InvalidArgument("unknown prep method: " + std::string(name));
}

std::string_view to_string(ImageKind k) {
  switch (k) {
    case ImageKind::ground_truth: return "ground_truth";
    case ImageKind::undersampled_input: return "undersampled_input";
    case ImageKind::prediction: return "prediction";
  }
  return "ground_truth";
}

ImageKind parse_image_kind(std::string_view name) {
  for (auto k : {ImageKind::ground_truth, ImageKind::undersampled_input, ImageKind::prediction}) {
    if (to_string(k) == name) return k;
  }
  throw FormatError("unknown image kind: " + std::string(name));
}

Image BScanImage::absolute_db() const {
  Image out = amplitude_db;
  if (background_db.empty()) return out;
  for (std::size_t d = 0; d < out.rows; ++d) {
    for (std::size_t a = 0; a < out.cols; ++a) out(d, a) += background_db[d];
  }
  return out;
}

std::pair<dsp::ComplexVector, dsp::RealVector> reconstruct_aline_full(std::span<const double> fringe) {
  const std::size_t n = fringe.size();
  if (n < 4 || n % 2 != 0) throw InvalidArgument("reconstruct_aline_full: length must be even and >= 4");
  const auto window = dsp::hann_window(n);
  dsp::ComplexVector x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = dsp::Complex(fringe[i] * window[i], 0.0);
  auto spectrum = dsp::dft(x);
  spectrum.resize(n / 2);
  auto db = dsp::magnitude_db(spectrum);
  return {std::move(spectrum), std::move(db)};
}

std::vector<BScanImage> background_subtract(std::vector<BScanImage> images) {
  if (images.empty()) throw InvalidArgument("background_subtract: empty volume");
  const std::size_t depth = images.front().n_depth;
  std::size_t total_lines = 0;
  for (const auto& img : images) {
    if (img.n_depth != depth) throw ShapeError("background_subtract: images disagree on n_depth");
    total_lines += img.n_alines;
  }
  if (total_lines == 0) throw InvalidArgument("background_subtract: volume has no A-lines");

  std::vector<double> mean_ascan(depth);
  std::vector<double> column(total_lines);
  for (std::size_t d = 0; d < depth; ++d) {
    std::size_t k = 0;
    for (const auto& img : images) {
      for (std::size_t a = 0; a < img.n_alines; ++a) column[k++] = img.amplitude_db(d, a);
    }
    mean_ascan[d] = stats::pairwise_sum(column) / static_cast<double>(total_lines);
  }
  for (auto& img : images) {
    if (img.background_db.size() != depth) img.background_db.assign(depth, 0.0);
    for (std::size_t d = 0; d < depth; ++d) {
      img.background_db[d] += mean_ascan[d];
      for (std::size_t a = 0; a < img.n_alines; ++a) img.amplitude_db(d, a) -= mean_ascan[d];
    }
  }
  return images;
}

DownsamplePlan make_downsample_plan(std::size_t original_length, int factor) {
  if (factor != 2 && factor != 3) throw InvalidArgument("downsample factor must be 2 or 3");
  if (original_length < static_cast<std::size_t>(factor)) {
    throw InvalidArgument("downsample: original_length must be >= factor");
  }
  DownsamplePlan plan;
  plan.factor = factor;
  plan.original_length = original_length;
  for (std::size_t i = 0; i < original_length; i += static_cast<std::size_t>(factor)) plan.kept_indices.push_back(i);
  return plan;
}

std::vector<double> decimate(std::span<const double> fringe, const DownsamplePlan& plan) {
  if (fringe.size() != plan.original_length) throw InvalidArgument("decimate: fringe length does not match plan");
  std::vector<double> kept(plan.kept_indices.size());
  for (std::size_t i = 0; i < kept.size(); ++i) kept[i] = fringe[plan.kept_indices[i]];
  return kept;
}

std::vector<double> reinterpolate(std::span<const double> kept_values, const DownsamplePlan& plan, PrepMethod method) {
  const auto& idx = plan.kept_indices;
  if (kept_values.size() != idx.size()) throw InvalidArgument("reinterpolate: kept_values length does not match plan");
  if (idx.empty()) throw InvalidArgument("reinterpolate: plan keeps no samples");
  const std::size_t n = plan.original_length;
  std::vector<double> out(n, 0.0);

  switch (method) {
    case PrepMethod::zero_interp:
      for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] = kept_values[i];
      return out;
    case PrepMethod::zero_pad:
      std::copy(kept_values.begin(), kept_values.end(), out.begin());
      return out;
    case PrepMethod::none:
      throw InvalidArgument("reinterpolate: method 'none' is only valid for full-spectrum reconstruction");
    default:
      break;
  }

  std::vector<double> xs(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) xs[i] = static_cast<double>(idx[i]);
  const double first = xs.front();
  const double last = xs.back();
  std::size_t seg = 0;  // idx[seg] <= t < idx[seg + 1]
  NaturalSpline spline(xs, kept_values);

  for (std::size_t t = 0; t < n; ++t) {
    const double tt = static_cast<double>(t);
    if (tt <= first) {
      out[t] = kept_values.front();
      continue;
    }
    if (tt >= last) {
      out[t] = kept_values.back();
      continue;
    }
    while (seg + 1 < idx.size() && idx[seg + 1] <= t) ++seg;
    if (idx[seg] == t) {
      out[t] = kept_values[seg];
      continue;
    }
    const double x0 = xs[seg];
    const double x1 = xs[seg + 1];
    switch (method) {
      case PrepMethod::nearest:
        // Equidistant ties resolve to the lower index.
        out[t] = (tt - x0 <= x1 - tt) ? kept_values[seg] : kept_values[seg + 1];
        break;
      case PrepMethod::linear: {
        const double f = (tt - x0) / (x1 - x0);
        out[t] = (1.0 - f) * kept_values[seg] + f * kept_values[seg + 1];
        break;
      }
      case PrepMethod::cubic:
        out[t] = spline(tt);
        break;
      default:
        break;
    }
  }
  return out;
}

dsp::ComplexVector reconstruct_aline_undersampled(std::span<const double> fringe, const DownsamplePlan& plan,
                                                  PrepMethod method) {
  const std::size_t n = plan.original_length;
  if (fringe.size() != n) throw InvalidArgument("reconstruct_aline_undersampled: fringe length does not match plan");
  if (n % 2 != 0) throw InvalidArgument("reconstruct_aline_undersampled: length must be even");
  const auto kept = decimate(fringe, plan);
  auto full = reinterpolate(kept, plan, method);
  const double m = stats::mean(full);
  dsp::ComplexVector x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = dsp::Complex(full[i] - m, 0.0);
  auto spectrum = dsp::dft(x);
  spectrum.resize(n / 2);
  return spectrum;
}

std::vector<BScanImage> reconstruct_volume(const phantom::SpectralVolume& volume, int factor, PrepMethod method) {
  if (volume.data.size() != volume.n_bscans * volume.n_alines * volume.n_samples) {
    throw InvalidArgument("reconstruct_volume: volume data size does not match its dimensions");
  }
  if (factor == 1 && method != PrepMethod::none) {
    throw InvalidArgument("reconstruct_volume: factor 1 takes no prep method");
  }
  if (factor != 1 && method == PrepMethod::none) {
    throw InvalidArgument("reconstruct_volume: undersampled reconstruction needs a prep method");
  }
  DownsamplePlan plan;
  if (factor != 1) plan = make_downsample_plan(volume.n_samples, factor);

  const std::size_t depth = volume.n_samples / 2;
  std::vector<BScanImage> images;
  images.reserve(volume.n_bscans);
  for (std::size_t b = 0; b < volume.n_bscans; ++b) {
    BScanImage img;
    img.n_depth = depth;
    img.n_alines = volume.n_alines;
    img.complex_data.resize(depth * volume.n_alines);
    img.amplitude_db = Image(depth, volume.n_alines);
    img.kind = factor == 1 ? ImageKind::ground_truth : ImageKind::undersampled_input;
    img.undersample_factor = factor;
    img.prep_method = method;
    img.noise_floor_db = volume.noise_floor_db;
    img.bscan_index = b;
    if (const auto it = volume.meta.find("source"); it != volume.meta.end()) img.source = it->second;
    for (std::size_t a = 0; a < volume.n_alines; ++a) {
      dsp::ComplexVector bins;
      if (factor == 1) {
        bins = reconstruct_aline_full(volume.aline(b, a)).first;
      } else {
        bins = reconstruct_aline_undersampled(volume.aline(b, a), plan, method);
      }
      const auto db = dsp::magnitude_db(bins);
      for (std::size_t d = 0; d < depth; ++d) {
        img.complex_data[d * volume.n_alines + a] = bins[d];
        img.amplitude_db(d, a) = db[d];
      }
    }
    images.push_back(std::move(img));
  }
  if (factor == 1) images = background_subtract(std::move(images));
  return images;
}

}  // namespace octrecon::recon
