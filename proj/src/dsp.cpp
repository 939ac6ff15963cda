#include "octrecon/dsp.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <unordered_map>

#include "octrecon/errors.hpp"

namespace octrecon::dsp {
namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Twiddles and bit-reversal table for one power-of-two length.
class Radix2Plan {
 public:
  explicit Radix2Plan(std::size_t n) : n_(n), twiddle_(n / 2), reversed_(n) {
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = Complex(std::cos(angle), std::sin(angle));
    }
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) {
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      }
      reversed_[i] = r;
    }
  }

  // In-place forward transform.
  void forward(ComplexVector& a) const {
    for (std::size_t i = 0; i < n_; ++i) {
      if (i < reversed_[i]) std::swap(a[i], a[reversed_[i]]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const Complex t = twiddle_[j * stride] * a[start + j + half];
          a[start + j + half] = a[start + j] - t;
          a[start + j] += t;
        }
      }
    }
  }

  void inverse_unscaled(ComplexVector& a) const {
    for (auto& v : a) v = std::conj(v);
    forward(a);
    for (auto& v : a) v = std::conj(v);
  }

 private:
  std::size_t n_;
  ComplexVector twiddle_;
  std::vector<std::size_t> reversed_;
};

// Chirp-z reduction of an arbitrary-length DFT to a power-of-two circular
// convolution of length m >= 2n - 1.
class BluesteinPlan {
 public:
  explicit BluesteinPlan(std::size_t n) : n_(n) {
    m_ = 1;
    while (m_ < 2 * n - 1) m_ <<= 1;
    inner_ = std::make_unique<Radix2Plan>(m_);
    chirp_.resize(n);
    const std::size_t two_n = 2 * n;
    for (std::size_t i = 0; i < n; ++i) {
      // i^2 mod 2n keeps the phase argument small.
      const std::size_t sq = (i * i) % two_n;
      const double angle = -std::numbers::pi * static_cast<double>(sq) / static_cast<double>(n);
      chirp_[i] = Complex(std::cos(angle), std::sin(angle));
    }
    kernel_.assign(m_, Complex{});
    kernel_[0] = std::conj(chirp_[0]);
    for (std::size_t i = 1; i < n; ++i) {
      kernel_[i] = std::conj(chirp_[i]);
      kernel_[m_ - i] = std::conj(chirp_[i]);
    }
    inner_->forward(kernel_);
  }

  ComplexVector run(std::span<const Complex> x) const {
    ComplexVector work(m_, Complex{});
    for (std::size_t i = 0; i < n_; ++i) work[i] = x[i] * chirp_[i];
    inner_->forward(work);
    for (std::size_t i = 0; i < m_; ++i) work[i] *= kernel_[i];
    inner_->inverse_unscaled(work);
    ComplexVector out(n_);
    const double scale = 1.0 / static_cast<double>(m_);
    for (std::size_t k = 0; k < n_; ++k) out[k] = work[k] * scale * chirp_[k];
    return out;
  }

 private:
  std::size_t n_;
  std::size_t m_;
  std::unique_ptr<Radix2Plan> inner_;
  ComplexVector chirp_;
  ComplexVector kernel_;
};

struct PlanCache {
  std::unordered_map<std::size_t, std::unique_ptr<Radix2Plan>> radix2;
  std::unordered_map<std::size_t, std::unique_ptr<BluesteinPlan>> bluestein;
};

PlanCache& plan_cache() {
  thread_local PlanCache cache;
  return cache;
}

ComplexVector forward_transform(std::span<const Complex> x) {
  const std::size_t n = x.size();
  if (n == 0) throw InvalidArgument("dft: empty input");
  if (n == 1) return {x[0]};
  auto& cache = plan_cache();
  if (is_power_of_two(n)) {
    auto& plan = cache.radix2[n];
    if (!plan) plan = std::make_unique<Radix2Plan>(n);
    ComplexVector a(x.begin(), x.end());
    plan->forward(a);
    return a;
  }
  auto& plan = cache.bluestein[n];
  if (!plan) plan = std::make_unique<BluesteinPlan>(n);
  return plan->run(x);
}

}  // namespace

RealVector hann_window(std::size_t n) {
  if (n < 2) throw InvalidArgument("hann_window: n must be >= 2");
  RealVector w(n);
  const double denom = static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / denom));
  }
  // Force exact symmetry and exact zero endpoints.
  for (std::size_t i = 0; i < n / 2; ++i) w[n - 1 - i] = w[i];
  w[0] = w[n - 1] = 0.0;
  return w;
}

ComplexVector dft(std::span<const Complex> x) { return forward_transform(x); }

ComplexVector idft(std::span<const Complex> x) {
  if (x.empty()) throw InvalidArgument("idft: empty input");
  ComplexVector conj_in(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) conj_in[i] = std::conj(x[i]);
  ComplexVector out = forward_transform(conj_in);
  const double scale = 1.0 / static_cast<double>(x.size());
  for (auto& v : out) v = std::conj(v) * scale;
  return out;
}

RealVector magnitude_db(std::span<const Complex> z) {
  RealVector out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = 20.0 * std::log10(std::max(std::abs(z[i]), kAmplitudeFloor));
  }
  return out;
}

ComplexVector to_complex(std::span<const double> x) {
  ComplexVector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = Complex(x[i], 0.0);
  return out;
}

}  // namespace octrecon::dsp
