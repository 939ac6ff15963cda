// Acceptance gate: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when everything passes).
//
//   octrecon_acceptance [--out-dir DIR] [--only N[,N...]]

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "octrecon/bench.hpp"
#include "octrecon/dataio.hpp"
#include "octrecon/dsp.hpp"
#include "octrecon/errors.hpp"
#include "octrecon/experiment.hpp"
#include "octrecon/metrics.hpp"
#include "octrecon/ops.hpp"
#include "octrecon/phantom.hpp"
#include "octrecon/recon.hpp"
#include "octrecon/unet.hpp"
#include "oracles.hpp"

using namespace octrecon;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

fs::path g_out_dir;

// Table-driven O(N^2) DFT; independent of the library's transform.
std::vector<oracle::cd> direct_dft(const std::vector<oracle::cd>& x, bool inverse) {
  const std::size_t n = x.size();
  std::vector<oracle::cd> tw(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double a = sign * 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
    tw[j] = {std::cos(a), std::sin(a)};
  }
  std::vector<oracle::cd> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    oracle::cd acc = 0.0;
    std::size_t idx = 0;
    for (std::size_t j = 0; j < n; ++j) {
      acc += x[j] * tw[idx];
      idx += k;
      if (idx >= n) idx %= n;
    }
    out[k] = inverse ? acc / static_cast<double>(n) : acc;
  }
  return out;
}

double max_err(const std::vector<oracle::cd>& a, const std::vector<oracle::cd>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// --- 1 ----------------------------------------------------------------------------
Outcome dft_oracle() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::normal_distribution<double> g;
  double worst = 0.0;
  for (std::size_t n : {1u, 2u, 5u, 427u, 640u, 1280u}) {
    std::vector<oracle::cd> x(n);
    for (auto& v : x) v = {g(rng), g(rng)};
    worst = std::max(worst, max_err(dsp::dft(x), direct_dft(x, false)));
    worst = std::max(worst, max_err(dsp::idft(x), direct_dft(x, true)));
  }
  const double t = seconds_since(t0);
  return {worst < 1e-9 && t < 10.0, "max abs error " + fmt(worst, 3) + ", " + fmt(t, 3) + " s"};
}

// --- 2 ----------------------------------------------------------------------------
Outcome replication_identity() {
  std::mt19937_64 rng(202);
  std::normal_distribution<double> g;
  const auto plan = recon::make_downsample_plan(1280, 2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    // zero mean over the even and over the odd samples
    std::vector<double> x(1280);
    for (auto& v : x) v = g(rng);
    for (std::size_t phase = 0; phase < 2; ++phase) {
      double m = 0.0;
      for (std::size_t i = phase; i < 1280; i += 2) m += x[i];
      m /= 640.0;
      for (std::size_t i = phase; i < 1280; i += 2) x[i] -= m;
    }
    const auto full = direct_dft(std::vector<oracle::cd>(x.begin(), x.end()), false);
    const auto half = recon::reconstruct_aline_undersampled(x, plan, recon::PrepMethod::zero_interp);
    for (std::size_t k = 0; k < 640; ++k) {
      worst = std::max(worst, std::abs(half[k] - 0.5 * (full[k] + full[(k + 640) % 1280])));
    }
  }
  int misplaced = 0;
  for (int cycles = 321; cycles < 640; cycles += 7) {
    std::vector<double> x(1280);
    for (std::size_t i = 0; i < 1280; ++i) x[i] = std::cos(2.0 * std::numbers::pi * cycles * i / 1280.0 + 0.7);
    const auto half = recon::reconstruct_aline_undersampled(x, plan, recon::PrepMethod::zero_interp);
    std::size_t best = 0;
    for (std::size_t k = 1; k < 320; ++k) {
      if (std::abs(half[k]) > std::abs(half[best])) best = k;
    }
    if (best != static_cast<std::size_t>(640 - cycles)) ++misplaced;
  }
  return {worst < 1e-9 && misplaced == 0,
          "max identity error " + fmt(worst, 3) + " over 100 fringes, " + std::to_string(misplaced) +
              " misplaced alias peaks"};
}

// --- 3 ----------------------------------------------------------------------------
Outcome three_x_plan() {
  const auto plan = recon::make_downsample_plan(1280, 3);
  bool ok = plan.kept_indices.size() == 427;
  for (std::size_t i = 0; ok && i < plan.kept_indices.size(); ++i) ok = plan.kept_indices[i] == 3 * i;
  ok = ok && plan.kept_indices.back() == 1278;
  return {ok, std::to_string(plan.kept_indices.size()) + " kept samples, last index " +
                  std::to_string(plan.kept_indices.back())};
}

// --- 4 ----------------------------------------------------------------------------
Outcome gradient_suite() {
  using nn::Tensor64;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  std::normal_distribution<double> g;
  auto rnd = [&](nn::Shape s) {
    Tensor64 t(std::move(s));
    for (auto& v : t.data) v = g(rng);
    return t;
  };
  auto dot = [](const Tensor64& a, const Tensor64& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  double ops_worst = 0.0;
  auto record = [&](const Tensor64& analytic, const Tensor64& numeric) {
    ops_worst = std::max(ops_worst, oracle::relative_error(analytic, numeric));
  };

  {  // conv2d
    auto x = rnd({2, 3, 5, 6});
    auto w = rnd({4, 3, 3, 3});
    auto b = rnd({4});
    const auto probe = rnd({2, 4, 5, 6});
    auto f = [&] { return dot(nn::conv2d(x, w, b), probe); };
    const auto gr = nn::conv2d_backward(x, w, probe);
    record(gr.input, oracle::numeric_grad(x, f));
    record(gr.weight, oracle::numeric_grad(w, f));
    record(gr.bias, oracle::numeric_grad(b, f));
  }
  {  // leaky_relu, away from the kink
    auto x = rnd({2, 2, 4, 4});
    for (auto& v : x.data) v += v >= 0 ? 0.05 : -0.05;
    const auto probe = rnd(x.shape);
    auto f = [&] { return dot(nn::leaky_relu(x), probe); };
    record(nn::leaky_relu_backward(x, probe), oracle::numeric_grad(x, f));
  }
  {  // maxpool2, distinct values
    Tensor64 x({2, 2, 4, 6});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * static_cast<double>((i * 37) % x.size());
    const auto probe = rnd({2, 2, 2, 3});
    auto f = [&] { return dot(nn::maxpool2(x), probe); };
    std::vector<std::uint32_t> arg;
    nn::maxpool2(x, &arg);
    record(nn::maxpool2_backward(x.shape, arg, probe), oracle::numeric_grad(x, f, 1e-4));
  }
  {  // upsample_bilinear2
    auto x = rnd({2, 2, 3, 5});
    const auto probe = rnd({2, 2, 6, 10});
    auto f = [&] { return dot(nn::upsample_bilinear2(x), probe); };
    record(nn::upsample_bilinear2_backward(x.shape, probe), oracle::numeric_grad(x, f));
  }
  {  // concat_channels: its backward is split_channels
    auto a = rnd({1, 2, 3, 3});
    auto b = rnd({1, 3, 3, 3});
    const auto probe = rnd({1, 5, 3, 3});
    auto f = [&] { return dot(nn::concat_channels(a, b), probe); };
    const auto [ga, gb] = nn::split_channels(probe, 2);
    record(ga, oracle::numeric_grad(a, f));
    record(gb, oracle::numeric_grad(b, f));
  }
  {  // l1_loss
    auto pred = rnd({1, 1, 5, 5});
    const auto target = rnd({1, 1, 5, 5});
    auto f = [&] { return nn::l1_loss(pred, target).value; };
    record(nn::l1_loss(pred, target).grad, oracle::numeric_grad(pred, f));
  }

  // Whole tiny network: depth 1, base 2, 8x8 input.
  double net_worst = 0.0;
  auto model = unet::build<double>(unet::UNetConfig{1, 2, 2, 1}, 404);
  auto x = rnd({1, 2, 8, 8});
  const auto probe = rnd({1, 1, 8, 8});
  auto objective = [&] { return dot(model.forward(x), probe); };
  unet::ForwardCache<double> cache;
  model.forward(x, cache);
  model.zero_grad();
  const auto gx = model.backward(cache, probe);
  net_worst = std::max(net_worst, oracle::relative_error(gx, oracle::numeric_grad(x, objective)));
  for (auto& p : model.params()) {
    net_worst = std::max(net_worst, oracle::relative_error(p.param.grad, oracle::numeric_grad(p.param.value, objective)));
  }
  const double t = seconds_since(t0);
  return {ops_worst < 1e-4 && net_worst < 1e-3 && t < 60.0,
          "ops max rel error " + fmt(ops_worst, 3) + ", network " + fmt(net_worst, 3) + ", " + fmt(t, 3) + " s"};
}

// --- 5 ----------------------------------------------------------------------------
Outcome activation_and_loss() {
  nn::Tensor64 x({2});
  x.data = {-1.0, 2.0};
  const auto y = nn::leaky_relu(x);
  nn::Tensor xf({2});
  xf.data = {-1.0f, 2.0f};
  const auto yf = nn::leaky_relu(xf);
  const bool exact = y[0] == -0.1 && y[1] == 2.0 && yf[0] == -0.1f && yf[1] == 2.0f;

  std::mt19937_64 rng(505);
  std::normal_distribution<float> g;
  std::vector<unet::TrainSample> samples(3);
  for (auto& s : samples) {
    s.input = unet::Tensor({2, 16, 16});
    s.target = unet::Tensor({1, 16, 16});
    for (auto& v : s.input.data) v = g(rng);
    for (auto& v : s.target.data) v = g(rng);
  }
  auto model = unet::build(unet::UNetConfig{2, 4, 2, 1}, 5);
  std::vector<const unet::TrainSample*> batch{&samples[0], &samples[1], &samples[2]};
  // independent recomputation: forward each sample alone, average |y - t|
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : samples) {
    unet::Tensor xin({1, 2, 16, 16});
    xin.data = s.input.data;
    const auto out = model.forward(xin);
    for (std::size_t i = 0; i < out.size(); ++i) total += std::abs(static_cast<double>(out[i]) - s.target[i]);
    count += out.size();
  }
  const double expected = total / static_cast<double>(count);
  const double reported = unet::train_step(model, batch, 1e-4);
  const double diff = std::abs(reported - expected);
  return {exact && diff < 1e-6, std::string("leaky_relu(-1) = ") + fmt(y[0], 17) + ", leaky_relu(2) = " + fmt(y[1]) +
                                    "; loss " + fmt(reported, 10) + " vs " + fmt(expected, 10) + " (diff " +
                                    fmt(diff, 3) + ")"};
}

// --- 6 ----------------------------------------------------------------------------
Outcome adam_fidelity() {
  nn::Param<double> p(nn::Tensor64({1}, 0.5));
  const double lr = 1e-4, grad = 2.0, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double m = 0.0, v = 0.0, theta = 0.5, worst = 0.0;
  for (int t = 1; t <= 3; ++t) {
    p.grad[0] = grad;
    nn::adam_step(p, lr);
    m = b1 * m + (1 - b1) * grad;
    v = b2 * v + (1 - b2) * grad * grad;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    theta -= lr * mhat / (std::sqrt(vhat) + eps);
    worst = std::max(worst, std::abs(p.value[0] - theta));
  }
  return {worst <= 1e-12, "max deviation " + fmt(worst, 3) + " after 3 steps, final " + fmt(p.value[0], 15)};
}

// --- 7 ----------------------------------------------------------------------------
Outcome overfit_sanity() {
  const auto t0 = Clock::now();
  // Shallow layered phantom: 16 depth bins, so a 16x16 patch spans all four layers.
  auto spec = experiment::default_phantom();
  spec.n_bscans = 1;
  spec.n_alines = 32;
  spec.n_samples = 32;
  spec.layer_boundaries = {{4.0, 1.0, 1.0, 0.35}, {7.0, 1.0, 0.6, 0.45}, {10.0, 1.0, 0.5, 0.45}, {13.0, 0.5, 0.4, 0.5}};
  spec.envelope_sigma = 12.0;
  spec.rng_seed = 707;
  auto vol = phantom::generate_phantom(spec);
  const auto gt = recon::reconstruct_volume(vol, 1, recon::PrepMethod::none);
  const auto in = recon::reconstruct_volume(vol, 2, recon::PrepMethod::zero_interp);
  const auto pairs = dataio::extract_patches(gt[0], in[0], 16, 16);
  std::vector<unet::TrainSample> data{dataio::normalize_pair(pairs[0]), dataio::normalize_pair(pairs[1])};
  std::vector<const unet::TrainSample*> batch{&data[0], &data[1]};
  auto model = unet::build(unet::UNetConfig{2, 16, 2, 1}, 7);
  // Cosine-annealed rate: a constant rate leaves Adam hovering around the L1 minimum.
  const int max_steps = 500;
  const double peak_lr = 5e-3;
  double first = 0.0, best = 0.0;
  for (int steps = 0; steps < max_steps; ++steps) {
    const double lr = 0.5 * peak_lr * (1.0 + std::cos(std::numbers::pi * steps / max_steps));
    const double loss = unet::train_step(model, batch, lr);
    if (steps == 0) first = best = loss;
    best = std::min(best, loss);
  }
  const double t = seconds_since(t0);
  return {first / best >= 100.0 && t < 300.0, "L1 " + fmt(first) + " -> " + fmt(best) + " (" + fmt(first / best, 4) +
                                                   "x) within " + std::to_string(max_steps) + " steps, " + fmt(t, 3) +
                                                   " s"};
}

// --- 8, 9, 11 share one study run ---------------------------------------------------
struct StudyRun {
  experiment::StudyReport report;
  double seconds = 0.0;
  std::string error;
};

StudyRun& study() {
  static StudyRun run = [] {
    StudyRun r;
    experiment::StudyConfig config;
    config.phantom = experiment::default_phantom();
    config.epochs = 20;
    using recon::PrepMethod;
    config.arms = {{2, PrepMethod::zero_interp}, {2, PrepMethod::zero_pad}, {2, PrepMethod::cubic},
                   {2, PrepMethod::linear},      {2, PrepMethod::nearest},  {3, PrepMethod::zero_interp}};
    config.log = [](const std::string& line) { std::cerr << "  [study] " << line << std::endl; };
    const auto t0 = Clock::now();
    try {
      r.report = experiment::run_study(config);
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    r.seconds = seconds_since(t0);
    if (r.error.empty()) {
      std::ofstream(g_out_dir / "study_table.csv") << experiment::table_csv(r.report);
      std::ofstream(g_out_dir / "study_report.json") << nlohmann::json(r.report).dump(2) << '\n';
    }
    return r;
  }();
  return run;
}

Outcome end_to_end() {
  auto& s = study();
  if (!s.error.empty()) return {false, "study failed: " + s.error};
  const auto& a = s.report.find(2, recon::PrepMethod::zero_interp);
  const double gain = a.output.psnr_mean - a.input.psnr_mean;
  const bool ok = gain >= 3.0 && a.output.ssim_mean > a.input.ssim_mean && s.seconds < 1800.0;
  return {ok, "PSNR " + fmt(a.input.psnr_mean) + " -> " + fmt(a.output.psnr_mean) + " dB (+" + fmt(gain, 3) +
                  "), SSIM " + fmt(a.input.ssim_mean) + " -> " + fmt(a.output.ssim_mean) + " on " +
                  std::to_string(s.report.test_images) + " held-out B-scans; arm trained in " +
                  fmt(a.train_seconds, 3) + " s, whole study " + fmt(s.seconds, 4) + " s"};
}

Outcome interpolation_study() {
  auto& s = study();
  if (!s.error.empty()) return {false, "study failed: " + s.error};
  using recon::PrepMethod;
  auto same = [](const std::vector<Image>& a, const std::vector<Image>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].data != b[i].data) return false;
    }
    return true;
  };
  bool differ = true;
  for (auto zero : {PrepMethod::zero_interp, PrepMethod::zero_pad}) {
    for (auto other : {PrepMethod::cubic, PrepMethod::linear, PrepMethod::nearest}) {
      differ = differ && !same(s.report.find(2, zero).outputs, s.report.find(2, other).outputs);
    }
  }
  bool improves = true;
  std::string detail;
  for (auto m : {PrepMethod::zero_interp, PrepMethod::zero_pad, PrepMethod::cubic, PrepMethod::linear,
                 PrepMethod::nearest}) {
    const auto& a = s.report.find(2, m);
    improves = improves && a.output.psnr_mean > a.input.psnr_mean;
    detail += std::string(recon::to_string(m)) + " " + fmt(a.input.psnr_mean) + "->" + fmt(a.output.psnr_mean) + "; ";
  }
  const bool csv = fs::exists(g_out_dir / "study_table.csv");
  return {differ && improves && csv, detail + "table written to " + (g_out_dir / "study_table.csv").string()};
}

Outcome factor_ordering() {
  auto& s = study();
  if (!s.error.empty()) return {false, "study failed: " + s.error};
  const double two = s.report.find(2, recon::PrepMethod::zero_interp).output.psnr_mean;
  const double three = s.report.find(3, recon::PrepMethod::zero_interp).output.psnr_mean;
  return {two + 1.0 >= three, "2x output PSNR " + fmt(two) + " dB, 3x " + fmt(three) + " dB (1 dB slack)"};
}

// --- 10 ---------------------------------------------------------------------------
Outcome metrics_oracle() {
  std::mt19937_64 rng(1010);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  Image first;
  for (int i = 0; i < 50; ++i) {
    Image a(24, 32), b(24, 32);
    for (auto& v : a.data) v = u(rng);
    for (auto& v : b.data) v = u(rng);
    if (i == 0) first = a;
    worst = std::max(worst, std::abs(metrics::mse(a, b) - oracle::mse(a, b)));
    worst = std::max(worst, std::abs(metrics::psnr(a, b) - oracle::psnr(a, b)));
    worst = std::max(worst, std::abs(metrics::ssim(a, b) - oracle::ssim(a, b)));
  }
  const double self = metrics::ssim(first, first);
  const double p20 = metrics::psnr_from_mse(0.01);
  return {worst <= 1e-12 && self == 1.0 && p20 == 20.0,
          "max deviation " + fmt(worst, 3) + ", ssim(a,a) = " + fmt(self, 17) + ", psnr(mse=0.01) = " + fmt(p20, 17)};
}

// --- 12 ---------------------------------------------------------------------------
Outcome bench_harness() {
  bench::BenchOptions opt;
  opt.batch_sizes = {1, 2, 4, 8, 16, 32, 64, 128};
  opt.runs = 10;
  opt.bscan_width = 64;
  opt.n_depth = 32;
  const auto small = unet::build(unet::UNetConfig{3, 16, 2, 1}, 12);
  const auto large = unet::build(unet::UNetConfig{3, 48, 2, 1}, 12);
  const auto r16 = bench::bench(small, opt);
  const auto r48 = bench::bench(large, opt);
  std::ofstream(g_out_dir / "bench_base16.json") << nlohmann::json(r16).dump(2) << '\n';
  std::ofstream(g_out_dir / "bench_base48.json") << nlohmann::json(r48).dump(2) << '\n';
  bool complete = r16.rows.size() == opt.batch_sizes.size() && r48.rows.size() == opt.batch_sizes.size();
  bool faster = true;
  std::size_t compared = 0;
  std::string rows;
  for (std::size_t i = 0; complete && i < r16.rows.size(); ++i) {
    const auto &a = r16.rows[i], &b = r48.rows[i];
    if (!a.skipped && a.runs < 10) complete = false;
    if (!b.skipped && b.runs < 10) complete = false;
    if (a.skipped || b.skipped) continue;
    ++compared;
    faster = faster && a.mean_ms_per_bscan < b.mean_ms_per_bscan;
    rows += "b" + std::to_string(a.batch_size) + " " + fmt(a.mean_ms_per_bscan, 3) + "/" +
            fmt(b.mean_ms_per_bscan, 3) + " ms; ";
  }
  return {complete && faster && compared > 0,
          rows + "base16/base48 per B-scan (32x64), " + std::to_string(r16.workers) + " worker"};
}

// --- 13 ---------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary | std::ios::trunc) << s; }

template <typename F>
bool rejects(F&& f) {
  try {
    f();
  } catch (const FormatError&) {
    return true;
  } catch (...) {
    return false;
  }
  return false;
}

Outcome format_roundtrips() {
  const auto dir = g_out_dir / "roundtrip";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> failures;

  auto spec = experiment::default_phantom();
  spec.n_bscans = 2;
  spec.n_alines = 64;
  spec.rng_seed = 1313;
  auto vol = phantom::generate_phantom(spec);
  dataio::write_volume(vol, dir / "v.octv");
  const auto vol2 = dataio::read_volume(dir / "v.octv");
  dataio::write_volume(vol2, dir / "v2.octv");
  if (vol2.data != vol.data || slurp(dir / "v.octv") != slurp(dir / "v2.octv")) failures.push_back("octv");

  const auto model = unet::build(unet::UNetConfig{3, 8, 2, 1}, 13);
  unet::save(model, dir / "m.octm", {{"train_patch", "64"}});
  const auto loaded = unet::load(dir / "m.octm");
  unet::save(loaded.model, dir / "m2.octm", loaded.meta);
  if (slurp(dir / "m.octm") != slurp(dir / "m2.octm")) failures.push_back("octm");

  vol.meta["source"] = "v";
  const auto gts = recon::reconstruct_volume(vol, 1, recon::PrepMethod::none);
  const auto ins = recon::reconstruct_volume(vol, 2, recon::PrepMethod::zero_interp);
  for (std::size_t b = 0; b < gts.size(); ++b) {
    dataio::write_image(gts[b], dir / "gt" / ("v_b" + std::to_string(b) + ".octi"));
    dataio::write_image(ins[b], dir / "in" / ("v_b" + std::to_string(b) + ".octi"));
  }
  const auto manifest = dataio::build_manifest(dir / "gt", dir / "in", 64, 64, 0.01);
  dataio::write_manifest(manifest, dir / "manifest.json");
  dataio::write_manifest(dataio::read_manifest(dir / "manifest.json"), dir / "manifest2.json");
  if (slurp(dir / "manifest.json") != slurp(dir / "manifest2.json")) failures.push_back("manifest");

  const Image img = gts[0].absolute_db();
  dataio::export_image(img, dir / "a.pgm", dataio::ExportFormat::pgm16);
  const auto back = dataio::read_pgm(dir / "a.pgm");
  dataio::export_image(back, dir / "b.pgm", dataio::ExportFormat::pgm16);
  const auto q = dataio::quantize16(img);
  bool pgm_ok = slurp(dir / "a.pgm") == slurp(dir / "b.pgm") && back.size() == q.size();
  for (std::size_t i = 0; pgm_ok && i < q.size(); ++i) pgm_ok = back.data[i] == q[i];
  if (!pgm_ok) failures.push_back("pgm");

  // Corrupted headers must surface as format errors.
  int rejected = 0, tried = 0;
  auto corrupt = [&](const fs::path& src, const fs::path& dst, std::size_t pos, char c, auto reader) {
    auto bytes = slurp(src);
    bytes[pos] = c;
    spit(dst, bytes);
    ++tried;
    if (rejects([&] { reader(dst); })) ++rejected;
  };
  auto truncate = [&](const fs::path& src, const fs::path& dst, std::size_t keep, auto reader) {
    spit(dst, slurp(src).substr(0, keep));
    ++tried;
    if (rejects([&] { reader(dst); })) ++rejected;
  };
  auto rv = [](const fs::path& p) { dataio::read_volume(p); };
  auto rm = [](const fs::path& p) { unet::load(p); };
  auto rf = [](const fs::path& p) { dataio::read_manifest(p); };
  auto rp = [](const fs::path& p) { dataio::read_pgm(p); };
  corrupt(dir / "v.octv", dir / "bad.octv", 0, 'X', rv);
  corrupt(dir / "v.octv", dir / "bad.octv", 9, '\x7f', rv);  // n_alines
  corrupt(dir / "v.octv", dir / "bad.octv", 17, '\x05', rv);  // dtype
  truncate(dir / "v.octv", dir / "bad.octv", 12, rv);
  truncate(dir / "v.octv", dir / "bad.octv", slurp(dir / "v.octv").size() - 4, rv);
  corrupt(dir / "m.octm", dir / "bad.octm", 1, 'Z', rm);
  corrupt(dir / "m.octm", dir / "bad.octm", 5, '\xff', rm);  // header length
  corrupt(dir / "m.octm", dir / "bad.octm", 10, '!', rm);    // JSON body
  truncate(dir / "m.octm", dir / "bad.octm", slurp(dir / "m.octm").size() - 1, rm);
  corrupt(dir / "manifest.json", dir / "bad.json", 0, '[', rf);
  truncate(dir / "manifest.json", dir / "bad.json", 30, rf);
  corrupt(dir / "a.pgm", dir / "bad.pgm", 1, '2', rp);
  truncate(dir / "a.pgm", dir / "bad.pgm", slurp(dir / "a.pgm").size() - 2, rp);
  if (rejected != tried) failures.push_back(std::to_string(tried - rejected) + " corruptions accepted");

  std::string detail = "octv, octm, manifest and pgm byte-exact; " + std::to_string(rejected) + "/" +
                       std::to_string(tried) + " corruptions raised format errors";
  if (!failures.empty()) {
    detail = "failed:";
    for (const auto& f : failures) detail += " " + f;
  }
  return {failures.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::string out_dir = "acceptance_artifacts";
  std::vector<int> only;
  app.add_option("--out-dir", out_dir, "Where reports and tables are written");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  g_out_dir = out_dir;
  fs::create_directories(g_out_dir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"DFT oracle equivalence", dft_oracle},
      {"aliasing replication identity", replication_identity},
      {"3x plan correctness", three_x_plan},
      {"gradient suite", gradient_suite},
      {"leaky ReLU and L1 loss fidelity", activation_and_loss},
      {"Adam fidelity", adam_fidelity},
      {"overfit sanity", overfit_sanity},
      {"end-to-end desk-scale experiment", end_to_end},
      {"interpolation-method study", interpolation_study},
      {"metrics oracle", metrics_oracle},
      {"3x-vs-2x ordering", factor_ordering},
      {"bench harness", bench_harness},
      {"format roundtrips", format_roundtrips},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failed;
}
