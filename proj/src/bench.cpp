#include "octrecon/bench.hpp"

#include <algorithm>
#include <chrono>
#include <new>
#include <random>

#include <nlohmann/json.hpp>

#include "octrecon/errors.hpp"
#include "octrecon/stats.hpp"

namespace octrecon::bench {

std::size_t estimate_inference_bytes(const unet::UNetConfig& config, std::size_t batch, std::size_t height,
                                     std::size_t width) {
  std::size_t floats = batch * static_cast<std::size_t>(config.in_channels) * height * width;
  std::size_t h = height, w = width;
  std::size_t channels = static_cast<std::size_t>(config.base_channels);
  for (int level = 1; level <= config.depth; ++level) {
    // skip tensor, conv1 output, and the concatenated decoder input
    floats += batch * channels * h * w * 4;
    channels *= 2;
    h /= 2;
    w /= 2;
  }
  const std::size_t scratch = std::size_t{1} << 21;
  return (floats + scratch) * sizeof(float);
}

BenchReport bench(const unet::UNetModel& model, const BenchOptions& options) {
  if (options.runs == 0) throw InvalidArgument("bench: runs must be >= 1");
  if (options.bscan_width == 0 || options.n_depth == 0) throw InvalidArgument("bench: empty B-scan size");
  for (auto b : options.batch_sizes) {
    if (b == 0) throw InvalidArgument("bench: batch sizes must be >= 1");
  }
  const auto& config = model.config();
  const std::size_t multiple = std::size_t{1} << config.depth;
  if (options.n_depth % multiple != 0 || options.bscan_width % multiple != 0) {
    throw InvalidArgument("bench: depth and width must be multiples of " + std::to_string(multiple));
  }

  BenchReport report;
  report.base_channels = config.base_channels;
  report.depth = config.depth;
  report.n_depth = options.n_depth;
  report.bscan_width = options.bscan_width;
  report.warmup_runs = options.warmup_runs;

  auto batches = options.batch_sizes;
  std::sort(batches.begin(), batches.end());
  batches.erase(std::unique(batches.begin(), batches.end()), batches.end());

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  using clock = std::chrono::steady_clock;

  for (auto batch : batches) {
    BenchRow row;
    row.batch_size = batch;
    const auto bytes = estimate_inference_bytes(config, batch, options.n_depth, options.bscan_width);
    if (bytes > options.memory_budget_bytes) {
      row.skipped = true;
      row.note = "estimated " + std::to_string(bytes >> 20) + " MiB exceeds the memory budget";
      report.rows.push_back(row);
      continue;
    }
    try {
      unet::Tensor x({batch, static_cast<std::size_t>(config.in_channels), options.n_depth, options.bscan_width});
      for (auto& v : x.data) v = normal(rng);
      for (std::size_t i = 0; i < options.warmup_runs; ++i) model.forward(x);
      std::vector<double> per_bscan;
      per_bscan.reserve(options.runs);
      for (std::size_t i = 0; i < options.runs; ++i) {
        const auto t0 = clock::now();
        const auto y = model.forward(x);
        const auto t1 = clock::now();
        if (y.data.empty()) throw NumericError("bench: empty output");
        per_bscan.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(batch));
      }
      row.runs = options.runs;
      row.mean_ms_per_bscan = stats::mean(per_bscan);
      row.std_ms_per_bscan = stats::population_std(per_bscan);
    } catch (const std::bad_alloc&) {
      row.skipped = true;
      row.note = "allocation failed";
    }
    report.rows.push_back(row);
  }
  return report;
}

BenchReport bench(const std::filesystem::path& model_path, BenchOptions options) {
  const auto loaded = unet::load(model_path);
  if (options.n_depth == 0) {
    const auto it = loaded.meta.find("train_patch");
    if (it == loaded.meta.end()) throw InvalidArgument("bench: model has no train_patch metadata; pass a depth");
    options.n_depth = std::stoul(it->second);
  }
  return bench(loaded.model, options);
}

void to_json(nlohmann::json& j, const BenchReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row{{"batch_size", r.batch_size}, {"runs", r.runs}, {"skipped", r.skipped}};
    if (r.skipped) {
      row["note"] = r.note;
    } else {
      row["mean_ms_per_bscan"] = r.mean_ms_per_bscan;
      row["std_ms_per_bscan"] = r.std_ms_per_bscan;
    }
    rows.push_back(row);
  }
  j = nlohmann::json{{"config", {{"base_channels", report.base_channels}, {"depth", report.depth}}},
                     {"n_depth", report.n_depth},
                     {"bscan_width", report.bscan_width},
                     {"warmup_runs", report.warmup_runs},
                     {"environment", {{"workers", report.workers}, {"precision", report.precision}}},
                     {"rows", rows}};
}

}  // namespace octrecon::bench
