#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "octrecon/unet.hpp"

namespace octrecon::bench {

struct BenchRow {
  std::size_t batch_size = 0;
  std::size_t runs = 0;
  double mean_ms_per_bscan = 0.0;
  double std_ms_per_bscan = 0.0;
  bool skipped = false;
  std::string note;  // why a row was skipped
};

struct BenchReport {
  int base_channels = 0;
  int depth = 0;
  std::size_t n_depth = 0;
  std::size_t bscan_width = 0;
  std::size_t warmup_runs = 0;
  int workers = 1;
  std::string precision = "float32";
  std::vector<BenchRow> rows;  // ascending batch size
};

struct BenchOptions {
  std::vector<std::size_t> batch_sizes{1, 2, 4, 8, 16, 32, 64, 128};
  std::size_t runs = 10;
  std::size_t bscan_width = 512;
  std::size_t n_depth = 0;  // 0: the model's training patch size
  std::size_t warmup_runs = 3;
  std::size_t memory_budget_bytes = std::size_t{2} << 30;
  std::uint64_t seed = 0;
};

/// Rough peak bytes of one inference pass: live feature maps of every level
/// plus the im2col scratch.
std::size_t estimate_inference_bytes(const unet::UNetConfig& config, std::size_t batch, std::size_t height,
                                     std::size_t width);

/// Times forward inference on random [batch, 2, n_depth, width] inputs.
/// Batches over the memory budget, or that fail to allocate, are marked
/// skipped and the remaining batch sizes still run.
BenchReport bench(const unet::UNetModel& model, const BenchOptions& options);

/// Loads the model and takes the default depth from its "train_patch" metadata.
BenchReport bench(const std::filesystem::path& model_path, BenchOptions options);

void to_json(nlohmann::json& j, const BenchReport& report);

}  // namespace octrecon::bench
