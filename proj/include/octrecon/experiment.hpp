#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "octrecon/metrics.hpp"
#include "octrecon/phantom.hpp"
#include "octrecon/recon.hpp"
#include "octrecon/unet.hpp"

// Scaled synthetic study: simulate volumes, reconstruct ground truth and
// undersampled inputs, train one network per (factor, method) arm on the
// training volumes and score input and output on the held-out volumes.
namespace octrecon::experiment {

struct Arm {
  int factor = 2;
  recon::PrepMethod method = recon::PrepMethod::zero_interp;
};

struct StudyConfig {
  phantom::PhantomSpec phantom;  // template; rng_seed is replaced per volume
  std::size_t n_volumes = 8;
  std::size_t n_train = 5;
  unet::UNetConfig net{3, 8, 2, 1};
  std::size_t patch = 64;
  std::size_t stride = 32;
  double min_fraction = 0.01;
  int epochs = 20;
  double learning_rate = 1e-4;
  std::size_t batch_size = 3;
  std::uint64_t seed = 1;
  std::vector<Arm> arms{{2, recon::PrepMethod::zero_interp}};
  std::function<void(const std::string&)> log;
};

/// Desk-scale layered phantom: 128 spectral samples (64 depth bins), 128
/// A-lines per B-scan, tissue filling the lower half of the depth range.
phantom::PhantomSpec default_phantom();

struct ArmResult {
  Arm arm;
  metrics::MetricsReport input;
  metrics::MetricsReport output;
  std::vector<Image> outputs;  // absolute dB network outputs, test-set order
  std::size_t train_samples = 0;
  std::size_t removed_blanks = 0;
  double first_epoch_loss = 0.0;
  double final_epoch_loss = 0.0;
  double train_seconds = 0.0;
};

struct StudyReport {
  std::size_t train_volumes = 0;
  std::size_t test_volumes = 0;
  std::size_t test_images = 0;
  std::vector<ArmResult> arms;

  const ArmResult& find(int factor, recon::PrepMethod method) const;
};

StudyReport run_study(const StudyConfig& config);

/// Processing method, output PSNR mean/std, output SSIM mean/std, then the
/// same four statistics for the network input.
std::string table_csv(const StudyReport& report);

void to_json(nlohmann::json& j, const StudyReport& report);

}  // namespace octrecon::experiment
