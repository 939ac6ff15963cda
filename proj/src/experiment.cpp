#include "octrecon/experiment.hpp"

#include <chrono>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "octrecon/dataio.hpp"
#include "octrecon/errors.hpp"
#include "octrecon/pipeline.hpp"

namespace octrecon::experiment {
namespace {

void say(const StudyConfig& config, const std::string& message) {
  if (config.log) config.log(message);
}

std::string arm_label(const Arm& arm) {
  return std::string(recon::to_string(arm.method)) + "@" + std::to_string(arm.factor) + "x";
}

}  // namespace

phantom::PhantomSpec default_phantom() {
  phantom::PhantomSpec spec;
  spec.n_bscans = 16;
  spec.n_alines = 128;
  spec.n_samples = 128;
  spec.layer_boundaries = {
      {30.0, 4.0, 1.0, 0.35},
      {38.0, 3.0, 0.6, 0.45},
      {47.0, 3.0, 0.5, 0.45},
      {55.0, 2.0, 0.4, 0.5},
  };
  spec.scatterers_per_layer_density = 0.6;
  spec.axial_decay_rate = 0.03;
  spec.envelope_sigma = 48.0;
  spec.dc_level = 0.0;
  spec.noise_sigma = 0.01;
  return spec;
}

const ArmResult& StudyReport::find(int factor, recon::PrepMethod method) const {
  for (const auto& a : arms) {
    if (a.arm.factor == factor && a.arm.method == method) return a;
  }
  throw InvalidArgument("study has no arm " + arm_label({factor, method}));
}

StudyReport run_study(const StudyConfig& config) {
  if (config.n_train == 0 || config.n_train >= config.n_volumes) {
    throw InvalidArgument("study: need at least one training and one test volume");
  }
  if (config.arms.empty()) throw InvalidArgument("study: no arms");
  config.net.validate();

  std::vector<phantom::SpectralVolume> volumes;
  std::vector<std::vector<recon::BScanImage>> ground_truth;
  for (std::size_t v = 0; v < config.n_volumes; ++v) {
    auto spec = config.phantom;
    spec.rng_seed = phantom::derive_seed(config.seed, v);
    auto vol = phantom::generate_phantom(spec);
    vol.meta["source"] = "vol" + std::to_string(v);
    ground_truth.push_back(recon::reconstruct_volume(vol, 1, recon::PrepMethod::none));
    volumes.push_back(std::move(vol));
  }
  say(config, "simulated " + std::to_string(config.n_volumes) + " volumes, noise floor " +
                  std::to_string(volumes.front().noise_floor_db) + " dB");

  StudyReport report;
  report.train_volumes = config.n_train;
  report.test_volumes = config.n_volumes - config.n_train;

  for (std::size_t k = 0; k < config.arms.size(); ++k) {
    const auto& arm = config.arms[k];
    ArmResult result;
    result.arm = arm;

    std::vector<unet::TrainSample> train_set;
    std::vector<metrics::EvalPair> input_pairs;
    std::vector<metrics::EvalPair> output_pairs;
    std::vector<std::vector<recon::BScanImage>> test_inputs;
    for (std::size_t v = 0; v < config.n_volumes; ++v) {
      auto inputs = recon::reconstruct_volume(volumes[v], arm.factor, arm.method);
      if (v < config.n_train) {
        for (std::size_t b = 0; b < inputs.size(); ++b) {
          const auto& gt = ground_truth[v][b];
          auto pairs = dataio::remove_blanks(dataio::extract_patches(gt, inputs[b], config.patch, config.stride),
                                             gt.noise_floor_db, config.min_fraction);
          result.removed_blanks += pairs.removed;
          for (const auto& p : pairs.kept) {
            try {
              train_set.push_back(dataio::normalize_pair(p));
            } catch (const DegenerateError&) {
              ++result.removed_blanks;
            }
          }
        }
      } else {
        test_inputs.push_back(std::move(inputs));
      }
    }
    result.train_samples = train_set.size();
    if (train_set.empty()) throw DegenerateError("study: every training patch was blank");

    // Every arm starts from the same initial weights.
    auto model = unet::build(config.net, phantom::derive_seed(config.seed, 0x5EED0000ULL));
    unet::TrainOptions options;
    options.epochs = config.epochs;
    options.learning_rate = config.learning_rate;
    options.batch_size = config.batch_size;
    options.seed = phantom::derive_seed(config.seed, 0x7A110000ULL);
    const auto start = std::chrono::steady_clock::now();
    const auto log = unet::train(model, train_set, options);
    result.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.first_epoch_loss = log.epoch_mean_loss.front();
    result.final_epoch_loss = log.epoch_mean_loss.back();
    say(config, arm_label(arm) + ": " + std::to_string(train_set.size()) + " patches, loss " +
                    std::to_string(result.first_epoch_loss) + " -> " + std::to_string(result.final_epoch_loss) + " in " +
                    std::to_string(result.train_seconds) + " s");

    for (std::size_t t = 0; t < test_inputs.size(); ++t) {
      const auto& gts = ground_truth[config.n_train + t];
      for (std::size_t b = 0; b < test_inputs[t].size(); ++b) {
        const auto& input = test_inputs[t][b];
        input_pairs.push_back(pipeline::make_eval_pair(input, gts[b]));
        auto out_pair = pipeline::make_eval_pair(pipeline::predict(model, input), gts[b]);
        result.outputs.push_back(out_pair.output_db);
        output_pairs.push_back(std::move(out_pair));
      }
    }
    result.input = metrics::evaluate_pairs(input_pairs, arm_label(arm) + " input");
    result.output = metrics::evaluate_pairs(output_pairs, arm_label(arm));
    report.test_images = output_pairs.size();
    say(config, arm_label(arm) + ": input PSNR " + std::to_string(result.input.psnr_mean) + " SSIM " +
                    std::to_string(result.input.ssim_mean) + ", output PSNR " + std::to_string(result.output.psnr_mean) +
                    " SSIM " + std::to_string(result.output.ssim_mean));
    report.arms.push_back(std::move(result));
  }
  return report;
}

std::string table_csv(const StudyReport& report) {
  std::ostringstream os;
  os << "processing_method,factor,psnr_mean,psnr_std,ssim_mean,ssim_std,"
        "input_psnr_mean,input_psnr_std,input_ssim_mean,input_ssim_std\n";
  os << std::fixed << std::setprecision(4);
  for (const auto& a : report.arms) {
    os << recon::to_string(a.arm.method) << ',' << a.arm.factor << ',' << a.output.psnr_mean << ','
       << a.output.psnr_std << ',' << a.output.ssim_mean << ',' << a.output.ssim_std << ',' << a.input.psnr_mean << ','
       << a.input.psnr_std << ',' << a.input.ssim_mean << ',' << a.input.ssim_std << '\n';
  }
  return os.str();
}

void to_json(nlohmann::json& j, const StudyReport& report) {
  nlohmann::json arms = nlohmann::json::array();
  for (const auto& a : report.arms) {
    arms.push_back({{"factor", a.arm.factor},
                    {"method", recon::to_string(a.arm.method)},
                    {"input", a.input},
                    {"output", a.output},
                    {"train_samples", a.train_samples},
                    {"removed_blanks", a.removed_blanks},
                    {"first_epoch_loss", a.first_epoch_loss},
                    {"final_epoch_loss", a.final_epoch_loss},
                    {"train_seconds", a.train_seconds}});
  }
  j = nlohmann::json{{"train_volumes", report.train_volumes},
                     {"test_volumes", report.test_volumes},
                     {"test_images", report.test_images},
                     {"arms", arms}};
}

}  // namespace octrecon::experiment
