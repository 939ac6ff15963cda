#include "octrecon/pipeline.hpp"

#include <cstdio>

#include "octrecon/dataio.hpp"
#include "octrecon/dsp.hpp"
#include "octrecon/errors.hpp"

namespace octrecon::pipeline {
namespace {

std::size_t round_up(std::size_t n, std::size_t multiple) { return (n + multiple - 1) / multiple * multiple; }

}  // namespace

unet::Tensor network_input(const recon::BScanImage& input, std::size_t multiple,
                           std::array<unet::ChannelNorm, 2>* norms) {
  if (input.complex_data.size() != input.n_depth * input.n_alines || input.complex_data.empty()) {
    throw InvalidArgument("network input needs an undersampled image with complex data");
  }
  Image re(input.n_depth, input.n_alines);
  Image im(input.n_depth, input.n_alines);
  for (std::size_t i = 0; i < re.size(); ++i) {
    re.data[i] = input.complex_data[i].real();
    im.data[i] = input.complex_data[i].imag();
  }
  const auto sre = dataio::standardize(re, "input real channel");
  const auto sim = dataio::standardize(im, "input imaginary channel");
  if (norms) *norms = {sre.norm, sim.norm};
  const std::size_t h = round_up(input.n_depth, multiple);
  const std::size_t w = round_up(input.n_alines, multiple);
  unet::Tensor x({1, 2, h, w});
  for (std::size_t r = 0; r < input.n_depth; ++r) {
    for (std::size_t c = 0; c < input.n_alines; ++c) {
      x.at(0, 0, r, c) = static_cast<float>(sre.values(r, c));
      x.at(0, 1, r, c) = static_cast<float>(sim.values(r, c));
    }
  }
  return x;
}

recon::BScanImage predict(const unet::UNetModel& model, const recon::BScanImage& input) {
  const std::size_t multiple = std::size_t{1} << model.config().depth;
  const auto x = network_input(input, multiple);
  const auto y = model.forward(x);
  recon::BScanImage out;
  out.n_depth = input.n_depth;
  out.n_alines = input.n_alines;
  out.amplitude_db = Image(input.n_depth, input.n_alines);
  for (std::size_t r = 0; r < input.n_depth; ++r) {
    for (std::size_t c = 0; c < input.n_alines; ++c) out.amplitude_db(r, c) = y.at(0, 0, r, c);
  }
  out.kind = recon::ImageKind::prediction;
  out.undersample_factor = input.undersample_factor;
  out.prep_method = input.prep_method;
  out.noise_floor_db = input.noise_floor_db;
  out.source = input.source;
  out.bscan_index = input.bscan_index;
  return out;
}

Image absolute_output(const recon::BScanImage& candidate, const recon::BScanImage& gt) {
  if (candidate.n_depth != gt.n_depth || candidate.n_alines != gt.n_alines) {
    throw ShapeError("image is " + std::to_string(candidate.n_depth) + "x" + std::to_string(candidate.n_alines) +
                     " but ground truth is " + std::to_string(gt.n_depth) + "x" + std::to_string(gt.n_alines));
  }
  switch (candidate.kind) {
    case recon::ImageKind::undersampled_input: {
      Image out(candidate.n_depth, candidate.n_alines);
      for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] = 20.0 * std::log10(std::max(std::abs(candidate.complex_data.at(i)), dsp::kAmplitudeFloor));
      }
      return out;
    }
    case recon::ImageKind::prediction: {
      const auto norm = dataio::standardize(gt.amplitude_db, "ground truth").norm;
      Image out = dataio::destandardize(candidate.amplitude_db, norm);
      if (!gt.background_db.empty()) {
        for (std::size_t d = 0; d < out.rows; ++d) {
          for (std::size_t a = 0; a < out.cols; ++a) out(d, a) += gt.background_db[d];
        }
      }
      return out;
    }
    case recon::ImageKind::ground_truth:
      return candidate.absolute_db();
  }
  return candidate.absolute_db();
}

metrics::EvalPair make_eval_pair(const recon::BScanImage& candidate, const recon::BScanImage& gt,
                                 std::optional<double> noise_floor_db) {
  metrics::EvalPair pair;
  pair.id = gt.source + ":" + std::to_string(gt.bscan_index);
  pair.output_db = absolute_output(candidate, gt);
  pair.target_db = gt.absolute_db();
  pair.noise_floor_db = noise_floor_db.value_or(gt.noise_floor_db);
  return pair;
}

metrics::MetricsReport evaluate_dirs(const std::filesystem::path& candidate_dir, const std::filesystem::path& gt_dir,
                                     std::optional<double> noise_floor_db, const std::string& label) {
  std::vector<metrics::EvalPair> pairs;
  for (const auto& path : dataio::list_images(candidate_dir)) {
    const auto gt_path = gt_dir / path.filename();
    if (!std::filesystem::exists(gt_path)) throw InvalidArgument("no ground truth matching " + path.string());
    const auto candidate = dataio::read_image(path);
    const auto gt = dataio::read_image(gt_path);
    if (gt.kind != recon::ImageKind::ground_truth) throw InvalidArgument(gt_path.string() + " is not a ground-truth image");
    auto pair = make_eval_pair(candidate, gt, noise_floor_db);
    pair.id = path.stem().string();
    pairs.push_back(std::move(pair));
  }
  if (pairs.empty()) throw InvalidArgument("no .octi images in " + candidate_dir.string());
  return metrics::evaluate_pairs(pairs, label);
}

std::string image_filename(const std::string& stem, std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_b%04zu.octi", index);
  return stem + buf;
}

}  // namespace octrecon::pipeline
