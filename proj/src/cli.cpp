#include "octrecon/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "octrecon/bench.hpp"
#include "octrecon/dataio.hpp"
#include "octrecon/errors.hpp"
#include "octrecon/metrics.hpp"
#include "octrecon/phantom.hpp"
#include "octrecon/pipeline.hpp"
#include "octrecon/recon.hpp"
#include "octrecon/unet.hpp"

namespace octrecon::cli {
namespace {

namespace fs = std::filesystem;

const std::vector<std::string> kMethods{"zero_interp", "zero_pad", "nearest", "linear", "cubic"};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
  if (!out) throw InvalidArgument("failed writing " + path.string());
}

std::optional<dataio::ExportFormat> parse_export(const std::string& name) {
  if (name == "none") return std::nullopt;
  if (name == "png") return dataio::ExportFormat::png;
  return dataio::ExportFormat::pgm16;
}

std::string export_extension(dataio::ExportFormat f) { return f == dataio::ExportFormat::png ? ".png" : ".pgm"; }

std::pair<std::size_t, std::size_t> parse_cols(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--cols", "expected a:b");
  try {
    std::size_t used = 0;
    const auto a = std::stoul(text.substr(0, colon), &used);
    if (used != colon) throw std::invalid_argument("a");
    const auto rest = text.substr(colon + 1);
    const auto b = std::stoul(rest, &used);
    if (used != rest.size()) throw std::invalid_argument("b");
    return {a, b};
  } catch (const std::logic_error&) {
    throw CLI::ValidationError("--cols", "expected a:b with non-negative integers");
  }
}

struct Context {
  std::ostream& out;
  std::ostream& err;
};

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  std::string spec;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string dtype = "f64";
};

void cmd_simulate(const SimulateArgs& a, Context& ctx) {
  auto spec = phantom::load_spec(a.spec);
  if (a.seed) spec.rng_seed = *a.seed;
  const auto vol = phantom::generate_phantom(spec);
  dataio::write_volume(vol, a.out, a.dtype == "f32" ? dataio::VolumeDtype::float32 : dataio::VolumeDtype::float64);
  ctx.out << "wrote " << a.out << ": " << vol.n_bscans << " B-scans x " << vol.n_alines << " A-lines x "
          << vol.n_samples << " samples, noise floor " << vol.noise_floor_db << " dB\n";
}

// --- reconstruct ------------------------------------------------------------

struct ReconstructArgs {
  std::string in;
  int factor = 1;
  std::string method = "none";
  std::string out_dir;
  std::string export_format = "none";
};

void cmd_reconstruct(const ReconstructArgs& a, Context& ctx) {
  if (a.factor == 1 && a.method != "none") throw CLI::ValidationError("--method", "factor 1 takes no method");
  if (a.factor != 1 && a.method == "none") throw CLI::ValidationError("--method", "required for factor 2 or 3");
  const auto vol = dataio::read_volume(a.in);
  const auto images = recon::reconstruct_volume(vol, a.factor, recon::parse_prep_method(a.method));
  const auto stem = fs::path(a.in).stem().string();
  const auto exp = parse_export(a.export_format);
  for (const auto& img : images) {
    const auto path = fs::path(a.out_dir) / pipeline::image_filename(stem, img.bscan_index);
    dataio::write_image(img, path);
    if (exp) {
      auto display = fs::path(path).replace_extension(export_extension(*exp));
      const Image shown = img.kind == recon::ImageKind::ground_truth
                              ? img.absolute_db()
                              : pipeline::absolute_output(img, img);
      dataio::export_image(shown, display, *exp);
    }
  }
  ctx.out << "wrote " << images.size() << " images to " << a.out_dir << '\n';
}

// --- dataset ----------------------------------------------------------------

struct DatasetArgs {
  std::string gt_dir;
  std::string in_dir;
  std::size_t patch = 64;
  std::size_t stride = 32;
  double min_fraction = 0.01;
  std::string out;
};

void cmd_dataset(const DatasetArgs& a, Context& ctx) {
  const auto manifest = dataio::build_manifest(a.gt_dir, a.in_dir, a.patch, a.stride, a.min_fraction);
  if (manifest.samples.empty()) throw DegenerateError("dataset: every patch was blank");
  dataio::write_manifest(manifest, a.out);
  ctx.out << "wrote " << a.out << ": " << manifest.samples.size() << " patches, " << manifest.removed_blanks
          << " blank patches removed\n";
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  int depth = 5;
  int base = 48;
  double lr = 1e-4;
  std::size_t batch = 3;
  int epochs = 1;
  std::uint64_t seed = 0;
  std::optional<int> factor;
  std::string checkpoint;
  std::string out;
};

void cmd_train(const TrainArgs& a, Context& ctx) {
  const auto manifest = dataio::read_manifest(a.manifest);
  if (a.factor && *a.factor != manifest.undersample_factor) {
    throw InvalidArgument("manifest was built from " + std::to_string(manifest.undersample_factor) +
                          "x inputs but --factor is " + std::to_string(*a.factor));
  }
  const unet::UNetConfig config{a.depth, a.base, 2, 1};
  config.validate();
  const std::size_t multiple = std::size_t{1} << a.depth;
  if (manifest.patch_size % multiple != 0) {
    throw InvalidArgument("patch size " + std::to_string(manifest.patch_size) + " is not divisible by 2^depth");
  }
  const auto samples = dataio::load_samples(manifest);
  if (samples.empty()) throw DegenerateError("train: manifest lists no samples");
  auto model = unet::build(config, a.seed);
  unet::TrainOptions options;
  options.epochs = a.epochs;
  options.learning_rate = a.lr;
  options.batch_size = a.batch;
  options.seed = phantom::derive_seed(a.seed, 1);
  if (!a.checkpoint.empty()) options.checkpoint = a.checkpoint;
  const auto log = unet::train(model, samples, options);
  for (std::size_t e = 0; e < log.epoch_mean_loss.size(); ++e) {
    ctx.out << "epoch " << (e + 1) << " mean L1 " << log.epoch_mean_loss[e] << '\n';
  }
  unet::save(model, a.out,
             {{"train_patch", std::to_string(manifest.patch_size)},
              {"undersample_factor", std::to_string(manifest.undersample_factor)},
              {"prep_method", std::string(recon::to_string(manifest.prep_method))},
              {"epochs", std::to_string(a.epochs)},
              {"learning_rate", std::to_string(a.lr)},
              {"batch_size", std::to_string(a.batch)},
              {"seed", std::to_string(a.seed)}});
  ctx.out << "wrote " << a.out << " (" << model.parameter_count() << " parameters)\n";
}

// --- infer ------------------------------------------------------------------

struct InferArgs {
  std::string model;
  std::string in;
  int factor = 2;
  std::string method = "zero_interp";
  std::string out_dir;
  std::string export_format = "none";
};

void cmd_infer(const InferArgs& a, Context& ctx) {
  const auto loaded = unet::load(a.model);
  for (const auto& [key, value] : {std::pair<std::string, std::string>{"undersample_factor", std::to_string(a.factor)},
                                   {"prep_method", a.method}}) {
    const auto it = loaded.meta.find(key);
    if (it != loaded.meta.end() && it->second != value) {
      ctx.err << "warning: model was trained with " << key << "=" << it->second << ", running with " << value << '\n';
    }
  }
  const auto vol = dataio::read_volume(a.in);
  const auto inputs = recon::reconstruct_volume(vol, a.factor, recon::parse_prep_method(a.method));
  const auto stem = fs::path(a.in).stem().string();
  const auto exp = parse_export(a.export_format);
  for (const auto& input : inputs) {
    const auto pred = pipeline::predict(loaded.model, input);
    const auto path = fs::path(a.out_dir) / pipeline::image_filename(stem, pred.bscan_index);
    dataio::write_image(pred, path);
    if (exp) dataio::export_image(pred.amplitude_db, fs::path(path).replace_extension(export_extension(*exp)), *exp);
  }
  ctx.out << "wrote " << inputs.size() << " predictions to " << a.out_dir << '\n';
}

// --- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string pred_dir;
  std::string gt_dir;
  std::optional<double> noise_floor_db;
  std::string label = "output";
  std::string out;
};

void cmd_eval(const EvalArgs& a, Context& ctx) {
  const auto report = pipeline::evaluate_dirs(a.pred_dir, a.gt_dir, a.noise_floor_db, a.label);
  if (fs::path(a.out).extension() == ".csv") {
    write_text(a.out, metrics::reports_to_csv({report}));
  } else {
    write_text(a.out, nlohmann::json(report).dump(2) + "\n");
  }
  ctx.out << a.label << ": PSNR " << report.psnr_mean << " +/- " << report.psnr_std << " dB, SSIM "
          << report.ssim_mean << " +/- " << report.ssim_std << " over " << report.per_image.size() << " images\n";
}

// --- spectrum ---------------------------------------------------------------

struct SpectrumArgs {
  std::string image;
  std::string cols;
  std::string out;
};

void cmd_spectrum(const SpectrumArgs& a, Context& ctx) {
  const auto [start, end] = parse_cols(a.cols);
  const Image img = fs::path(a.image).extension() == ".octi" ? dataio::read_image(a.image).absolute_db()
                                                             : dataio::read_pgm(a.image);
  const auto profile = metrics::spectrum_profile(img, start, end);
  std::ostringstream os;
  os << "frequency_index,mean_log10_magnitude\n" << std::setprecision(10);
  for (std::size_t k = 0; k < profile.size(); ++k) os << k << ',' << profile[k] << '\n';
  write_text(a.out, os.str());
  ctx.out << "wrote " << a.out << " (" << profile.size() << " frequencies, columns " << start << ":" << end << ")\n";
}

// --- bench ------------------------------------------------------------------

struct BenchArgs {
  std::string model;
  std::vector<std::size_t> batches{1, 2, 4, 8, 16, 32, 64, 128};
  std::size_t runs = 10;
  std::size_t width = 512;
  std::size_t depth_px = 0;
  std::size_t memory_mb = 2048;
  std::string out;
};

void cmd_bench(const BenchArgs& a, Context& ctx) {
  bench::BenchOptions options;
  options.batch_sizes = a.batches;
  options.runs = a.runs;
  options.bscan_width = a.width;
  options.n_depth = a.depth_px;
  options.memory_budget_bytes = a.memory_mb << 20;
  const auto report = bench::bench(a.model, options);
  write_text(a.out, nlohmann::json(report).dump(2) + "\n");
  for (const auto& r : report.rows) {
    if (r.skipped) {
      ctx.out << "batch " << r.batch_size << ": skipped (" << r.note << ")\n";
    } else {
      ctx.out << "batch " << r.batch_size << ": " << r.mean_ms_per_bscan << " +/- " << r.std_ms_per_bscan
              << " ms per B-scan over " << r.runs << " runs\n";
    }
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Undersampled swept-source OCT reconstruction toolkit", "octrecon"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");
  Context ctx{out, err};

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic spectral volume from a phantom spec");
  simulate->add_option("--spec", sim.spec, "Phantom spec JSON")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out, "Output volume (.octv)")->required();
  simulate->add_option("--seed", sim.seed, "Override the phantom's RNG seed");
  simulate->add_option("--dtype", sim.dtype, "Sample type on disk")->check(CLI::IsMember({"f32", "f64"}));

  ReconstructArgs rec;
  auto* reconstruct = app.add_subcommand("reconstruct", "Reconstruct B-scans from a spectral volume");
  reconstruct->add_option("--in", rec.in, "Input volume (.octv)")->required()->check(CLI::ExistingFile);
  reconstruct->add_option("--factor", rec.factor, "1 = ground truth, 2 or 3 = undersampled")
      ->required()
      ->check(CLI::IsMember({1, 2, 3}));
  auto methods_with_none = kMethods;
  methods_with_none.push_back("none");
  reconstruct->add_option("--method", rec.method, "Pre-processing of undersampled spectra")
      ->check(CLI::IsMember(methods_with_none));
  reconstruct->add_option("--out-dir", rec.out_dir, "Directory for .octi images")->required();
  reconstruct->add_option("--export", rec.export_format, "Also write display images")
      ->check(CLI::IsMember({"none", "pgm16", "png"}));

  DatasetArgs ds;
  auto* dataset = app.add_subcommand("dataset", "Build a training manifest from aligned image directories");
  dataset->add_option("--gt-dir", ds.gt_dir, "Ground-truth images")->required()->check(CLI::ExistingDirectory);
  dataset->add_option("--in-dir", ds.in_dir, "Undersampled input images")->required()->check(CLI::ExistingDirectory);
  dataset->add_option("--patch", ds.patch, "Patch size")->check(CLI::PositiveNumber);
  dataset->add_option("--stride", ds.stride, "Lateral stride")->check(CLI::PositiveNumber);
  dataset->add_option("--min-fraction", ds.min_fraction, "Blank-patch threshold")->check(CLI::Range(0.0, 1.0));
  dataset->add_option("--out", ds.out, "Manifest JSON")->required();

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a U-Net on a manifest");
  train->add_option("--manifest", tr.manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--depth", tr.depth, "Number of down/up blocks")->check(CLI::Range(1, 12));
  train->add_option("--base", tr.base, "First-level channel count")->check(CLI::PositiveNumber);
  train->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  train->add_option("--batch", tr.batch, "Batch size")->check(CLI::PositiveNumber);
  train->add_option("--epochs", tr.epochs, "Epochs")->check(CLI::PositiveNumber);
  train->add_option("--seed", tr.seed, "Seed for initialisation and shuffling");
  train->add_option("--factor", tr.factor, "Expected undersampling factor of the manifest")
      ->check(CLI::IsMember({2, 3}));
  train->add_option("--checkpoint", tr.checkpoint, "Model file rewritten after every epoch");
  train->add_option("--out", tr.out, "Output model (.octm)")->required();

  InferArgs inf;
  auto* infer = app.add_subcommand("infer", "Run a trained model on an undersampled volume");
  infer->add_option("--model", inf.model, "Model (.octm)")->required()->check(CLI::ExistingFile);
  infer->add_option("--in", inf.in, "Input volume (.octv)")->required()->check(CLI::ExistingFile);
  infer->add_option("--factor", inf.factor, "Undersampling factor")->check(CLI::IsMember({2, 3}));
  infer->add_option("--method", inf.method, "Pre-processing method")->check(CLI::IsMember(kMethods));
  infer->add_option("--out-dir", inf.out_dir, "Directory for prediction images")->required();
  infer->add_option("--export", inf.export_format, "Also write display images")
      ->check(CLI::IsMember({"none", "pgm16", "png"}));

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score predictions or inputs against ground truth");
  eval->add_option("--pred-dir", ev.pred_dir, "Prediction or undersampled images")
      ->required()
      ->check(CLI::ExistingDirectory);
  eval->add_option("--gt-dir", ev.gt_dir, "Ground-truth images")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--noise-floor-db", ev.noise_floor_db, "Noise floor (default: ground-truth metadata)");
  eval->add_option("--label", ev.label, "Report label");
  eval->add_option("--out", ev.out, "Report (.json or .csv)")->required();

  SpectrumArgs sp;
  auto* spectrum = app.add_subcommand("spectrum", "Column-averaged axial spatial-frequency profile");
  spectrum->add_option("--image", sp.image, "PGM or .octi image")->required()->check(CLI::ExistingFile);
  spectrum->add_option("--cols", sp.cols, "Column range a:b (end exclusive)")->required();
  spectrum->add_option("--out", sp.out, "Output CSV")->required();

  BenchArgs bn;
  auto* benchcmd = app.add_subcommand("bench", "Time inference over batch sizes");
  benchcmd->add_option("--model", bn.model, "Model (.octm)")->required()->check(CLI::ExistingFile);
  benchcmd->add_option("--batches", bn.batches, "Comma-separated batch sizes")->delimiter(',');
  benchcmd->add_option("--runs", bn.runs, "Timed runs per batch size")->check(CLI::PositiveNumber);
  benchcmd->add_option("--width", bn.width, "A-lines per B-scan")->check(CLI::PositiveNumber);
  benchcmd->add_option("--depth-px", bn.depth_px, "Depth pixels (default: model's training patch)");
  benchcmd->add_option("--memory-mb", bn.memory_mb, "Skip batches estimated above this budget");
  benchcmd->add_option("--out", bn.out, "Report JSON")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    err << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.front()->help());
    return kUsage;
  }

  try {
    if (simulate->parsed()) cmd_simulate(sim, ctx);
    if (reconstruct->parsed()) cmd_reconstruct(rec, ctx);
    if (dataset->parsed()) cmd_dataset(ds, ctx);
    if (train->parsed()) cmd_train(tr, ctx);
    if (infer->parsed()) cmd_infer(inf, ctx);
    if (eval->parsed()) cmd_eval(ev, ctx);
    if (spectrum->parsed()) cmd_spectrum(sp, ctx);
    if (benchcmd->parsed()) cmd_bench(bn, ctx);
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n\n" << app.get_subcommands().front()->help();
    return kUsage;
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << '\n';
    return kDataError;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace octrecon::cli
