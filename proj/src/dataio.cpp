#include "octrecon/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>
#include <png.h>

#include "octrecon/binio.hpp"
#include "octrecon/errors.hpp"
#include "octrecon/stats.hpp"

namespace octrecon::dataio {
namespace {

constexpr char kVolumeMagic[5] = {'O', 'C', 'T', 'V', '1'};
constexpr char kImageMagic[5] = {'O', 'C', 'T', 'I', '1'};
constexpr std::uint32_t kMaxHeaderBytes = 256u << 20;

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open " + path.string());
  return in;
}

void expect_magic(std::istream& in, const char (&magic)[5], const std::string& what) {
  char buf[5];
  in.read(buf, 5);
  if (in.gcount() != 5 || !std::equal(buf, buf + 5, magic)) {
    throw FormatError(what + ": bad magic at byte offset 0 (expected " + std::string(magic, 5) + ")");
  }
}

std::uint64_t remaining_bytes(std::istream& in) {
  const auto here = in.tellg();
  in.seekg(0, std::ios::end);
  const auto end = in.tellg();
  in.seekg(here);
  return static_cast<std::uint64_t>(end - here);
}

}  // namespace

// --- volumes ----------------------------------------------------------------

void write_volume(const phantom::SpectralVolume& volume, const fs::path& path, VolumeDtype dtype) {
  if (volume.data.size() != volume.n_bscans * volume.n_alines * volume.n_samples) {
    throw InvalidArgument("write_volume: data size does not match dimensions");
  }
  auto out = open_out(path);
  out.write(kVolumeMagic, 5);
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(volume.n_bscans));
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(volume.n_alines));
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(volume.n_samples));
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dtype));
  binio::write_le<double>(out, volume.noise_floor_db);
  if (dtype == VolumeDtype::float64) {
    for (double v : volume.data) binio::write_le<double>(out, v);
  } else {
    for (double v : volume.data) binio::write_le<float>(out, static_cast<float>(v));
  }
  if (!out) throw InvalidArgument("failed writing " + path.string());
}

phantom::SpectralVolume read_volume(const fs::path& path) {
  auto in = open_in(path);
  const std::string what = "volume file " + path.string();
  expect_magic(in, kVolumeMagic, what);
  std::uint64_t offset = 5;
  phantom::SpectralVolume vol;
  vol.n_bscans = binio::read_le<std::uint32_t>(in, offset, what);
  vol.n_alines = binio::read_le<std::uint32_t>(in, offset, what);
  vol.n_samples = binio::read_le<std::uint32_t>(in, offset, what);
  const auto dtype = binio::read_le<std::uint32_t>(in, offset, what);
  if (dtype > 1) throw FormatError(what + ": unknown dtype code " + std::to_string(dtype) + " at byte offset 17");
  vol.noise_floor_db = binio::read_le<double>(in, offset, what);
  const std::size_t count = vol.n_bscans * vol.n_alines * vol.n_samples;
  const std::size_t elem = dtype == 1 ? 8 : 4;
  const std::uint64_t expected = static_cast<std::uint64_t>(count) * elem;
  const std::uint64_t actual = remaining_bytes(in);
  if (actual != expected) {
    throw FormatError(what + ": payload at byte offset " + std::to_string(offset) + " has " + std::to_string(actual) +
                      " bytes, header promises " + std::to_string(expected));
  }
  std::vector<char> raw(expected);
  in.read(raw.data(), static_cast<std::streamsize>(expected));
  vol.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (dtype == 1) {
      double v;
      std::memcpy(&v, raw.data() + i * 8, 8);
      vol.data[i] = binio::byteswap_if_big(v);
    } else {
      float v;
      std::memcpy(&v, raw.data() + i * 4, 4);
      vol.data[i] = binio::byteswap_if_big(v);
    }
    if (!std::isfinite(vol.data[i])) {
      throw FormatError(what + ": non-finite sample at byte offset " + std::to_string(offset + i * elem));
    }
  }
  vol.meta["source"] = path.stem().string();
  return vol;
}

// --- reconstructed images -----------------------------------------------------

void write_image(const recon::BScanImage& image, const fs::path& path) {
  if (image.amplitude_db.rows != image.n_depth || image.amplitude_db.cols != image.n_alines) {
    throw ShapeError("write_image: amplitude shape does not match image dimensions");
  }
  const bool has_complex = !image.complex_data.empty();
  if (has_complex && image.complex_data.size() != image.n_depth * image.n_alines) {
    throw ShapeError("write_image: complex data size does not match image dimensions");
  }
  nlohmann::json header{{"kind", recon::to_string(image.kind)},
                        {"undersample_factor", image.undersample_factor},
                        {"prep_method", recon::to_string(image.prep_method)},
                        {"n_depth", image.n_depth},
                        {"n_alines", image.n_alines},
                        {"noise_floor_db", image.noise_floor_db},
                        {"background_db", image.background_db},
                        {"has_complex", has_complex},
                        {"source", image.source},
                        {"bscan_index", image.bscan_index}};
  const std::string text = header.dump();
  auto out = open_out(path);
  out.write(kImageMagic, 5);
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double v : image.amplitude_db.data) binio::write_le<double>(out, v);
  if (has_complex) {
    for (const auto& z : image.complex_data) {
      binio::write_le<double>(out, z.real());
      binio::write_le<double>(out, z.imag());
    }
  }
  if (!out) throw InvalidArgument("failed writing " + path.string());
}

recon::BScanImage read_image(const fs::path& path) {
  auto in = open_in(path);
  const std::string what = "image file " + path.string();
  expect_magic(in, kImageMagic, what);
  std::uint64_t offset = 5;
  const auto header_len = binio::read_le<std::uint32_t>(in, offset, what);
  if (header_len == 0 || header_len > kMaxHeaderBytes) {
    throw FormatError(what + ": implausible header length " + std::to_string(header_len));
  }
  std::string text(header_len, '\0');
  in.read(text.data(), header_len);
  if (in.gcount() != static_cast<std::streamsize>(header_len)) {
    throw FormatError(what + ": header truncated at byte offset " + std::to_string(offset + static_cast<std::uint64_t>(in.gcount())));
  }
  offset += header_len;
  recon::BScanImage img;
  bool has_complex = false;
  try {
    const auto header = nlohmann::json::parse(text);
    img.kind = recon::parse_image_kind(header.at("kind").get<std::string>());
    img.undersample_factor = header.at("undersample_factor").get<int>();
    img.prep_method = recon::parse_prep_method(header.at("prep_method").get<std::string>());
    img.n_depth = header.at("n_depth").get<std::size_t>();
    img.n_alines = header.at("n_alines").get<std::size_t>();
    img.noise_floor_db = header.at("noise_floor_db").get<double>();
    img.background_db = header.at("background_db").get<std::vector<double>>();
    has_complex = header.at("has_complex").get<bool>();
    img.source = header.value("source", std::string{});
    img.bscan_index = header.value("bscan_index", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": corrupt header: " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": corrupt header: " + e.what());
  }
  if (!img.background_db.empty() && img.background_db.size() != img.n_depth) {
    throw FormatError(what + ": background length does not match n_depth");
  }
  const std::size_t pixels = img.n_depth * img.n_alines;
  const std::uint64_t expected = static_cast<std::uint64_t>(pixels) * 8 * (has_complex ? 3 : 1);
  const std::uint64_t actual = remaining_bytes(in);
  if (actual != expected) {
    throw FormatError(what + ": payload at byte offset " + std::to_string(offset) + " has " + std::to_string(actual) +
                      " bytes, header promises " + std::to_string(expected));
  }
  img.amplitude_db = Image(img.n_depth, img.n_alines);
  for (auto& v : img.amplitude_db.data) v = binio::read_le<double>(in, offset, what);
  if (has_complex) {
    img.complex_data.resize(pixels);
    for (auto& z : img.complex_data) {
      const double re = binio::read_le<double>(in, offset, what);
      const double im = binio::read_le<double>(in, offset, what);
      z = {re, im};
    }
  }
  return img;
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InvalidArgument("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".octi") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// --- display export -----------------------------------------------------------

std::vector<std::uint16_t> quantize16(const Image& image) {
  std::vector<std::uint16_t> out(image.size(), 0);
  if (image.size() == 0) return out;
  for (double v : image.data) {
    if (!std::isfinite(v)) throw InvalidArgument("export_image: non-finite pixel");
  }
  const auto [lo_it, hi_it] = std::minmax_element(image.data.begin(), image.data.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) return out;
  const double scale = 65535.0 / (hi - lo);
  for (std::size_t i = 0; i < image.size(); ++i) {
    out[i] = static_cast<std::uint16_t>(std::lround(std::clamp((image.data[i] - lo) * scale, 0.0, 65535.0)));
  }
  return out;
}

namespace {

void write_png16(const std::vector<std::uint16_t>& samples, std::size_t width, std::size_t height,
                 const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw InvalidArgument("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw InvalidArgument("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InvalidArgument("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 16, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<png_byte> row(width * 2);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::uint16_t v = samples[y * width + x];
      row[2 * x] = static_cast<png_byte>(v >> 8);
      row[2 * x + 1] = static_cast<png_byte>(v & 0xFF);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void export_image(const Image& image, const fs::path& path, ExportFormat format) {
  const auto samples = quantize16(image);
  if (format == ExportFormat::png) {
    write_png16(samples, image.cols, image.rows, path);
    return;
  }
  auto out = open_out(path);
  out << "P5\n" << image.cols << ' ' << image.rows << "\n65535\n";
  for (auto v : samples) {
    const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xFF)};
    out.write(bytes, 2);
  }
  if (!out) throw InvalidArgument("failed writing " + path.string());
}

Image read_pgm(const fs::path& path) {
  auto in = open_in(path);
  const std::string what = "PGM file " + path.string();
  auto next_token = [&]() {
    std::string token;
    int c;
    while ((c = in.get()) != EOF) {
      if (c == '#') {
        while ((c = in.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!token.empty()) break;
        continue;
      }
      token.push_back(static_cast<char>(c));
    }
    if (token.empty()) throw FormatError(what + ": truncated header");
    return token;
  };
  if (next_token() != "P5") throw FormatError(what + ": not a binary PGM (P5)");
  std::size_t width = 0, height = 0;
  unsigned long maxval = 0;
  try {
    width = std::stoul(next_token());
    height = std::stoul(next_token());
    maxval = std::stoul(next_token());
  } catch (const std::logic_error&) {
    throw FormatError(what + ": malformed header");
  }
  if (width == 0 || height == 0 || maxval == 0 || maxval > 65535) throw FormatError(what + ": invalid header values");
  const std::size_t bytes_per = maxval > 255 ? 2 : 1;
  const std::uint64_t offset = static_cast<std::uint64_t>(in.tellg());
  std::vector<unsigned char> raw(width * height * bytes_per);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) {
    throw FormatError(what + ": payload at byte offset " + std::to_string(offset) + " truncated, expected " +
                      std::to_string(raw.size()) + " bytes, found " + std::to_string(in.gcount()));
  }
  Image img(height, width);
  for (std::size_t i = 0; i < width * height; ++i) {
    img.data[i] = bytes_per == 2 ? static_cast<double>((raw[2 * i] << 8) | raw[2 * i + 1]) : raw[i];
  }
  return img;
}

// --- dataset construction -------------------------------------------------------

namespace {

RawPair window_at(const recon::BScanImage& gt, const recon::BScanImage& input, std::size_t patch_size,
                  std::size_t col) {
  RawPair p;
  p.source = gt.source;
  p.bscan_index = gt.bscan_index;
  p.column_offset = col;
  p.target_db = Image(patch_size, patch_size);
  p.input_real = Image(patch_size, patch_size);
  p.input_imag = Image(patch_size, patch_size);
  p.background_db.assign(patch_size, 0.0);
  for (std::size_t r = 0; r < patch_size; ++r) {
    if (!gt.background_db.empty()) p.background_db[r] = gt.background_db[r];
    for (std::size_t c = 0; c < patch_size; ++c) {
      p.target_db(r, c) = gt.amplitude_db(r, col + c);
      const auto z = input.at(r, col + c);
      p.input_real(r, c) = z.real();
      p.input_imag(r, c) = z.imag();
    }
  }
  return p;
}

void check_patch_inputs(const recon::BScanImage& gt, const recon::BScanImage& input, std::size_t patch_size) {
  if (gt.n_depth != input.n_depth || gt.n_alines != input.n_alines) {
    throw ShapeError("extract_patches: ground truth and input are not aligned");
  }
  if (input.complex_data.size() != input.n_depth * input.n_alines) {
    throw InvalidArgument("extract_patches: input image carries no complex data");
  }
  if (patch_size > gt.n_depth || patch_size > gt.n_alines) {
    throw InvalidArgument("extract_patches: patch " + std::to_string(patch_size) + " larger than image " +
                          std::to_string(gt.n_depth) + "x" + std::to_string(gt.n_alines));
  }
}

}  // namespace

std::vector<RawPair> extract_patches(const recon::BScanImage& gt, const recon::BScanImage& input,
                                     std::size_t patch_size, std::size_t stride) {
  if (patch_size == 0 || stride == 0) throw InvalidArgument("extract_patches: patch size and stride must be >= 1");
  check_patch_inputs(gt, input, patch_size);
  std::vector<RawPair> out;
  for (std::size_t col = 0; col + patch_size <= gt.n_alines; col += stride) {
    out.push_back(window_at(gt, input, patch_size, col));
  }
  return out;
}

BlankFilterResult remove_blanks(std::vector<RawPair> pairs, double noise_floor_db, double min_fraction) {
  BlankFilterResult result;
  for (auto& p : pairs) {
    std::size_t above = 0;
    for (std::size_t r = 0; r < p.target_db.rows; ++r) {
      for (std::size_t c = 0; c < p.target_db.cols; ++c) {
        if (p.target_db(r, c) + p.background_db[r] > noise_floor_db) ++above;
      }
    }
    const double fraction = p.target_db.size() ? static_cast<double>(above) / static_cast<double>(p.target_db.size()) : 0.0;
    if (fraction < min_fraction) {
      ++result.removed;
    } else {
      result.kept.push_back(std::move(p));
    }
  }
  return result;
}

Standardized standardize(const Image& image, const std::string& what) {
  const double m = stats::mean(image.data);
  const double s = stats::population_std(image.data);
  if (!(s > 0.0) || !std::isfinite(s)) throw DegenerateError(what + ": zero-variance channel");
  Standardized out{image, {m, s}};
  for (auto& v : out.values.data) v = (v - m) / s;
  return out;
}

Image destandardize(const Image& values, const unet::ChannelNorm& norm) {
  Image out = values;
  for (auto& v : out.data) v = v * norm.std + norm.mean;
  return out;
}

unet::TrainSample normalize_pair(const RawPair& pair) {
  const auto re = standardize(pair.input_real, "input real channel");
  const auto im = standardize(pair.input_imag, "input imaginary channel");
  const auto tg = standardize(pair.target_db, "target channel");
  const std::size_t p = pair.target_db.rows;
  const std::size_t q = pair.target_db.cols;
  unet::TrainSample s;
  s.input = unet::Tensor({2, p, q});
  s.target = unet::Tensor({1, p, q});
  for (std::size_t i = 0; i < p * q; ++i) {
    s.input[i] = static_cast<float>(re.values.data[i]);
    s.input[p * q + i] = static_cast<float>(im.values.data[i]);
    s.target[i] = static_cast<float>(tg.values.data[i]);
  }
  s.norm_meta = {re.norm, im.norm, tg.norm};
  return s;
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& s : m.samples) {
    nlohmann::json norms = nlohmann::json::array();
    for (const auto& n : s.norm_meta) norms.push_back({n.mean, n.std});
    samples.push_back({{"gt", s.gt_path},
                       {"input", s.input_path},
                       {"source", s.source},
                       {"bscan", s.bscan_index},
                       {"offset", s.column_offset},
                       {"norm_meta", norms}});
  }
  j = nlohmann::json{{"patch_size", m.patch_size},
                     {"stride", m.stride},
                     {"min_fraction", m.min_fraction},
                     {"undersample_factor", m.undersample_factor},
                     {"prep_method", recon::to_string(m.prep_method)},
                     {"removed_blanks", m.removed_blanks},
                     {"samples", samples}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
  m.patch_size = j.at("patch_size").get<std::size_t>();
  m.stride = j.at("stride").get<std::size_t>();
  m.min_fraction = j.at("min_fraction").get<double>();
  m.undersample_factor = j.at("undersample_factor").get<int>();
  m.prep_method = recon::parse_prep_method(j.at("prep_method").get<std::string>());
  m.removed_blanks = j.value("removed_blanks", std::size_t{0});
  m.samples.clear();
  for (const auto& s : j.at("samples")) {
    ManifestSample ms;
    ms.gt_path = s.at("gt").get<std::string>();
    ms.input_path = s.at("input").get<std::string>();
    ms.source = s.at("source").get<std::string>();
    ms.bscan_index = s.at("bscan").get<std::size_t>();
    ms.column_offset = s.at("offset").get<std::size_t>();
    const auto& norms = s.at("norm_meta");
    if (norms.size() != 3) throw FormatError("manifest: norm_meta must have 3 entries");
    for (std::size_t k = 0; k < 3; ++k) ms.norm_meta[k] = {norms[k].at(0).get<double>(), norms[k].at(1).get<double>()};
    m.samples.push_back(std::move(ms));
  }
}

void write_manifest(const DatasetManifest& manifest, const fs::path& path) {
  auto out = open_out(path);
  out << nlohmann::json(manifest).dump(2) << '\n';
  if (!out) throw InvalidArgument("failed writing " + path.string());
}

DatasetManifest read_manifest(const fs::path& path) {
  auto in = open_in(path);
  try {
    nlohmann::json j;
    in >> j;
    return j.get<DatasetManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
}

DatasetManifest build_manifest(const fs::path& gt_dir, const fs::path& input_dir, std::size_t patch_size,
                               std::size_t stride, double min_fraction) {
  DatasetManifest manifest;
  manifest.patch_size = patch_size;
  manifest.stride = stride;
  manifest.min_fraction = min_fraction;
  bool first = true;
  for (const auto& gt_path : list_images(gt_dir)) {
    const auto input_path = input_dir / gt_path.filename();
    if (!fs::exists(input_path)) throw InvalidArgument("no input image matching " + gt_path.string());
    const auto gt = read_image(gt_path);
    const auto input = read_image(input_path);
    if (gt.kind != recon::ImageKind::ground_truth) throw InvalidArgument(gt_path.string() + " is not a ground-truth image");
    if (input.kind != recon::ImageKind::undersampled_input) {
      throw InvalidArgument(input_path.string() + " is not an undersampled input image");
    }
    if (first) {
      manifest.undersample_factor = input.undersample_factor;
      manifest.prep_method = input.prep_method;
      first = false;
    } else if (manifest.undersample_factor != input.undersample_factor || manifest.prep_method != input.prep_method) {
      throw InvalidArgument("input images mix undersampling factors or prep methods");
    }
    auto filtered = remove_blanks(extract_patches(gt, input, patch_size, stride), gt.noise_floor_db, min_fraction);
    manifest.removed_blanks += filtered.removed;
    for (const auto& pair : filtered.kept) {
      unet::TrainSample sample;
      try {
        sample = normalize_pair(pair);
      } catch (const DegenerateError&) {
        ++manifest.removed_blanks;
        continue;
      }
      manifest.samples.push_back({gt_path.string(), input_path.string(), pair.source.empty() ? gt_path.stem().string() : pair.source,
                                  pair.bscan_index, pair.column_offset, sample.norm_meta});
    }
  }
  std::stable_sort(manifest.samples.begin(), manifest.samples.end(), [](const auto& a, const auto& b) {
    return std::tie(a.source, a.bscan_index, a.column_offset) < std::tie(b.source, b.bscan_index, b.column_offset);
  });
  return manifest;
}

std::vector<unet::TrainSample> load_samples(const DatasetManifest& manifest) {
  std::vector<unet::TrainSample> out;
  out.reserve(manifest.samples.size());
  std::string cached_gt_path;
  recon::BScanImage gt, input;
  for (const auto& s : manifest.samples) {
    if (s.gt_path != cached_gt_path) {
      gt = read_image(s.gt_path);
      input = read_image(s.input_path);
      cached_gt_path = s.gt_path;
    }
    check_patch_inputs(gt, input, manifest.patch_size);
    if (s.column_offset + manifest.patch_size > gt.n_alines) {
      throw FormatError("manifest sample offset " + std::to_string(s.column_offset) + " outside " + s.gt_path);
    }
    out.push_back(normalize_pair(window_at(gt, input, manifest.patch_size, s.column_offset)));
  }
  return out;
}

}  // namespace octrecon::dataio
