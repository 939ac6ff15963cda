#include "octrecon/unet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "octrecon/binio.hpp"
#include "octrecon/errors.hpp"

namespace octrecon::unet {
namespace {

constexpr char kModelMagic[5] = {'O', 'C', 'T', 'M', '1'};
constexpr std::uint32_t kMaxHeaderBytes = 64u << 20;

std::size_t conv_count(const UNetConfig& c) { return static_cast<std::size_t>(4 * c.depth + 1); }
std::size_t down_conv(int level, int which) { return static_cast<std::size_t>(2 * (level - 1) + which); }
std::size_t up_conv(const UNetConfig& c, int level, int which) {
  return static_cast<std::size_t>(2 * c.depth + 2 * (c.depth - level) + which);
}

nlohmann::json config_json(const UNetConfig& c) {
  return {{"depth", c.depth}, {"base_channels", c.base_channels}, {"in_channels", c.in_channels},
          {"out_channels", c.out_channels}};
}

UNetConfig config_from_json(const nlohmann::json& j) {
  UNetConfig c;
  c.depth = j.at("depth").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.in_channels = j.at("in_channels").get<int>();
  c.out_channels = j.at("out_channels").get<int>();
  return c;
}

}  // namespace

void UNetConfig::validate() const {
  if (depth < 1 || depth > 12) throw InvalidArgument("unet: depth must be in [1, 12]");
  if (base_channels < 1 || in_channels < 1 || out_channels < 1) {
    throw InvalidArgument("unet: channel counts must be >= 1");
  }
}

std::vector<ConvSpec> channel_table(const UNetConfig& config) {
  config.validate();
  std::vector<int> c(static_cast<std::size_t>(config.depth) + 1);
  c[0] = config.in_channels;
  c[1] = config.base_channels;
  for (int i = 2; i <= config.depth; ++i) c[static_cast<std::size_t>(i)] = 2 * c[static_cast<std::size_t>(i - 1)];
  std::vector<ConvSpec> table;
  for (int i = 1; i <= config.depth; ++i) {
    const std::string block = "down" + std::to_string(i);
    table.push_back({block + ".conv1", c[static_cast<std::size_t>(i - 1)], c[static_cast<std::size_t>(i)]});
    table.push_back({block + ".conv2", c[static_cast<std::size_t>(i)], c[static_cast<std::size_t>(i)]});
  }
  for (int i = config.depth; i >= 1; --i) {
    const std::string block = "up" + std::to_string(i);
    const int ci = c[static_cast<std::size_t>(i)];
    table.push_back({block + ".conv1", 2 * ci, ci});
    table.push_back({block + ".conv2", ci, i > 1 ? c[static_cast<std::size_t>(i - 1)] : ci});
  }
  table.push_back({"final.conv", c[1], config.out_channels});
  return table;
}

std::size_t parameter_count(const UNetConfig& config) {
  std::size_t total = 0;
  for (const auto& conv : channel_table(config)) {
    total += static_cast<std::size_t>(9 * conv.in_channels + 1) * static_cast<std::size_t>(conv.out_channels);
  }
  return total;
}

template <typename T>
BasicUNet<T>::BasicUNet(UNetConfig config, std::vector<NamedParam<T>> params)
    : config_(config), params_(std::move(params)) {
  const auto table = channel_table(config_);
  if (params_.size() != 2 * table.size()) {
    throw ShapeError("unet: expected " + std::to_string(2 * table.size()) + " tensors, got " +
                     std::to_string(params_.size()));
  }
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& conv = table[k];
    const Shape wshape{static_cast<std::size_t>(conv.out_channels), static_cast<std::size_t>(conv.in_channels), 3, 3};
    const Shape bshape{static_cast<std::size_t>(conv.out_channels)};
    const auto& w = params_[2 * k];
    const auto& b = params_[2 * k + 1];
    if (w.name != conv.name + ".weight" || w.param.value.shape != wshape) {
      throw ShapeError("unet: tensor " + conv.name + ".weight expected " + nn::shape_string(wshape) + ", got " +
                       w.name + " " + nn::shape_string(w.param.value.shape));
    }
    if (b.name != conv.name + ".bias" || b.param.value.shape != bshape) {
      throw ShapeError("unet: tensor " + conv.name + ".bias expected " + nn::shape_string(bshape) + ", got " + b.name +
                       " " + nn::shape_string(b.param.value.shape));
    }
  }
  for (std::size_t i = 0; i < params_.size(); ++i) index_[params_[i].name] = i;
}

template <typename T>
Param<T>& BasicUNet<T>::param(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unet: no parameter named " + name);
  return params_[it->second].param;
}

template <typename T>
const Param<T>& BasicUNet<T>::param(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw InvalidArgument("unet: no parameter named " + name);
  return params_[it->second].param;
}

template <typename T>
std::size_t BasicUNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.param.value.size();
  return n;
}

template <typename T>
void BasicUNet<T>::zero_grad() {
  for (auto& p : params_) p.param.zero_grad();
}

template <typename T>
BasicTensor<T> BasicUNet<T>::forward(const BasicTensor<T>& x) const {
  return run(x, nullptr);
}

template <typename T>
BasicTensor<T> BasicUNet<T>::forward(const BasicTensor<T>& x, ForwardCache<T>& cache) const {
  return run(x, &cache);
}

template <typename T>
BasicTensor<T> BasicUNet<T>::run(const BasicTensor<T>& x, ForwardCache<T>* cache) const {
  if (x.rank() != 4) throw ShapeError("unet forward: expected [B,C,H,W], got " + nn::shape_string(x.shape));
  if (x.c() != static_cast<std::size_t>(config_.in_channels)) {
    throw ShapeError("unet forward: expected " + std::to_string(config_.in_channels) + " input channels, got " +
                     nn::shape_string(x.shape));
  }
  const std::size_t multiple = std::size_t{1} << config_.depth;
  if (x.h() % multiple != 0 || x.w() % multiple != 0) {
    throw ShapeError("unet forward: H and W must be divisible by " + std::to_string(multiple) + ", got " +
                     nn::shape_string(x.shape));
  }
  if (cache) {
    *cache = ForwardCache<T>{};
    cache->conv_inputs.resize(conv_count(config_));
    cache->pre_activations.resize(conv_count(config_));
  }

  auto conv = [&](std::size_t k, BasicTensor<T> input, bool activate) {
    auto pre = nn::conv2d(input, params_[2 * k].param.value, params_[2 * k + 1].param.value);
    if (!activate) return pre;
    auto post = nn::leaky_relu(pre);
    if (cache) {
      cache->conv_inputs[k] = std::move(input);
      cache->pre_activations[k] = std::move(pre);
    }
    return post;
  };

  std::vector<BasicTensor<T>> skips;
  BasicTensor<T> h = x;
  for (int i = 1; i <= config_.depth; ++i) {
    h = conv(down_conv(i, 0), std::move(h), true);
    h = conv(down_conv(i, 1), std::move(h), true);
    skips.push_back(h);
    if (cache) {
      cache->pool_input_shapes.push_back(h.shape);
      cache->pool_argmax.emplace_back();
      h = nn::maxpool2(h, &cache->pool_argmax.back());
    } else {
      h = nn::maxpool2(h);
    }
  }
  for (int i = config_.depth; i >= 1; --i) {
    if (cache) cache->upsample_input_shapes.push_back(h.shape);
    auto up = nn::upsample_bilinear2(h);
    h = nn::concat_channels(skips[static_cast<std::size_t>(i - 1)], up);
    skips[static_cast<std::size_t>(i - 1)] = {};
    h = conv(up_conv(config_, i, 0), std::move(h), true);
    h = conv(up_conv(config_, i, 1), std::move(h), true);
  }
  const std::size_t last = conv_count(config_) - 1;
  if (cache) cache->conv_inputs[last] = h;
  auto out = conv(last, std::move(h), false);
  nn::require_finite(out, "unet forward output");
  return out;
}

template <typename T>
BasicTensor<T> BasicUNet<T>::backward(const ForwardCache<T>& cache, const BasicTensor<T>& grad_output) {
  if (cache.conv_inputs.size() != conv_count(config_)) throw InvalidArgument("unet backward: cache from another model");

  auto accumulate = [&](std::size_t k, const nn::Conv2dGrads<T>& g) {
    auto& w = params_[2 * k].param.grad;
    auto& b = params_[2 * k + 1].param.grad;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += g.weight[i];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += g.bias[i];
  };
  auto conv_back = [&](std::size_t k, const BasicTensor<T>& g, bool activated) {
    BasicTensor<T> local = activated ? nn::leaky_relu_backward(cache.pre_activations[k], g) : g;
    auto grads = nn::conv2d_backward(cache.conv_inputs[k], params_[2 * k].param.value, local, true);
    accumulate(k, grads);
    return std::move(grads.input);
  };

  const std::size_t depth = static_cast<std::size_t>(config_.depth);
  BasicTensor<T> g = conv_back(conv_count(config_) - 1, grad_output, false);

  std::vector<BasicTensor<T>> skip_grads(depth);
  // Up blocks were run depth..1; undo them 1..depth.
  for (int i = 1; i <= config_.depth; ++i) {
    g = conv_back(up_conv(config_, i, 1), g, true);
    g = conv_back(up_conv(config_, i, 0), g, true);
    const std::size_t skip_channels = cache.pool_input_shapes[static_cast<std::size_t>(i - 1)][1];
    auto [g_skip, g_up] = nn::split_channels(g, skip_channels);
    skip_grads[static_cast<std::size_t>(i - 1)] = std::move(g_skip);
    const auto& up_shape = cache.upsample_input_shapes[depth - static_cast<std::size_t>(i)];
    g = nn::upsample_bilinear2_backward(up_shape, g_up);
  }
  for (int i = config_.depth; i >= 1; --i) {
    const std::size_t level = static_cast<std::size_t>(i - 1);
    g = nn::maxpool2_backward(cache.pool_input_shapes[level], cache.pool_argmax[level], g);
    const auto& sg = skip_grads[level];
    for (std::size_t e = 0; e < g.size(); ++e) g[e] += sg[e];
    g = conv_back(down_conv(i, 1), g, true);
    g = conv_back(down_conv(i, 0), g, true);
  }
  return g;
}

template <typename T>
BasicUNet<T> build(const UNetConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<NamedParam<T>> params;
  for (const auto& conv : channel_table(config)) {
    const auto cout = static_cast<std::size_t>(conv.out_channels);
    const auto cin = static_cast<std::size_t>(conv.in_channels);
    params.push_back({conv.name + ".weight", Param<T>(nn::he_init<T>({cout, cin, 3, 3}, 9 * cin, rng))});
    params.push_back({conv.name + ".bias", Param<T>(BasicTensor<T>({cout}))});
  }
  return BasicUNet<T>(config, std::move(params));
}

std::pair<Tensor, Tensor> stack_batch(const std::vector<const TrainSample*>& batch) {
  if (batch.empty()) throw InvalidArgument("stack_batch: empty batch");
  const Shape in_shape = batch.front()->input.shape;
  const Shape tg_shape = batch.front()->target.shape;
  if (in_shape.size() != 3 || tg_shape.size() != 3) throw ShapeError("stack_batch: samples must be [C,P,P]");
  Tensor x({batch.size(), in_shape[0], in_shape[1], in_shape[2]});
  Tensor y({batch.size(), tg_shape[0], tg_shape[1], tg_shape[2]});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b]->input.shape != in_shape || batch[b]->target.shape != tg_shape) {
      throw ShapeError("stack_batch: non-uniform patch sizes in batch");
    }
    std::copy(batch[b]->input.data.begin(), batch[b]->input.data.end(), x.data.begin() + static_cast<long>(b * batch[b]->input.size()));
    std::copy(batch[b]->target.data.begin(), batch[b]->target.data.end(), y.data.begin() + static_cast<long>(b * batch[b]->target.size()));
  }
  return {std::move(x), std::move(y)};
}

double train_step(UNetModel& model, const std::vector<const TrainSample*>& batch, double learning_rate) {
  auto [x, y] = stack_batch(batch);
  model.zero_grad();
  ForwardCache<float> cache;
  const auto out = model.forward(x, cache);
  const auto loss = nn::l1_loss(out, y);
  if (!std::isfinite(loss.value)) throw NumericError("train_step: non-finite loss");
  model.backward(cache, loss.grad);
  for (auto& p : model.params()) {
    nn::require_finite(p.param.grad, "gradient of " + p.name);
    nn::adam_step(p.param, learning_rate);
  }
  return loss.value;
}

TrainLog train(UNetModel& model, const std::vector<TrainSample>& dataset, const TrainOptions& options) {
  if (dataset.empty()) throw InvalidArgument("train: empty dataset");
  if (options.batch_size == 0) throw InvalidArgument("train: batch size must be >= 1");
  if (options.epochs < 1) throw InvalidArgument("train: epochs must be >= 1");
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(dataset.size());
  TrainLog log;
  int step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    int epoch_steps = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      std::vector<const TrainSample*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + options.batch_size); ++i) {
        batch.push_back(&dataset[order[i]]);
      }
      const auto t0 = std::chrono::steady_clock::now();
      const double loss = train_step(model, batch, options.learning_rate);
      const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      StepRecord rec{epoch, step++, loss, seconds};
      log.steps.push_back(rec);
      if (options.on_step) options.on_step(rec);
      epoch_sum += loss;
      ++epoch_steps;
    }
    log.epoch_mean_loss.push_back(epoch_sum / epoch_steps);
    if (options.checkpoint) {
      save(model, *options.checkpoint, {{"epoch", std::to_string(epoch + 1)}});
    }
  }
  return log;
}

void save(const UNetModel& model, const std::filesystem::path& path, const std::map<std::string, std::string>& meta) {
  nlohmann::json header;
  header["config"] = config_json(model.config());
  header["meta"] = meta;
  nlohmann::json dir = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& p : model.params()) {
    dir.push_back({{"name", p.name}, {"shape", p.param.value.shape}, {"offset", offset},
                   {"count", p.param.value.size()}});
    offset += p.param.value.size() * sizeof(float);
  }
  header["tensors"] = dir;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write model file: " + path.string());
  out.write(kModelMagic, sizeof(kModelMagic));
  binio::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : model.params()) {
    for (float v : p.param.value.data) binio::write_le(out, v);
  }
  if (!out) throw InvalidArgument("failed writing model file: " + path.string());
}

LoadedModel load(const std::filesystem::path& path, const std::optional<UNetConfig>& expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open model file: " + path.string());
  const std::string what = "model file " + path.string();
  char magic[5];
  in.read(magic, 5);
  if (in.gcount() != 5 || !std::equal(magic, magic + 5, kModelMagic)) {
    throw FormatError(what + ": bad magic at byte offset 0");
  }
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

  nlohmann::json header;
  UNetConfig config;
  try {
    header = nlohmann::json::parse(text);
    config = config_from_json(header.at("config"));
    config.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": corrupt header: " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": invalid config: " + e.what());
  }
  const auto& reference = expected ? *expected : config;
  const auto table = channel_table(reference);

  std::map<std::string, nlohmann::json> directory;
  try {
    for (const auto& entry : header.at("tensors")) directory[entry.at("name").get<std::string>()] = entry;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(what + ": corrupt tensor directory: " + e.what());
  }

  // Shapes are validated before any payload is read.
  struct Slot {
    std::string name;
    Shape shape;
    std::uint64_t offset;
  };
  std::vector<Slot> slots;
  for (const auto& conv : table) {
    const auto cout = static_cast<std::size_t>(conv.out_channels);
    const auto cin = static_cast<std::size_t>(conv.in_channels);
    for (const auto& [suffix, shape] : {std::pair<std::string, Shape>{".weight", {cout, cin, 3, 3}},
                                        std::pair<std::string, Shape>{".bias", {cout}}}) {
      const std::string name = conv.name + suffix;
      const auto it = directory.find(name);
      if (it == directory.end()) throw ShapeError(what + ": missing tensor " + name);
      Shape stored;
      std::uint64_t tensor_offset = 0;
      std::size_t count = 0;
      try {
        stored = it->second.at("shape").get<Shape>();
        tensor_offset = it->second.at("offset").get<std::uint64_t>();
        count = it->second.at("count").get<std::size_t>();
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(what + ": corrupt entry for " + name + ": " + e.what());
      }
      if (stored != shape) {
        throw ShapeError(what + ": tensor " + name + " has shape " + nn::shape_string(stored) + ", expected " +
                         nn::shape_string(shape));
      }
      if (count != nn::element_count(shape)) throw FormatError(what + ": element count mismatch for " + name);
      slots.push_back({name, shape, tensor_offset});
    }
  }

  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::uint64_t needed = 0;
  for (const auto& s : slots) needed = std::max<std::uint64_t>(needed, s.offset + nn::element_count(s.shape) * sizeof(float));
  if (payload.size() < needed) {
    throw FormatError(what + ": payload truncated, expected " + std::to_string(needed) + " bytes after offset " +
                      std::to_string(offset) + ", found " + std::to_string(payload.size()));
  }
  std::vector<NamedParam<float>> params;
  for (const auto& s : slots) {
    Tensor t(s.shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
      float v;
      std::memcpy(&v, payload.data() + s.offset + i * sizeof(float), sizeof(float));
      t[i] = binio::byteswap_if_big(v);
    }
    params.push_back({s.name, Param<float>(std::move(t))});
  }
  LoadedModel loaded{UNetModel(reference, std::move(params)), {}};
  if (header.contains("meta")) {
    try {
      loaded.meta = header["meta"].get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(what + ": corrupt meta: " + e.what());
    }
  }
  return loaded;
}

template class BasicUNet<float>;
template class BasicUNet<double>;
template BasicUNet<float> build<float>(const UNetConfig&, std::uint64_t);
template BasicUNet<double> build<double>(const UNetConfig&, std::uint64_t);

}  // namespace octrecon::unet
