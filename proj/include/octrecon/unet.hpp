#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "octrecon/ops.hpp"
#include "octrecon/tensor.hpp"

namespace octrecon::unet {

using nn::BasicTensor;
using nn::Param;
using nn::Shape;
using nn::Tensor;

struct UNetConfig {
  int depth = 5;
  int base_channels = 48;
  int in_channels = 2;
  int out_channels = 1;

  void validate() const;
  bool operator==(const UNetConfig&) const = default;
};

/// One 3x3 convolution of the channel table.
struct ConvSpec {
  std::string name;  // e.g. "down2.conv1"
  int in_channels;
  int out_channels;
};

/// Canonical convolution order: down1..downD (conv1, conv2), upD..up1
/// (conv1, conv2), final.conv.
///   down i: c_{i-1} -> c_i -> c_i, with c_0 = in_channels, c_1 = base, c_i = 2 c_{i-1}
///   up i:   2 c_i -> c_i -> (i > 1 ? c_{i-1} : c_1)
///   final:  c_1 -> out_channels (linear)
std::vector<ConvSpec> channel_table(const UNetConfig& config);

/// Exact parameter count implied by the channel table.
std::size_t parameter_count(const UNetConfig& config);

template <typename T>
struct NamedParam {
  std::string name;  // "<conv>.weight" or "<conv>.bias"
  Param<T> param;
};

/// Activations kept by a training forward pass for the backward pass.
template <typename T>
struct ForwardCache {
  std::vector<BasicTensor<T>> conv_inputs;
  std::vector<BasicTensor<T>> pre_activations;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<Shape> pool_input_shapes;
  std::vector<Shape> upsample_input_shapes;
};

template <typename T>
class BasicUNet {
 public:
  BasicUNet() = default;
  BasicUNet(UNetConfig config, std::vector<NamedParam<T>> params);

  const UNetConfig& config() const { return config_; }
  std::vector<NamedParam<T>>& params() { return params_; }
  const std::vector<NamedParam<T>>& params() const { return params_; }
  Param<T>& param(const std::string& name);
  const Param<T>& param(const std::string& name) const;
  std::size_t parameter_count() const;

  /// Inference. Input [B, in_channels, H, W] with H, W divisible by 2^depth.
  BasicTensor<T> forward(const BasicTensor<T>& x) const;

  /// Forward pass that records what backward() needs.
  BasicTensor<T> forward(const BasicTensor<T>& x, ForwardCache<T>& cache) const;

  /// Accumulates d loss / d param into every param.grad. Returns d loss / d input.
  BasicTensor<T> backward(const ForwardCache<T>& cache, const BasicTensor<T>& grad_output);

  void zero_grad();

  template <typename U>
  BasicUNet<U> cast() const {
    std::vector<NamedParam<U>> out;
    for (const auto& p : params_) out.push_back({p.name, Param<U>(p.param.value.template cast<U>())});
    return BasicUNet<U>(config_, std::move(out));
  }

 private:
  BasicTensor<T> run(const BasicTensor<T>& x, ForwardCache<T>* cache) const;

  UNetConfig config_;
  std::vector<NamedParam<T>> params_;
  std::map<std::string, std::size_t> index_;
};

using UNetModel = BasicUNet<float>;

/// He-uniform weights (fan_in = 9 * in_channels), zero biases.
template <typename T = float>
BasicUNet<T> build(const UNetConfig& config, std::uint64_t seed);

/// (mean, standard deviation) used to standardize one channel.
struct ChannelNorm {
  double mean = 0.0;
  double std = 1.0;
};

/// Standardized network pair. norm_meta holds input real, input imaginary,
/// target amplitude, in that order.
struct TrainSample {
  Tensor input;   // [2, P, P]
  Tensor target;  // [1, P, P]
  std::array<ChannelNorm, 3> norm_meta{};
};

/// Forward, L1 loss, backward, Adam on every parameter. Returns the pre-update loss.
double train_step(UNetModel& model, const std::vector<const TrainSample*>& batch, double learning_rate);

/// Stacks samples into [B, C, P, P] network tensors.
std::pair<Tensor, Tensor> stack_batch(const std::vector<const TrainSample*>& batch);

struct StepRecord {
  int epoch = 0;
  int step = 0;
  double loss = 0.0;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_mean_loss;
};

struct TrainOptions {
  int epochs = 1;
  double learning_rate = 1e-4;
  std::size_t batch_size = 3;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> checkpoint;  // rewritten after every epoch
  std::function<void(const StepRecord&)> on_step;
};

/// Seeded per-epoch shuffling; ceil(n / batch_size) steps per epoch.
TrainLog train(UNetModel& model, const std::vector<TrainSample>& dataset, const TrainOptions& options);

// Model file: "OCTM1", uint32 LE header length, JSON header (config, tensor
// directory with offsets relative to the payload, free-form meta), then
// float32 LE values in directory order.
void save(const UNetModel& model, const std::filesystem::path& path,
          const std::map<std::string, std::string>& meta = {});

struct LoadedModel {
  UNetModel model;
  std::map<std::string, std::string> meta;
};

/// Throws FormatError on corrupt/truncated files and ShapeError (naming the
/// tensor) when a tensor disagrees with the channel table, or with
/// `expected` when given.
LoadedModel load(const std::filesystem::path& path, const std::optional<UNetConfig>& expected = std::nullopt);

}  // namespace octrecon::unet
