#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "octrecon/tensor.hpp"

// Forward/backward kernels for the operators used by the U-Net. Every kernel
// is a pure function of its arguments. Templates are instantiated for float
// (training and inference) and double (gradient checking).
namespace octrecon::nn {

inline constexpr double kLeakySlope = 0.1;

// 3x3 convolution, stride 1, zero padding 1: [B,Cin,H,W] x [Cout,Cin,3,3] -> [B,Cout,H,W].
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

template <typename T>
struct Conv2dGrads {
  BasicTensor<T> input;  // empty when not requested
  BasicTensor<T> weight;
  BasicTensor<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                               const BasicTensor<T>& grad_output, bool want_input_grad = true);

// x for x > 0, 0.1 x otherwise. The x <= 0 branch owns the boundary for the derivative.
template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_output);

// 2x2 max pooling, stride 2. `argmax` receives the flat input index chosen
// for every output element (first maximum in row-major window order).
template <typename T>
BasicTensor<T> maxpool2(const BasicTensor<T>& x, std::vector<std::uint32_t>* argmax = nullptr);

template <typename T>
BasicTensor<T> maxpool2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                                 const BasicTensor<T>& grad_output);

// Bilinear x2 upsampling, half-pixel centres, coordinates clamped to the input.
template <typename T>
BasicTensor<T> upsample_bilinear2(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> upsample_bilinear2_backward(const Shape& input_shape, const BasicTensor<T>& grad_output);

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b);

// Splits along channels at `first_channels`: returns (first, rest).
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& x, std::size_t first_channels);

template <typename T>
struct LossResult {
  double value = 0.0;
  BasicTensor<T> grad;  // d loss / d pred
};

// Mean absolute error; gradient sign(pred - target) / count with sign(0) = 0.
template <typename T>
LossResult<T> l1_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update from param.grad; increments step_count.
template <typename T>
void adam_step(Param<T>& param, double learning_rate, const AdamConfig& config = {});

// Uniform on [-sqrt(6/fan_in), sqrt(6/fan_in)].
template <typename T>
BasicTensor<T> he_init(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng);

}  // namespace octrecon::nn
