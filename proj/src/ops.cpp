#include "octrecon/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace octrecon::nn {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

// Upper bound on im2col buffer elements per chunk of output rows.
constexpr std::size_t kColumnBudget = std::size_t{1} << 21;

void require_rank4(const Shape& s, const char* what) {
  if (s.size() != 4) throw ShapeError(std::string(what) + ": expected a rank-4 tensor, got " + shape_string(s));
}

std::size_t rows_per_chunk(std::size_t k, std::size_t h, std::size_t w) {
  const std::size_t per_row = k * w;
  return std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_row, 1), 1, h);
}

// col[(ci*9 + ky*3 + kx), (y - y0)*W + x] = in[ci, y + ky - 1, x + kx - 1] (zero outside).
template <typename T>
void im2col(const T* in, std::size_t cin, std::size_t h, std::size_t w, std::size_t y0, std::size_t y1, T* col) {
  const std::size_t pixels = (y1 - y0) * w;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const T* plane = in + ci * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        T* dst = col + (ci * 9 + static_cast<std::size_t>(ky * 3 + kx)) * pixels;
        for (std::size_t y = y0; y < y1; ++y) {
          T* row = dst + (y - y0) * w;
          const long sy = static_cast<long>(y) + ky - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(row, row + w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(sy) * w;
          if (kx == 0) {
            row[0] = T(0);
            std::copy(src, src + w - 1, row + 1);
          } else if (kx == 1) {
            std::copy(src, src + w, row);
          } else {
            std::copy(src + 1, src + w, row);
            row[w - 1] = T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t cin, std::size_t h, std::size_t w, std::size_t y0, std::size_t y1, T* out) {
  const std::size_t pixels = (y1 - y0) * w;
  for (std::size_t ci = 0; ci < cin; ++ci) {
    T* plane = out + ci * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const T* src = col + (ci * 9 + static_cast<std::size_t>(ky * 3 + kx)) * pixels;
        for (std::size_t y = y0; y < y1; ++y) {
          const long sy = static_cast<long>(y) + ky - 1;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const T* row = src + (y - y0) * w;
          T* dst = plane + static_cast<std::size_t>(sy) * w;
          if (kx == 0) {
            for (std::size_t x = 1; x < w; ++x) dst[x - 1] += row[x];
          } else if (kx == 1) {
            for (std::size_t x = 0; x < w; ++x) dst[x] += row[x];
          } else {
            for (std::size_t x = 0; x + 1 < w; ++x) dst[x + 1] += row[x];
          }
        }
      }
    }
  }
}

void check_conv_shapes(const Shape& in, const Shape& weight, const Shape& bias) {
  require_rank4(in, "conv2d input");
  require_rank4(weight, "conv2d weight");
  if (weight[2] != 3 || weight[3] != 3) throw ShapeError("conv2d: kernel must be 3x3, got " + shape_string(weight));
  if (weight[1] != in[1]) {
    throw ShapeError("conv2d: channel mismatch, input " + shape_string(in) + " vs weight " + shape_string(weight));
  }
  if (bias.size() != 1 || bias[0] != weight[0]) {
    throw ShapeError("conv2d: bias shape " + shape_string(bias) + " does not match " + std::to_string(weight[0]) +
                     " output channels");
  }
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
void require_finite(const BasicTensor<T>& t, const std::string& what) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t.data[i])) {
      throw NumericError(what + ": non-finite value at element " + std::to_string(i));
    }
  }
}

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& weight, const BasicTensor<T>& bias) {
  check_conv_shapes(input.shape, weight.shape, bias.shape);
  const std::size_t batch = input.n(), cin = input.c(), h = input.h(), w = input.w();
  const std::size_t cout = weight.dim(0);
  const std::size_t k = cin * 9;
  const std::size_t hw = h * w;
  BasicTensor<T> out({batch, cout, h, w});
  ConstMatrixMap<T> wm(weight.data.data(), cout, k, Eigen::OuterStride<>(k));
  const std::size_t chunk = rows_per_chunk(k, h, w);
  std::vector<T> col(k * chunk * w);

  for (std::size_t b = 0; b < batch; ++b) {
    const T* in = input.data.data() + b * cin * hw;
    T* o = out.data.data() + b * cout * hw;
    for (std::size_t y0 = 0; y0 < h; y0 += chunk) {
      const std::size_t y1 = std::min(h, y0 + chunk);
      const std::size_t pixels = (y1 - y0) * w;
      im2col(in, cin, h, w, y0, y1, col.data());
      ConstMatrixMap<T> cm(col.data(), k, pixels, Eigen::OuterStride<>(pixels));
      MatrixMap<T> om(o + y0 * w, cout, pixels, Eigen::OuterStride<>(hw));
      om.noalias() = wm * cm;
    }
    for (std::size_t co = 0; co < cout; ++co) {
      const T bv = bias[co];
      T* plane = o + co * hw;
      for (std::size_t i = 0; i < hw; ++i) plane[i] += bv;
    }
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                               const BasicTensor<T>& grad_output, bool want_input_grad) {
  check_conv_shapes(input.shape, weight.shape, Shape{weight.shape.at(0)});
  const std::size_t batch = input.n(), cin = input.c(), h = input.h(), w = input.w();
  const std::size_t cout = weight.dim(0);
  if (grad_output.shape != Shape{batch, cout, h, w}) {
    throw ShapeError("conv2d_backward: grad_output shape " + shape_string(grad_output.shape));
  }
  const std::size_t k = cin * 9;
  const std::size_t hw = h * w;
  Conv2dGrads<T> g;
  g.weight = BasicTensor<T>(weight.shape);
  g.bias = BasicTensor<T>({cout});
  if (want_input_grad) g.input = BasicTensor<T>(input.shape);

  ConstMatrixMap<T> wm(weight.data.data(), cout, k, Eigen::OuterStride<>(k));
  MatrixMap<T> gw(g.weight.data.data(), cout, k, Eigen::OuterStride<>(k));
  const std::size_t chunk = rows_per_chunk(k, h, w);
  std::vector<T> col(k * chunk * w);
  std::vector<T> grad_col(want_input_grad ? k * chunk * w : 0);

  for (std::size_t b = 0; b < batch; ++b) {
    const T* in = input.data.data() + b * cin * hw;
    const T* go = grad_output.data.data() + b * cout * hw;
    for (std::size_t co = 0; co < cout; ++co) {
      const T* plane = go + co * hw;
      double s = 0.0;
      for (std::size_t i = 0; i < hw; ++i) s += plane[i];
      g.bias[co] += static_cast<T>(s);
    }
    for (std::size_t y0 = 0; y0 < h; y0 += chunk) {
      const std::size_t y1 = std::min(h, y0 + chunk);
      const std::size_t pixels = (y1 - y0) * w;
      im2col(in, cin, h, w, y0, y1, col.data());
      ConstMatrixMap<T> cm(col.data(), k, pixels, Eigen::OuterStride<>(pixels));
      ConstMatrixMap<T> gm(go + y0 * w, cout, pixels, Eigen::OuterStride<>(hw));
      gw.noalias() += gm * cm.transpose();
      if (want_input_grad) {
        MatrixMap<T> gc(grad_col.data(), k, pixels, Eigen::OuterStride<>(pixels));
        gc.noalias() = wm.transpose() * gm;
        col2im_add(grad_col.data(), cin, h, w, y0, y1, g.input.data.data() + b * cin * hw);
      }
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& x) {
  BasicTensor<T> out = x;
  const T slope = static_cast<T>(kLeakySlope);
  for (auto& v : out.data) v = v > T(0) ? v : slope * v;
  return out;
}

template <typename T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_output) {
  if (x.shape != grad_output.shape) throw ShapeError("leaky_relu_backward: shape mismatch");
  BasicTensor<T> out = grad_output;
  const T slope = static_cast<T>(kLeakySlope);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(x[i] > T(0))) out[i] *= slope;
  }
  return out;
}

template <typename T>
BasicTensor<T> maxpool2(const BasicTensor<T>& x, std::vector<std::uint32_t>* argmax) {
  require_rank4(x.shape, "maxpool2");
  const std::size_t batch = x.n(), ch = x.c(), h = x.h(), w = x.w();
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("maxpool2: spatial dims must be even, got " + shape_string(x.shape));
  const std::size_t oh = h / 2, ow = w / 2;
  BasicTensor<T> out({batch, ch, oh, ow});
  if (argmax) argmax->resize(out.size());
  std::size_t o = 0;
  for (std::size_t p = 0; p < batch * ch; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
        const std::size_t cand[4] = {base + (2 * y) * w + 2 * xx, base + (2 * y) * w + 2 * xx + 1,
                                     base + (2 * y + 1) * w + 2 * xx, base + (2 * y + 1) * w + 2 * xx + 1};
        std::size_t best = cand[0];
        for (int c = 1; c < 4; ++c) {
          if (x[cand[c]] > x[best]) best = cand[c];
        }
        out[o] = x[best];
        if (argmax) (*argmax)[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> maxpool2_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                                 const BasicTensor<T>& grad_output) {
  if (argmax.size() != grad_output.size()) throw ShapeError("maxpool2_backward: argmax/grad size mismatch");
  BasicTensor<T> g(input_shape);
  for (std::size_t i = 0; i < grad_output.size(); ++i) g[argmax[i]] += grad_output[i];
  return g;
}

namespace {

// Source taps of half-pixel x2 upsampling along one axis.
struct Tap {
  std::size_t lo, hi;
  double frac;
};

std::vector<Tap> upsample_taps(std::size_t in) {
  std::vector<Tap> taps(2 * in);
  const double limit = static_cast<double>(in - 1);
  for (std::size_t i = 0; i < 2 * in; ++i) {
    const double s = std::clamp((static_cast<double>(i) + 0.5) / 2.0 - 0.5, 0.0, limit);
    const auto lo = static_cast<std::size_t>(std::floor(s));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[i] = {lo, hi, s - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

template <typename T>
BasicTensor<T> upsample_bilinear2(const BasicTensor<T>& x) {
  require_rank4(x.shape, "upsample_bilinear2");
  const std::size_t batch = x.n(), ch = x.c(), h = x.h(), w = x.w();
  const auto ty = upsample_taps(h);
  const auto tx = upsample_taps(w);
  BasicTensor<T> out({batch, ch, 2 * h, 2 * w});
  std::size_t o = 0;
  for (std::size_t p = 0; p < batch * ch; ++p) {
    const T* src = x.data.data() + p * h * w;
    for (std::size_t i = 0; i < 2 * h; ++i) {
      const T fy = static_cast<T>(ty[i].frac);
      const T* r0 = src + ty[i].lo * w;
      const T* r1 = src + ty[i].hi * w;
      for (std::size_t j = 0; j < 2 * w; ++j, ++o) {
        const T fx = static_cast<T>(tx[j].frac);
        const T top = (T(1) - fx) * r0[tx[j].lo] + fx * r0[tx[j].hi];
        const T bottom = (T(1) - fx) * r1[tx[j].lo] + fx * r1[tx[j].hi];
        out[o] = (T(1) - fy) * top + fy * bottom;
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> upsample_bilinear2_backward(const Shape& input_shape, const BasicTensor<T>& grad_output) {
  require_rank4(input_shape, "upsample_bilinear2_backward");
  const std::size_t batch = input_shape[0], ch = input_shape[1], h = input_shape[2], w = input_shape[3];
  if (grad_output.shape != Shape{batch, ch, 2 * h, 2 * w}) {
    throw ShapeError("upsample_bilinear2_backward: grad_output shape " + shape_string(grad_output.shape));
  }
  const auto ty = upsample_taps(h);
  const auto tx = upsample_taps(w);
  BasicTensor<T> g(input_shape);
  std::size_t o = 0;
  for (std::size_t p = 0; p < batch * ch; ++p) {
    T* dst = g.data.data() + p * h * w;
    for (std::size_t i = 0; i < 2 * h; ++i) {
      const T fy = static_cast<T>(ty[i].frac);
      T* r0 = dst + ty[i].lo * w;
      T* r1 = dst + ty[i].hi * w;
      for (std::size_t j = 0; j < 2 * w; ++j, ++o) {
        const T fx = static_cast<T>(tx[j].frac);
        const T go = grad_output[o];
        r0[tx[j].lo] += (T(1) - fy) * (T(1) - fx) * go;
        r0[tx[j].hi] += (T(1) - fy) * fx * go;
        r1[tx[j].lo] += fy * (T(1) - fx) * go;
        r1[tx[j].hi] += fy * fx * go;
      }
    }
  }
  return g;
}

template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank4(a.shape, "concat_channels");
  require_rank4(b.shape, "concat_channels");
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError("concat_channels: mismatch " + shape_string(a.shape) + " vs " + shape_string(b.shape));
  }
  const std::size_t hw = a.h() * a.w();
  BasicTensor<T> out({a.n(), a.c() + b.c(), a.h(), a.w()});
  auto it = out.data.begin();
  for (std::size_t n = 0; n < a.n(); ++n) {
    it = std::copy_n(a.data.begin() + static_cast<long>(n * a.c() * hw), a.c() * hw, it);
    it = std::copy_n(b.data.begin() + static_cast<long>(n * b.c() * hw), b.c() * hw, it);
  }
  return out;
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& x, std::size_t first_channels) {
  require_rank4(x.shape, "split_channels");
  if (first_channels == 0 || first_channels >= x.c()) throw ShapeError("split_channels: split point out of range");
  const std::size_t hw = x.h() * x.w();
  const std::size_t rest = x.c() - first_channels;
  BasicTensor<T> a({x.n(), first_channels, x.h(), x.w()});
  BasicTensor<T> b({x.n(), rest, x.h(), x.w()});
  for (std::size_t n = 0; n < x.n(); ++n) {
    const auto src = x.data.begin() + static_cast<long>(n * x.c() * hw);
    std::copy_n(src, first_channels * hw, a.data.begin() + static_cast<long>(n * first_channels * hw));
    std::copy_n(src + static_cast<long>(first_channels * hw), rest * hw,
                b.data.begin() + static_cast<long>(n * rest * hw));
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
LossResult<T> l1_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target) {
  if (pred.shape != target.shape) {
    throw ShapeError("l1_loss: shape mismatch " + shape_string(pred.shape) + " vs " + shape_string(target.shape));
  }
  LossResult<T> r;
  r.grad = BasicTensor<T>(pred.shape);
  const double count = static_cast<double>(pred.size());
  const T scale = static_cast<T>(1.0 / count);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += std::abs(d);
    r.grad[i] = d > 0 ? scale : (d < 0 ? -scale : T(0));
  }
  r.value = sum / count;
  return r;
}

template <typename T>
void adam_step(Param<T>& param, double learning_rate, const AdamConfig& config) {
  ++param.step_count;
  const double t = static_cast<double>(param.step_count);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < param.value.size(); ++i) {
    const double g = param.grad[i];
    const double m = config.beta1 * param.adam_m[i] + (1.0 - config.beta1) * g;
    const double v = config.beta2 * param.adam_v[i] + (1.0 - config.beta2) * g * g;
    param.adam_m[i] = static_cast<T>(m);
    param.adam_v[i] = static_cast<T>(v);
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    param.value[i] = static_cast<T>(param.value[i] - learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
  }
}

template <typename T>
BasicTensor<T> he_init(const Shape& shape, std::size_t fan_in, std::mt19937_64& rng) {
  if (fan_in == 0) throw InvalidArgument("he_init: fan_in must be >= 1");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  BasicTensor<T> out(shape);
  for (auto& v : out.data) v = static_cast<T>(dist(rng));
  return out;
}

#define OCTRECON_INSTANTIATE_OPS(T)                                                                                \
  template void require_finite<T>(const BasicTensor<T>&, const std::string&);                                     \
  template BasicTensor<T> conv2d<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);         \
  template Conv2dGrads<T> conv2d_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                             bool);                                                               \
  template BasicTensor<T> leaky_relu<T>(const BasicTensor<T>&);                                                   \
  template BasicTensor<T> leaky_relu_backward<T>(const BasicTensor<T>&, const BasicTensor<T>&);                   \
  template BasicTensor<T> maxpool2<T>(const BasicTensor<T>&, std::vector<std::uint32_t>*);                        \
  template BasicTensor<T> maxpool2_backward<T>(const Shape&, const std::vector<std::uint32_t>&,                   \
                                               const BasicTensor<T>&);                                            \
  template BasicTensor<T> upsample_bilinear2<T>(const BasicTensor<T>&);                                           \
  template BasicTensor<T> upsample_bilinear2_backward<T>(const Shape&, const BasicTensor<T>&);                    \
  template BasicTensor<T> concat_channels<T>(const BasicTensor<T>&, const BasicTensor<T>&);                       \
  template std::pair<BasicTensor<T>, BasicTensor<T>> split_channels<T>(const BasicTensor<T>&, std::size_t);       \
  template LossResult<T> l1_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&);                                \
  template void adam_step<T>(Param<T>&, double, const AdamConfig&);                                               \
  template BasicTensor<T> he_init<T>(const Shape&, std::size_t, std::mt19937_64&);

OCTRECON_INSTANTIATE_OPS(float)
OCTRECON_INSTANTIATE_OPS(double)

#undef OCTRECON_INSTANTIATE_OPS

}  // namespace octrecon::nn
