#pragma once

#include <complex>
#include <span>
#include <vector>

namespace octrecon::dsp {

using Complex = std::complex<double>;
using ComplexVector = std::vector<Complex>;
using RealVector = std::vector<double>;

// Floor applied to amplitudes before taking the logarithm.
inline constexpr double kAmplitudeFloor = 1e-12;
inline constexpr double kDbFloor = -240.0;  // 20*log10(kAmplitudeFloor)

/// Symmetric Hann window, w[i] = 0.5 * (1 - cos(2*pi*i / (n-1))).
/// Throws InvalidArgument for n < 2.
RealVector hann_window(std::size_t n);

/// Forward DFT, X[k] = sum_n x[n] exp(-2*pi*i*k*n/N), for any N >= 1.
/// Powers of two use an iterative radix-2 kernel, other lengths go through
/// Bluestein's chirp-z reduction onto a power-of-two convolution.
ComplexVector dft(std::span<const Complex> x);

/// Inverse DFT including the 1/N normalisation.
ComplexVector idft(std::span<const Complex> x);

/// 20*log10(max(|z|, 1e-12)) per element.
RealVector magnitude_db(std::span<const Complex> z);

/// Promote a real signal to complex with zero imaginary part.
ComplexVector to_complex(std::span<const double> x);

}  // namespace octrecon::dsp
