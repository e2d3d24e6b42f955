#pragma once

#include <complex>
#include <span>
#include <vector>

namespace llmcodec {

/// In-place iterative radix-2 FFT (forward: e^{-i...}); size must be a power of two.
void fft_inplace(std::span<std::complex<double>> data, bool inverse = false);

bool is_power_of_two(std::size_t n);

}  // namespace llmcodec
