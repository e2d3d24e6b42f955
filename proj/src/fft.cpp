#include "llmcodec/fft.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "llmcodec/error.hpp"

namespace llmcodec {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft_inplace(std::span<std::complex<double>> data, bool inverse) {
    const std::size_t n = data.size();
    if (!is_power_of_two(n)) throw Error(ErrorCode::InvalidArgument, "FFT size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(data[i], data[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        for (std::size_t k = 0; k < half; ++k) {
            // Twiddles computed directly per k keep the result independent of
            // any accumulated rounding in a recurrence.
            const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                                 static_cast<double>(len);
            const std::complex<double> w(std::cos(angle), std::sin(angle));
            for (std::size_t start = 0; start < n; start += len) {
                const auto u = data[start + k];
                const auto v = data[start + k + half] * w;
                data[start + k] = u + v;
                data[start + k + half] = u - v;
            }
        }
    }
}

}  // namespace llmcodec
