#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace bss {

// Linear convolution of x with h via FFT overlap-add, truncated (or zero
// extended) to `length` samples. length 0 means |x| + |h| - 1.
std::vector<double> convolve(std::span<const double> x,
                             std::span<const double> h, std::size_t length = 0);

// Full cross-correlation c[lag] = sum_s a[s] * b[s + lag] for
// lag in [-max_lag, max_lag]; element 0 of the result is lag -max_lag.
std::vector<double> cross_correlation(std::span<const double> a,
                                      std::span<const double> b, int max_lag);

double energy(std::span<const double> x);

double db10(double ratio);

// Pink (1/f) noise with unit RMS.
std::vector<double> pink_noise(std::size_t length, std::uint64_t seed);

// White Gaussian noise with unit variance.
std::vector<double> white_noise(std::size_t length, std::uint64_t seed);

// Speech-like test signal: voiced syllables (glottal pulse trains through
// three formant resonators with gliding pitch) and occasional fricatives,
// separated by pauses. Peak-normalized to 0.5.
std::vector<double> speech_like(double duration_s, int sample_rate,
                                std::uint64_t seed);

}  // namespace bss
