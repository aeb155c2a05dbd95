#include "bss/signals.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>
#include <random>

#include "bss/error.hpp"

namespace bss {
namespace {

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Real FFT pair of a fixed size with owned scratch buffers.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n), real_(n), spec_(n / 2 + 1) {
    std::lock_guard lock(planner_mutex());
    auto* spec = reinterpret_cast<fftw_complex*>(spec_.data());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_.data(), spec,
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real_.data(),
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }

  // Zero-pads `x` to the transform size.
  std::vector<std::complex<double>> forward(std::span<const double> x) {
    std::fill(real_.begin(), real_.end(), 0.0);
    std::copy_n(x.begin(), std::min(x.size(), n_), real_.begin());
    fftw_execute(forward_);
    return spec_;
  }

  // Unnormalized inverse; result is scaled by 1/n here.
  const std::vector<double>& inverse(
      const std::vector<std::complex<double>>& spec) {
    spec_ = spec;
    fftw_execute(inverse_);
    const double scale = 1.0 / static_cast<double>(n_);
    for (auto& v : real_) v *= scale;
    return real_;
  }

 private:
  std::size_t n_;
  std::vector<double> real_;
  std::vector<std::complex<double>> spec_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

// Two-pole resonator at `freq` Hz with bandwidth `bw` Hz, unit DC-free gain
// normalization at the centre frequency.
struct Resonator {
  double a1 = 0, a2 = 0, gain = 1, y1 = 0, y2 = 0;
  Resonator(double freq, double bw, double fs) {
    const double r = std::exp(-std::numbers::pi * bw / fs);
    const double theta = 2.0 * std::numbers::pi * freq / fs;
    a1 = 2.0 * r * std::cos(theta);
    a2 = -r * r;
    gain = 1.0 - r;
  }
  double operator()(double x) {
    const double y = gain * x + a1 * y1 + a2 * y2;
    y2 = y1;
    y1 = y;
    return y;
  }
};

}  // namespace

std::vector<double> convolve(std::span<const double> x,
                             std::span<const double> h, std::size_t length) {
  if (x.empty() || h.empty()) {
    throw ContractViolation("convolve: empty operand");
  }
  const std::size_t full = x.size() + h.size() - 1;
  if (length == 0) length = full;
  std::vector<double> out(length, 0.0);

  const std::size_t fft_size = next_pow2(std::max<std::size_t>(2 * h.size(), 1024));
  const std::size_t block = fft_size - h.size() + 1;
  RealFft fft(fft_size);
  const auto h_spec = fft.forward(h);
  const std::size_t limit = std::min(length, full);
  for (std::size_t start = 0; start < x.size() && start < limit; start += block) {
    const std::size_t count = std::min(block, x.size() - start);
    auto spec = fft.forward(x.subspan(start, count));
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= h_spec[k];
    const auto& y = fft.inverse(spec);
    const std::size_t span = std::min(count + h.size() - 1, limit - start);
    for (std::size_t t = 0; t < span; ++t) out[start + t] += y[t];
  }
  return out;
}

std::vector<double> cross_correlation(std::span<const double> a,
                                      std::span<const double> b, int max_lag) {
  if (a.empty() || b.empty() || max_lag < 0) {
    throw ContractViolation("cross_correlation: invalid arguments");
  }
  const std::size_t n = next_pow2(std::max(a.size(), b.size()) + max_lag + 1);
  RealFft fft(n);
  auto fa = fft.forward(a);
  const auto fb = fft.forward(b);
  for (std::size_t k = 0; k < fa.size(); ++k) fa[k] = std::conj(fa[k]) * fb[k];
  const auto& c = fft.inverse(fa);
  std::vector<double> out(2 * max_lag + 1);
  for (int lag = -max_lag; lag <= max_lag; ++lag) {
    const std::size_t idx = lag >= 0 ? lag : n + lag;
    out[lag + max_lag] = c[idx];
  }
  return out;
}

double energy(std::span<const double> x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

double db10(double ratio) { return 10.0 * std::log10(ratio); }

std::vector<double> white_noise(std::size_t length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(length);
  for (auto& v : out) v = dist(rng);
  return out;
}

std::vector<double> pink_noise(std::size_t length, std::uint64_t seed) {
  const auto white = white_noise(length, seed);
  // Paul Kellet's refined 1/f filter.
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  std::vector<double> out(length);
  for (std::size_t t = 0; t < length; ++t) {
    const double w = white[t];
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    out[t] = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
  }
  const double rms = std::sqrt(energy(out) / std::max<std::size_t>(length, 1));
  if (rms > 0) {
    for (auto& v : out) v /= rms;
  }
  return out;
}

std::vector<double> speech_like(double duration_s, int sample_rate,
                                std::uint64_t seed) {
  if (!(duration_s > 0) || sample_rate <= 0) {
    throw ContractViolation("speech_like: duration and rate must be positive");
  }
  const auto length = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  const double fs = sample_rate;
  std::vector<double> out(length, 0.0);
  std::mt19937_64 rng(seed);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  std::normal_distribution<double> gauss(0.0, 1.0);

  // Speaker traits stay fixed across the utterance.
  const double base_f0 = uniform(95.0, 220.0);
  const double tract = uniform(0.85, 1.15);

  std::size_t t = static_cast<std::size_t>(uniform(0.02, 0.2) * fs);
  while (t < length) {
    const auto syllable = static_cast<std::size_t>(uniform(0.12, 0.38) * fs);
    const double level = uniform(0.3, 1.0);
    const bool voiced = uniform(0.0, 1.0) < 0.85;
    const double f0_start = base_f0 * uniform(0.85, 1.2);
    const double f0_end = f0_start * uniform(0.8, 1.25);
    Resonator f1(uniform(300.0, 850.0) * tract, 90.0, fs);
    Resonator f2(uniform(900.0, 2300.0) * tract, 130.0, fs);
    Resonator f3(uniform(2300.0, 3300.0) * tract, 180.0, fs);
    Resonator hiss(uniform(3500.0, 6500.0), 1500.0, fs);

    std::vector<double> chunk(std::min(syllable, length - t));
    double phase = 0.0;
    for (std::size_t k = 0; k < chunk.size(); ++k) {
      const double progress = static_cast<double>(k) / syllable;
      if (voiced) {
        const double f0 = f0_start + (f0_end - f0_start) * progress;
        phase += f0 / fs;
        double pulse = 0.0;
        if (phase >= 1.0) {
          phase -= 1.0;
          pulse = 1.0;
        }
        chunk[k] = f3(f2(f1(pulse + 0.03 * gauss(rng))));
      } else {
        chunk[k] = hiss(gauss(rng));
      }
    }
    const double rms = std::sqrt(energy(chunk) / std::max<std::size_t>(chunk.size(), 1));
    for (std::size_t k = 0; k < chunk.size(); ++k) {
      const double progress = static_cast<double>(k) / syllable;
      const double envelope = std::pow(std::sin(std::numbers::pi * progress), 0.6);
      out[t + k] += rms > 0 ? level * envelope * chunk[k] / rms : 0.0;
    }
    t += syllable;
    // Pauses: short between syllables, occasionally longer between words.
    const double pause = uniform(0.0, 1.0) < 0.25 ? uniform(0.25, 0.6)
                                                   : uniform(0.03, 0.15);
    t += static_cast<std::size_t>(pause * fs);
  }

  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0) {
    for (auto& v : out) v *= 0.5 / peak;
  }
  return out;
}

}  // namespace bss
