#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "bss/numerics.hpp"

namespace bss {

// Real multichannel time signal, one vector per channel.
using MultiSignal = std::vector<std::vector<double>>;

enum class WindowKind { kHann };

struct StftConfig {
  int fft_size = 1024;
  int hop = 256;
  WindowKind window = WindowKind::kHann;
  int sample_rate = 16000;

  int num_bins() const { return fft_size / 2 + 1; }
  // Throws ConfigError unless fft_size is even, hop > 0 and hop | fft_size.
  void validate() const;
  bool operator==(const StftConfig&) const = default;
};

// One STFT frame: column i of `bins` is the M-channel observation x_i at
// frequency bin i. Bin count is fft_size / 2 + 1.
struct SpectralFrame {
  long index = 0;
  CMat bins;

  Index channels() const { return bins.rows(); }
  Index num_bins() const { return bins.cols(); }
};

// Periodic Hann window of the given length.
std::vector<double> hann_window(int length);

// Overlap-add normalization is floored at this fraction of the interior
// sum of squared windows, so partially covered edge samples are tapered
// rather than amplified.
inline constexpr double kEdgePowerFraction = 0.1;

// Number of frames produced for a signal of `length` samples. The last frame
// is zero padded.
long frame_count(std::size_t length, const StftConfig& cfg);

// Analysis/synthesis filter bank. Plans are created once per instance; the
// transforms themselves are const and safe to call concurrently.
class Stft {
 public:
  explicit Stft(const StftConfig& cfg);
  ~Stft();
  Stft(Stft&&) noexcept;
  Stft& operator=(Stft&&) noexcept;

  const StftConfig& config() const { return cfg_; }
  // Divisor for an overlap-add sample with accumulated squared window `power`.
  double synthesis_norm(double power) const { return std::max(power, norm_floor_); }

  const std::vector<double>& window() const { return window_; }

  // Frame j covers samples [j * hop, j * hop + fft_size).
  std::vector<SpectralFrame> analyze(const MultiSignal& signal) const;

  // One frame from samples [start, start + fft_size), zero beyond the end.
  SpectralFrame analyze_frame(const MultiSignal& signal, std::size_t start,
                              long index) const;

  // Windowed inverse transform of one frame (before overlap-add
  // normalization).
  void inverse_frame(const CVec& spectrum, std::vector<double>& out) const;

  // Weighted overlap-add. `length` 0 means (frames - 1) * hop + fft_size.
  MultiSignal synthesize(const std::vector<SpectralFrame>& frames,
                         std::size_t length = 0) const;

  // Single-channel spectra, used for synthesizing separated sources held as
  // N x I matrices.
  std::vector<double> synthesize_channel(const std::vector<CVec>& spectra,
                                         std::size_t length = 0) const;

 private:
  struct Plans;
  StftConfig cfg_;
  std::vector<double> window_;
  double norm_floor_ = 0.0;
  std::unique_ptr<Plans> plans_;
};

std::vector<SpectralFrame> analyze(const MultiSignal& signal,
                                   const StftConfig& cfg);
MultiSignal synthesize(const std::vector<SpectralFrame>& frames,
                       const StftConfig& cfg, std::size_t length = 0);

}  // namespace bss
