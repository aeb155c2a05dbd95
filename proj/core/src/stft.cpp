#include "bss/stft.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

#include "bss/error.hpp"

namespace bss {
namespace {

// FFTW's planner is not thread safe; execution on distinct buffers is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

void StftConfig::validate() const {
  if (fft_size < 2 || fft_size % 2 != 0) {
    throw ConfigError("stft.fft_size must be a positive even number");
  }
  if (hop <= 0 || fft_size % hop != 0) {
    throw ConfigError("stft.hop must be positive and divide fft_size");
  }
  if (sample_rate <= 0) {
    throw ConfigError("stft.sample_rate must be positive");
  }
}

std::vector<double> hann_window(int length) {
  std::vector<double> w(length);
  for (int t = 0; t < length; ++t) {
    w[t] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / length);
  }
  return w;
}

long frame_count(std::size_t length, const StftConfig& cfg) {
  const auto n = static_cast<long>(length);
  if (n <= cfg.fft_size) return 1;
  return (n - cfg.fft_size + cfg.hop - 1) / cfg.hop + 1;
}

struct Stft::Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;

  explicit Plans(int n) {
    std::vector<double> real(n);
    std::vector<fftw_complex> spec(n / 2 + 1);
    std::lock_guard lock(planner_mutex());
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    forward = fftw_plan_dft_r2c_1d(n, real.data(), spec.data(), flags);
    inverse = fftw_plan_dft_c2r_1d(n, spec.data(), real.data(), flags);
  }
  ~Plans() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(forward);
    fftw_destroy_plan(inverse);
  }
};

Stft::Stft(const StftConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  window_ = hann_window(cfg_.fft_size);
  double power = 0.0;
  for (const double w : window_) power += w * w;
  norm_floor_ = kEdgePowerFraction * power / cfg_.hop;
  plans_ = std::make_unique<Plans>(cfg_.fft_size);
}

Stft::~Stft() = default;
Stft::Stft(Stft&&) noexcept = default;
Stft& Stft::operator=(Stft&&) noexcept = default;

SpectralFrame Stft::analyze_frame(const MultiSignal& signal, std::size_t start,
                                  long index) const {
  const int n = cfg_.fft_size;
  const int bins = cfg_.num_bins();
  const auto channels = static_cast<Index>(signal.size());
  SpectralFrame frame;
  frame.index = index;
  frame.bins.resize(channels, bins);
  std::vector<double> buf(n);
  std::vector<Complex> spec(bins);
  for (Index m = 0; m < channels; ++m) {
    const auto& ch = signal[m];
    for (int t = 0; t < n; ++t) {
      const std::size_t s = start + t;
      buf[t] = s < ch.size() ? ch[s] * window_[t] : 0.0;
    }
    fftw_execute_dft_r2c(plans_->forward, buf.data(),
                         reinterpret_cast<fftw_complex*>(spec.data()));
    for (int i = 0; i < bins; ++i) frame.bins(m, i) = spec[i];
  }
  return frame;
}

std::vector<SpectralFrame> Stft::analyze(const MultiSignal& signal) const {
  if (signal.empty() || signal.front().empty()) {
    throw ContractViolation("stft analyze: empty signal");
  }
  const std::size_t length = signal.front().size();
  for (const auto& ch : signal) {
    if (ch.size() != length) {
      throw ContractViolation("stft analyze: channels have different lengths");
    }
  }
  if (length < static_cast<std::size_t>(cfg_.fft_size)) {
    throw ContractViolation("stft analyze: signal shorter than fft_size");
  }
  const long frames = frame_count(length, cfg_);
  std::vector<SpectralFrame> out;
  out.reserve(frames);
  for (long j = 0; j < frames; ++j) {
    out.push_back(analyze_frame(signal, static_cast<std::size_t>(j) * cfg_.hop, j));
  }
  return out;
}

void Stft::inverse_frame(const CVec& spectrum, std::vector<double>& out) const {
  const int n = cfg_.fft_size;
  const int bins = cfg_.num_bins();
  if (spectrum.size() != bins) {
    throw ContractViolation("stft synthesize: frame has " + std::to_string(spectrum.size()) +
                            " bins, config expects " + std::to_string(bins));
  }
  std::vector<Complex> spec(spectrum.data(), spectrum.data() + bins);
  out.resize(n);
  // c2r overwrites its input.
  fftw_execute_dft_c2r(plans_->inverse, reinterpret_cast<fftw_complex*>(spec.data()),
                       out.data());
  const double scale = 1.0 / n;
  for (int t = 0; t < n; ++t) out[t] *= window_[t] * scale;
}

std::vector<double> Stft::synthesize_channel(const std::vector<CVec>& spectra,
                                             std::size_t length) const {
  const int n = cfg_.fft_size;
  const std::size_t natural =
      spectra.empty() ? 0 : (spectra.size() - 1) * cfg_.hop + n;
  if (length == 0) length = natural;

  std::vector<double> out(length, 0.0);
  std::vector<double> norm(length, 0.0);
  std::vector<double> buf;
  for (std::size_t j = 0; j < spectra.size(); ++j) {
    inverse_frame(spectra[j], buf);
    const std::size_t start = j * cfg_.hop;
    for (int t = 0; t < n; ++t) {
      const std::size_t s = start + t;
      if (s >= length) break;
      out[s] += buf[t];
      norm[s] += window_[t] * window_[t];
    }
  }
  for (std::size_t s = 0; s < length; ++s) {
    out[s] /= synthesis_norm(norm[s]);
  }
  return out;
}

MultiSignal Stft::synthesize(const std::vector<SpectralFrame>& frames,
                             std::size_t length) const {
  if (frames.empty()) return {};
  const Index channels = frames.front().channels();
  MultiSignal out(channels);
  std::vector<CVec> spectra(frames.size());
  for (Index m = 0; m < channels; ++m) {
    for (std::size_t j = 0; j < frames.size(); ++j) {
      if (frames[j].channels() != channels) {
        throw ContractViolation("stft synthesize: channel count changes across frames");
      }
      spectra[j] = frames[j].bins.row(m).transpose();
    }
    out[m] = synthesize_channel(spectra, length);
  }
  return out;
}

std::vector<SpectralFrame> analyze(const MultiSignal& signal,
                                   const StftConfig& cfg) {
  return Stft(cfg).analyze(signal);
}

MultiSignal synthesize(const std::vector<SpectralFrame>& frames,
                       const StftConfig& cfg, std::size_t length) {
  return Stft(cfg).synthesize(frames, length);
}

}  // namespace bss
