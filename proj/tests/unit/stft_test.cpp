#include "bss/stft.hpp"

#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "bss/error.hpp"
#include "test_support.hpp"

namespace bss {
namespace {

using testing::gaussian_signal;
using testing::Rng;

double interior_relative_error(const std::vector<double>& x, const std::vector<double>& y,
                               std::size_t margin) {
  double err = 0.0, ref = 0.0;
  for (std::size_t t = margin; t + margin < x.size(); ++t) {
    err += (x[t] - y[t]) * (x[t] - y[t]);
    ref += x[t] * x[t];
  }
  return std::sqrt(err / ref);
}

TEST(StftConfig, Validation) {
  StftConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.num_bins(), 513);
  cfg.hop = 300;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.fft_size = 1023;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.hop = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Hann, PeriodicWindowSatisfiesCola) {
  const auto w = hann_window(1024);
  EXPECT_DOUBLE_EQ(w[0], 0.0);
  EXPECT_NEAR(w[512], 1.0, 1e-15);
  // Sum of squared shifts by the hop is constant.
  double lo = 1e9, hi = 0.0;
  for (int t = 0; t < 256; ++t) {
    double s = 0.0;
    for (int k = 0; k < 4; ++k) s += w[t + 256 * k] * w[t + 256 * k];
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  EXPECT_LT((hi - lo) / hi, 1e-12);
  EXPECT_NEAR(hi, 1.5, 1e-12);
}

TEST(Analyze, FrameCountAndCoverage) {
  StftConfig cfg;
  EXPECT_EQ(frame_count(1024, cfg), 1);
  EXPECT_EQ(frame_count(1025, cfg), 2);
  EXPECT_EQ(frame_count(1024 + 256, cfg), 2);
  EXPECT_EQ(frame_count(48000, cfg), (48000 - 1024 + 255) / 256 + 1);
}

TEST(Analyze, MatchesDirectDft) {
  StftConfig cfg;
  cfg.fft_size = 16;
  cfg.hop = 4;
  Rng rng(1);
  const MultiSignal x{gaussian_signal(40, rng), gaussian_signal(40, rng)};
  const auto frames = analyze(x, cfg);
  const auto w = hann_window(16);
  ASSERT_EQ(frames.size(), static_cast<std::size_t>(frame_count(40, cfg)));
  for (const auto& f : frames) {
    for (int m = 0; m < 2; ++m) {
      for (int i = 0; i < 9; ++i) {
        Complex acc = 0.0;
        for (int t = 0; t < 16; ++t) {
          const std::size_t s = f.index * 4 + t;
          const double v = s < 40 ? x[m][s] * w[t] : 0.0;
          acc += v * std::polar(1.0, -2.0 * std::numbers::pi * i * t / 16.0);
        }
        EXPECT_LT(std::abs(f.bins(m, i) - acc), 1e-12);
      }
    }
  }
}

TEST(Analyze, ZeroSignalGivesZeroFrames) {
  const MultiSignal x(2, std::vector<double>(4000, 0.0));
  for (const auto& f : analyze(x, {})) EXPECT_EQ(f.bins.norm(), 0.0);
}

TEST(Analyze, BinCenteredToneStaysInMainLobe) {
  // A Hann-windowed tone at bin k has spectrum weights 1/2 at k and 1/4 at
  // k +- 1, so bin k alone holds 2/3 of the energy and the main lobe all of
  // it.
  StftConfig cfg;
  const int k = 37;
  std::vector<double> x(4096);
  for (std::size_t t = 0; t < x.size(); ++t) {
    x[t] = std::cos(2.0 * std::numbers::pi * k * static_cast<double>(t) / cfg.fft_size);
  }
  const auto frames = analyze({x}, cfg);
  for (std::size_t j = 0; j + 1 < frames.size(); ++j) {
    const auto row = frames[j].bins.row(0);
    const double total = row.squaredNorm();
    const double center = std::norm(row(k));
    const double lobe = center + std::norm(row(k - 1)) + std::norm(row(k + 1));
    EXPECT_NEAR(center / total, 2.0 / 3.0, 1e-10);
    EXPECT_GE(lobe / total, 0.999);
  }
}

TEST(Analyze, Errors) {
  EXPECT_THROW(analyze({}, {}), ContractViolation);
  EXPECT_THROW(analyze({std::vector<double>(2000), std::vector<double>(1999)}, {}),
               ContractViolation);
  EXPECT_THROW(analyze({std::vector<double>(100)}, {}), ContractViolation);
}

TEST(Synthesize, RoundTripWhiteNoise) {
  Rng rng(2);
  const std::size_t n = 3 * 16000;
  const MultiSignal x{gaussian_signal(n, rng), gaussian_signal(n, rng)};
  const StftConfig cfg;
  const auto y = synthesize(analyze(x, cfg), cfg, n);
  ASSERT_EQ(y.size(), 2u);
  ASSERT_EQ(y[0].size(), n);
  for (int m = 0; m < 2; ++m) {
    EXPECT_LE(interior_relative_error(x[m], y[m], cfg.fft_size), 1e-10);
  }
}

TEST(Synthesize, ZeroFramesGiveZeroSignal) {
  const StftConfig cfg;
  std::vector<SpectralFrame> frames(5);
  for (auto& f : frames) f.bins = CMat::Zero(1, cfg.num_bins());
  const auto y = synthesize(frames, cfg);
  ASSERT_EQ(y.size(), 1u);
  for (double v : y[0]) EXPECT_EQ(v, 0.0);
}

TEST(Synthesize, ImpulseRecovered) {
  const StftConfig cfg;
  std::vector<double> x(8000, 0.0);
  x[3001] = 1.0;
  const auto y = synthesize(analyze({x}, cfg), cfg, x.size())[0];
  for (std::size_t t = 0; t < x.size(); ++t) EXPECT_NEAR(y[t], x[t], 1e-10);
}

TEST(Synthesize, EdgesAreTaperedNotAmplified) {
  Rng rng(3);
  const auto x = gaussian_signal(5000, rng);
  const StftConfig cfg;
  const auto y = synthesize(analyze({x}, cfg), cfg, x.size())[0];
  for (std::size_t t = 0; t < x.size(); ++t) EXPECT_LE(std::abs(y[t]), std::abs(x[t]) + 1e-9);
}

TEST(Synthesize, BinCountMismatch) {
  std::vector<SpectralFrame> frames(1);
  frames[0].bins = CMat::Zero(1, 10);
  EXPECT_THROW(synthesize(frames, {}), ContractViolation);
}

TEST(StftProperties, Linearity) {
  Rng rng(4);
  const auto a = gaussian_signal(6000, rng);
  const auto b = gaussian_signal(6000, rng);
  std::vector<double> c(a.size());
  const double alpha = 0.7, beta = -2.5;
  for (std::size_t t = 0; t < a.size(); ++t) c[t] = alpha * a[t] + beta * b[t];
  const auto fa = analyze({a}, {});
  const auto fb = analyze({b}, {});
  const auto fc = analyze({c}, {});
  for (std::size_t j = 0; j < fc.size(); ++j) {
    const CMat expected = alpha * fa[j].bins + beta * fb[j].bins;
    EXPECT_LE((fc[j].bins - expected).cwiseAbs().maxCoeff(),
              1e-12 * expected.cwiseAbs().maxCoeff());
  }
}

TEST(StftProperties, Parseval) {
  Rng rng(5);
  const StftConfig cfg;
  const auto x = gaussian_signal(6000, rng);
  const auto w = hann_window(cfg.fft_size);
  const int n = cfg.fft_size;
  for (const auto& f : analyze({x}, cfg)) {
    double time = 0.0;
    for (int t = 0; t < n; ++t) {
      const std::size_t s = f.index * cfg.hop + t;
      const double v = s < x.size() ? x[s] * w[t] : 0.0;
      time += v * v;
    }
    const auto row = f.bins.row(0);
    double spec = std::norm(row(0)) + std::norm(row(n / 2));
    for (int i = 1; i < n / 2; ++i) spec += 2.0 * std::norm(row(i));
    EXPECT_NEAR(spec / n, time, 1e-10 * time);
  }
}

}  // namespace
}  // namespace bss
