#include "bss/roomsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "bss/error.hpp"
#include "bss/signals.hpp"
#include "test_support.hpp"

namespace bss {
namespace {

Room anechoic(const Vec3& dims = {7.0, 8.0, 3.5}) {
  Room room;
  room.dimensions = dims;
  room.reflection.fill(0.0);
  room.rir_seconds = 0.1;
  return room;
}

std::size_t argmax_abs(const std::vector<double>& h) {
  return static_cast<std::size_t>(
      std::max_element(h.begin(), h.end(),
                       [](double a, double b) { return std::abs(a) < std::abs(b); }) -
      h.begin());
}

// Independent Schroeder oracle: backward-integrated energy, straight-line fit
// of the -5..-35 dB range written out directly.
double schroeder_t60(const std::vector<double>& h, int fs) {
  std::vector<double> edc(h.size());
  double acc = 0.0;
  for (std::size_t t = h.size(); t-- > 0;) {
    acc += h[t] * h[t];
    edc[t] = acc;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t t = 0; t < h.size(); ++t) {
    const double db = 10.0 * std::log10(edc[t] / edc[0]);
    if (db > -5.0 || db < -35.0) continue;
    const double x = static_cast<double>(t) / fs;
    sx += x;
    sy += db;
    sxx += x * x;
    sxy += x * db;
    ++n;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return -60.0 / slope;
}

TEST(Room, Validation) {
  Room room;
  room.reflection.fill(0.5);
  EXPECT_NO_THROW(room.validate());
  room.reflection[2] = 1.0;
  EXPECT_THROW(room.validate(), ConfigError);
  room.reflection.fill(0.5);
  room.dimensions.x() = 0.0;
  EXPECT_THROW(room.validate(), ConfigError);
}

TEST(Rir, DirectPathDelayAndAmplitude) {
  const Room room = anechoic();
  const Vec3 src{1.0, 1.0, 1.5};
  // 3.43 m at 343 m/s is exactly 160 samples at 16 kHz.
  const auto h = image_source_rir(room, src, src + Vec3{3.43, 0.0, 0.0});
  EXPECT_EQ(argmax_abs(h), 160u);
  for (std::size_t t = 0; t < h.size(); ++t) {
    if (t != 160) {
      EXPECT_LT(std::abs(h[t]), 1e-12 * std::abs(h[160]));
    }
  }
  const auto h2 = image_source_rir(room, src, src + Vec3{0.0, 6.86, 0.0});
  EXPECT_EQ(argmax_abs(h2), 320u);
  EXPECT_NEAR(h[160] / h2[320], 2.0, 1e-12);
}

TEST(Rir, CausalWithinKernelHalfWidth) {
  Room room = make_room({7.0, 8.0, 3.5}, 0.2, 16000);
  const Vec3 src{2.1, 3.3, 1.2};
  const Vec3 mic{5.27, 4.11, 1.9};
  const auto h = image_source_rir(room, src, mic);
  const double delay = (src - mic).norm() / kSpeedOfSound * room.sample_rate;
  const auto first = static_cast<std::size_t>(std::floor(delay)) - kSincHalfWidth;
  for (std::size_t t = 0; t < first; ++t) EXPECT_EQ(h[t], 0.0) << t;
}

TEST(Rir, MirrorSymmetry) {
  Room room;
  room.dimensions = {6.0, 5.0, 3.0};
  room.reflection.fill(0.7);
  room.rir_seconds = 0.15;
  const Vec3 src{1.3, 2.2, 1.1};
  const Vec3 mic{4.1, 3.7, 1.6};
  auto mirror = [&](const Vec3& p) { return Vec3{room.dimensions.x() - p.x(), p.y(), p.z()}; };
  const auto a = image_source_rir(room, src, mic);
  const auto b = image_source_rir(room, mirror(src), mirror(mic));
  ASSERT_EQ(a.size(), b.size());
  double peak = 0.0;
  for (double v : a) peak = std::max(peak, std::abs(v));
  for (std::size_t t = 0; t < a.size(); ++t) EXPECT_NEAR(a[t], b[t], 1e-12 * peak);
}

TEST(Rir, Errors) {
  const Room room = anechoic();
  EXPECT_THROW(image_source_rir(room, {1, 1, 1}, {1, 1, 1}), ContractViolation);
  EXPECT_THROW(image_source_rir(room, {1, 1, 1}, {9, 1, 1}), ContractViolation);
}

TEST(ReverbTime, ClosedFormFormulas) {
  const Vec3 dims{7.0, 8.0, 3.5};
  const double v = 7.0 * 8.0 * 3.5;
  const double s = 2.0 * (7.0 * 8.0 + 7.0 * 3.5 + 8.0 * 3.5);
  const double t60 = 0.4;
  const auto eyring = t60_to_reflection(t60, dims, ReverbFormula::kEyring);
  const double a_eyring = 1.0 - eyring[0] * eyring[0];
  EXPECT_NEAR(0.1611 * v / (-s * std::log(1.0 - a_eyring)), t60, 1e-12);
  const auto sabine = t60_to_reflection(t60, dims, ReverbFormula::kSabine);
  EXPECT_NEAR(0.1611 * v / (s * (1.0 - sabine[0] * sabine[0])), t60, 1e-12);
  EXPECT_THROW(t60_to_reflection(0.02, dims, ReverbFormula::kSabine), ConfigError);
  EXPECT_THROW(t60_to_reflection(0.0, dims), ContractViolation);
}

TEST(ReverbTime, MeasureMatchesSyntheticDecay) {
  const int fs = 16000;
  const double t60 = 0.3;
  auto noise = white_noise(fs, 4);
  std::vector<double> smooth(noise.size());
  for (std::size_t t = 0; t < noise.size(); ++t) {
    smooth[t] = std::pow(10.0, -3.0 * static_cast<double>(t) / (fs * t60));
    noise[t] *= smooth[t];
  }
  EXPECT_NEAR(measure_t60(smooth, fs), t60, 1e-3 * t60);
  EXPECT_NEAR(measure_t60(noise, fs), t60, 0.05 * t60);
  EXPECT_NEAR(measure_t60(noise, fs), schroeder_t60(noise, fs), 1e-3 * t60);
}

TEST(ReverbTime, AbsorbingRoomIsDirectPathOnly) {
  const auto h = image_source_rir(anechoic(), {2, 2, 1}, {3, 4, 1.5});
  std::size_t nonzero = 0;
  const double peak = std::abs(h[argmax_abs(h)]);
  for (double v : h) nonzero += std::abs(v) > 1e-12 * peak;
  EXPECT_LE(nonzero, 2u * kSincHalfWidth + 1);
}

TEST(ReverbTime, CalibratedRoomHitsTarget) {
  const Room room = make_room({7.0, 8.0, 3.5}, 0.2, 16000);
  const auto h = image_source_rir(room, {2.0, 3.0, 1.5}, {4.5, 5.0, 1.2});
  const double measured = schroeder_t60(h, room.sample_rate);
  EXPECT_GE(measured, 0.16);
  EXPECT_LE(measured, 0.24);
}

TEST(ReverbTime, LargerRoomDecaysSlower) {
  Room small;
  small.dimensions = {4.0, 5.0, 3.0};
  small.reflection.fill(0.85);
  Room large = small;
  large.dimensions *= 2.0;
  const Vec3 src{1.0, 1.5, 1.2}, mic{2.5, 3.0, 1.4};
  const double t_small = measure_t60(image_source_rir(small, src, mic), 16000);
  const double t_large = measure_t60(image_source_rir(large, src * 2.0, mic * 2.0), 16000);
  EXPECT_GT(t_large, t_small);
}

TEST(ArrayGeometry, GridLayout) {
  const auto g = ArrayGeometry::grid(3, 3, 0.06, {4.0, 4.5, 3.0});
  ASSERT_EQ(g.positions.size(), 9u);
  EXPECT_NEAR((g.positions[0] - Vec3{3.94, 4.44, 3.0}).norm(), 0.0, 1e-12);
  EXPECT_NEAR((g.positions[4] - Vec3{4.0, 4.5, 3.0}).norm(), 0.0, 1e-12);
  EXPECT_NEAR((g.positions[1] - g.positions[0]).norm(), 0.06, 1e-12);
  EXPECT_THROW(ArrayGeometry::grid(0, 3, 0.06, {}), ConfigError);
}

// Constraint oracle written independently of the library checker.
void expect_valid_placement(const Room& room, const std::vector<Vec3>& p) {
  const Vec3 c = room.dimensions / 2.0;
  for (const auto& q : p) {
    for (int a = 0; a < 3; ++a) {
      EXPECT_GE(q[a], 0.5 - 1e-12);
      EXPECT_LE(q[a], room.dimensions[a] - 0.5 + 1e-12);
    }
    EXPECT_GE(std::hypot(q.x() - c.x(), q.y() - c.y()), 3.0 - 1e-12);
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      const double ai = std::atan2(p[i].y() - c.y(), p[i].x() - c.x());
      const double aj = std::atan2(p[j].y() - c.y(), p[j].x() - c.x());
      double gap = std::abs(ai - aj) * 180.0 / std::numbers::pi;
      gap = std::min(gap, 360.0 - gap);
      EXPECT_GE(gap, 20.0 - 1e-9);
    }
  }
}

TEST(Placement, ConstraintsAndDeterminism) {
  Room room;
  room.dimensions = {7.0, 8.0, 3.5};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto five = place_noise_sources(room, 5, seed);
    ASSERT_EQ(five.size(), 5u);
    expect_valid_placement(room, five);
    EXPECT_TRUE(satisfies_placement(room, five));
    EXPECT_EQ(five, place_noise_sources(room, 5, seed));
  }
  const auto one = place_noise_sources(room, 1, 3);
  ASSERT_EQ(one.size(), 1u);
  expect_valid_placement(room, one);
}

TEST(Placement, ImpossibleRequestFails) {
  Room room;
  room.dimensions = {3.0, 3.0, 3.0};
  EXPECT_THROW(place_noise_sources(room, 2, 1), ConfigError);
}

Scenario small_scenario() {
  Scenario s;
  s.room = make_room({7.0, 8.0, 3.5}, 0.15, 16000);
  s.array = ArrayGeometry::grid(2, 2, 0.06, {3.5, 4.0, 1.5});
  s.sources = {{5.0, 5.5, 1.75}, {2.0, 5.8, 1.75}};
  s.noise_count = 2;
  s.duration_s = 2.0;
  s.seed = 5;
  return s;
}

struct Signals {
  std::vector<std::vector<double>> targets, noise;
};

Signals signals_for(const Scenario& s, std::size_t length) {
  Signals out;
  for (std::size_t n = 0; n < s.sources.size(); ++n) {
    out.targets.push_back(white_noise(length, 10 + n));
  }
  for (int k = 0; k < s.noise_count; ++k) out.noise.push_back(pink_noise(length, 20 + k));
  return out;
}

TEST(Mix, CalibratesInputRatiosAtFirstMic) {
  auto s = small_scenario();
  const auto sig = signals_for(s, 16000);
  const auto b = mix(s, sig.targets, sig.noise, 1);
  const double e0 = energy(b.images[0][0]);
  const double e1 = energy(b.images[1][0]);
  std::vector<double> clean(b.images[0][0]);
  for (std::size_t t = 0; t < clean.size(); ++t) clean[t] += b.images[1][0][t];
  EXPECT_NEAR(10.0 * std::log10(e0 / e1), 0.0, 0.01);
  EXPECT_NEAR(10.0 * std::log10(energy(clean) / energy(b.noise[0])), 20.0, 0.01);
  EXPECT_NEAR(b.metadata.measured_isir_db, 0.0, 0.01);
  EXPECT_NEAR(b.metadata.measured_isnr_db, 20.0, 0.01);

  s.isir_db = 5.0;
  s.isnr_db = 10.0;
  const auto c = mix(s, sig.targets, sig.noise, 1);
  double clean_c = 0.0;
  for (std::size_t t = 0; t < c.observations[0].size(); ++t) {
    const double v = c.images[0][0][t] + c.images[1][0][t];
    clean_c += v * v;
  }
  EXPECT_NEAR(10.0 * std::log10(energy(c.images[0][0]) / energy(c.images[1][0])), 5.0, 0.01);
  EXPECT_NEAR(10.0 * std::log10(clean_c / energy(c.noise[0])), 10.0, 0.01);
}

TEST(Mix, ObservationsAreExactSumOfParts) {
  const auto s = small_scenario();
  const auto sig = signals_for(s, 8000);
  const auto b = mix(s, sig.targets, sig.noise, 2);
  for (std::size_t m = 0; m < b.observations.size(); ++m) {
    for (std::size_t t = 0; t < b.observations[m].size(); ++t) {
      double acc = 0.0;
      for (const auto& img : b.images) acc += img[m][t];
      EXPECT_EQ(b.observations[m][t], acc + b.noise[m][t]);
    }
  }
  EXPECT_EQ(b.references[1], b.images[1][0]);
}

TEST(Mix, SilentNoiseLeavesCleanMixture) {
  auto s = small_scenario();
  s.noise_gain = 0.0;
  auto sig = signals_for(s, 8000);
  for (auto& n : sig.noise) std::fill(n.begin(), n.end(), 0.0);
  const auto b = mix(s, sig.targets, sig.noise, 3);
  for (std::size_t m = 0; m < b.observations.size(); ++m) {
    for (std::size_t t = 0; t < b.observations[m].size(); ++t) {
      EXPECT_EQ(b.observations[m][t], b.images[0][m][t] + b.images[1][m][t]);
    }
  }
}

TEST(Mix, DeterministicAndValidated) {
  const auto s = small_scenario();
  auto sig = signals_for(s, 8000);
  const auto a = mix(s, sig.targets, sig.noise, 4);
  const auto b = mix(s, sig.targets, sig.noise, 4);
  EXPECT_EQ(a.observations, b.observations);
  EXPECT_EQ(a.metadata.noise_positions, b.metadata.noise_positions);

  std::fill(sig.targets[1].begin(), sig.targets[1].end(), 0.0);
  EXPECT_THROW(mix(s, sig.targets, sig.noise, 4), ContractViolation);
  sig.targets.pop_back();
  EXPECT_THROW(mix(s, sig.targets, sig.noise, 4), ContractViolation);
}

TEST(Mix, SingleSourceFlagsUndefinedInputSir) {
  auto s = small_scenario();
  s.sources.pop_back();
  const auto sig = signals_for(s, 8000);
  const auto b = mix(s, sig.targets, sig.noise, 5);
  EXPECT_TRUE(std::isnan(b.metadata.measured_isir_db));
  EXPECT_NEAR(b.metadata.measured_isnr_db, 20.0, 0.01);
}

}  // namespace
}  // namespace bss
