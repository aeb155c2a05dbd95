#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bss/stft.hpp"  // MultiSignal

namespace bss {

using Vec3 = Eigen::Vector3d;

inline constexpr double kSpeedOfSound = 343.0;
// Half-width of the 81-tap windowed-sinc fractional delay kernel.
inline constexpr int kSincHalfWidth = 40;

// Shoebox room. Reflection coefficients are ordered x=0, x=Lx, y=0, y=Ly,
// z=0, z=Lz and apply to pressure amplitude.
struct Room {
  Vec3 dimensions{8.0, 9.0, 3.5};
  std::array<double, 6> reflection{};
  // Target reverberation time the coefficients were derived from; 0 when the
  // coefficients were given explicitly.
  double t60 = 0.0;
  int sample_rate = 16000;
  // Highest total reflection order; -1 keeps every image that arrives within
  // the impulse response length.
  int max_image_order = -1;
  // Impulse response length in seconds; 0 picks one long enough for the
  // tail to decay by 60 dB.
  double rir_seconds = 0.0;

  void validate() const;
  bool contains(const Vec3& p) const;
  std::size_t rir_length() const;
};

enum class ReverbFormula { kSabine, kEyring };

// Uniform wall reflection coefficient reaching `t60` seconds.
// Throws ConfigError when the room cannot be that dry.
std::array<double, 6> t60_to_reflection(double t60, const Vec3& dimensions,
                                        ReverbFormula formula = ReverbFormula::kEyring);

// Uniform reflection coefficient whose image-source responses measure `t60`
// by Schroeder integration, found by bisection from the Eyring estimate.
// The analytic formulas drift by tens of percent from the image method.
std::array<double, 6> calibrated_reflection(double t60, const Vec3& dimensions,
                                            int sample_rate);

// Room with calibrated reflection coefficients.
Room make_room(const Vec3& dimensions, double t60, int sample_rate);

// Image-source impulse response from `source` to `mic`.
std::vector<double> image_source_rir(const Room& room, const Vec3& source,
                                     const Vec3& mic);

// Reverberation time by Schroeder backward integration with a least-squares
// fit of the decay between -5 and -35 dB. NaN when the decay never reaches
// -35 dB.
double measure_t60(const std::vector<double>& rir, int sample_rate);

struct ArrayGeometry {
  std::vector<Vec3> positions;

  // rows x cols horizontal grid centred on `center`, row-major from the
  // lowest (x, y) corner.
  static ArrayGeometry grid(int rows, int cols, double spacing,
                            const Vec3& center);
};

struct PlacementRules {
  double wall_margin = 0.5;
  double min_center_distance = 3.0;
  double min_angle_deg = 20.0;
  int max_restarts = 200;
  int max_candidates = 2000;
};

// Random point-noise positions; deterministic for a given seed.
std::vector<Vec3> place_noise_sources(const Room& room, int count,
                                      std::uint64_t seed,
                                      const PlacementRules& rules = {});

// Checks a position set against the placement rules.
bool satisfies_placement(const Room& room, const std::vector<Vec3>& positions,
                         const PlacementRules& rules = {});

struct Scenario {
  Room room;
  ArrayGeometry array;
  std::vector<Vec3> sources;
  // Explicit noise positions; when empty, `noise_count` positions are drawn.
  std::vector<Vec3> noise_sources;
  int noise_count = 3;
  double isir_db = 0.0;
  double isnr_db = 20.0;
  // Relative level of sensor white noise against the point-noise field.
  double white_noise_scale = 0.17782794100389228;  // 10^-0.75
  // Forces sigma_v instead of calibrating it to isnr_db.
  std::optional<double> noise_gain;
  double duration_s = 30.0;
  std::uint64_t seed = 0;
  // Optional recordings for the targets and point noises; synthetic signals
  // are generated when empty.
  std::vector<std::string> source_files;
  std::vector<std::string> noise_files;

  void validate() const;
  // Scenario with the noise positions resolved for `seed`.
  Scenario resolved(std::uint64_t seed) const;
};

struct MixMetadata {
  std::vector<double> source_gains;
  double noise_gain = 0.0;
  double measured_isir_db = std::numeric_limits<double>::quiet_NaN();
  double measured_isnr_db = std::numeric_limits<double>::quiet_NaN();
  std::vector<Vec3> noise_positions;
};

struct MixtureBundle {
  MultiSignal observations;
  // Image of each source at the first microphone.
  std::vector<std::vector<double>> references;
  // Scaled multichannel image of each source.
  std::vector<MultiSignal> images;
  MultiSignal noise;
  MixMetadata metadata;
};

// Convolves sources and noises with their impulse responses and calibrates
// iSIR / iSNR at the first microphone. Observations are
// sum_n images[n] + noise, accumulated in source order.
MixtureBundle mix(const Scenario& scenario,
                  const std::vector<std::vector<double>>& targets,
                  const std::vector<std::vector<double>>& noise_signals,
                  std::uint64_t white_seed);

}  // namespace bss
