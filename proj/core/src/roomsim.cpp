#include "bss/roomsim.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "bss/error.hpp"
#include "bss/signals.hpp"

namespace bss {
namespace {

constexpr double kSabineConstant = 0.1611;  // s/m, 24 ln(10) / c

double volume(const Vec3& d) { return d.x() * d.y() * d.z(); }

std::array<double, 6> wall_areas(const Vec3& d) {
  const double yz = d.y() * d.z();
  const double xz = d.x() * d.z();
  const double xy = d.x() * d.y();
  return {yz, yz, xz, xz, xy, xy};
}

// Sabine estimate used to size the impulse response when only reflection
// coefficients are known.
double sabine_t60(const Vec3& dims, const std::array<double, 6>& beta) {
  const auto areas = wall_areas(dims);
  double absorption = 0.0;
  for (int w = 0; w < 6; ++w) absorption += areas[w] * (1.0 - beta[w] * beta[w]);
  if (absorption <= 0.0) return 2.0;
  return kSabineConstant * volume(dims) / absorption;
}

double azimuth(const Vec3& p, const Vec3& center) {
  return std::atan2(p.y() - center.y(), p.x() - center.x());
}

double angular_gap_deg(double a, double b) {
  double d = std::fmod(std::abs(a - b), 2.0 * std::numbers::pi);
  if (d > std::numbers::pi) d = 2.0 * std::numbers::pi - d;
  return d * 180.0 / std::numbers::pi;
}

bool position_ok(const Room& room, const Vec3& p, const PlacementRules& rules) {
  const Vec3& d = room.dimensions;
  const double m = rules.wall_margin;
  for (int a = 0; a < 3; ++a) {
    if (p[a] < m || p[a] > d[a] - m) return false;
  }
  const Vec3 center = 0.5 * d;
  return std::hypot(p.x() - center.x(), p.y() - center.y()) >=
         rules.min_center_distance;
}

}  // namespace

void Room::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (!(dimensions[a] > 0.0)) {
      throw ConfigError("room dimensions must be positive");
    }
  }
  for (double b : reflection) {
    if (!(b >= 0.0 && b < 1.0)) {
      throw ConfigError("reflection coefficients must lie in [0, 1)");
    }
  }
  if (sample_rate <= 0) throw ConfigError("room sample_rate must be positive");
  if (rir_seconds < 0.0) throw ConfigError("room rir_seconds must be >= 0");
}

bool Room::contains(const Vec3& p) const {
  for (int a = 0; a < 3; ++a) {
    if (!(p[a] > 0.0 && p[a] < dimensions[a])) return false;
  }
  return true;
}

std::size_t Room::rir_length() const {
  const double tail = rir_seconds > 0.0
                          ? rir_seconds
                          : (t60 > 0.0 ? t60 : sabine_t60(dimensions, reflection)) +
                                dimensions.norm() / kSpeedOfSound;
  return static_cast<std::size_t>(std::ceil(tail * sample_rate)) +
         kSincHalfWidth + 1;
}

std::array<double, 6> t60_to_reflection(double t60, const Vec3& dimensions,
                                        ReverbFormula formula) {
  if (!(t60 > 0.0)) throw ContractViolation("t60_to_reflection: t60 must be > 0");
  const auto areas = wall_areas(dimensions);
  double surface = 0.0;
  for (double a : areas) surface += a;
  const double ratio = kSabineConstant * volume(dimensions) / (surface * t60);
  double alpha = 0.0;
  if (formula == ReverbFormula::kSabine) {
    if (ratio > 1.0) {
      throw ConfigError("T60 of " + std::to_string(t60) +
                        " s is unreachable for this room (Sabine absorption > 1)");
    }
    alpha = ratio;
  } else {
    alpha = 1.0 - std::exp(-ratio);
  }
  std::array<double, 6> beta;
  beta.fill(std::sqrt(1.0 - alpha));
  return beta;
}

std::array<double, 6> calibrated_reflection(double t60, const Vec3& dimensions,
                                            int sample_rate) {
  if (!(t60 > 0.0)) throw ContractViolation("calibrated_reflection: t60 must be > 0");
  Room probe;
  probe.dimensions = dimensions;
  probe.sample_rate = sample_rate;
  // Long enough that truncation does not bend the decay fit.
  probe.rir_seconds = 2.0 * t60 + dimensions.norm() / kSpeedOfSound;
  const Vec3 pairs[2][2] = {
      {dimensions.cwiseProduct(Vec3(0.30, 0.35, 0.40)),
       dimensions.cwiseProduct(Vec3(0.65, 0.60, 0.55))},
      {dimensions.cwiseProduct(Vec3(0.70, 0.25, 0.60)),
       dimensions.cwiseProduct(Vec3(0.35, 0.70, 0.45))}};
  auto measured = [&](double beta) {
    probe.reflection.fill(beta);
    double sum = 0.0;
    for (const auto& pair : pairs) {
      const double t = measure_t60(image_source_rir(probe, pair[0], pair[1]), sample_rate);
      // No -35 dB point inside the probe means the decay is too slow.
      sum += std::isnan(t) ? std::numeric_limits<double>::infinity() : t;
    }
    return sum / 2.0;
  };
  constexpr double kMaxBeta = 0.995;
  double lo = 0.0, hi = kMaxBeta;
  double beta = t60_to_reflection(t60, dimensions, ReverbFormula::kEyring)[0];
  bool converged = false;
  for (int iter = 0; iter < 40 && !converged; ++iter) {
    const double t = measured(beta);
    converged = std::abs(t - t60) <= 0.005 * t60;
    if (!converged) {
      (t < t60 ? lo : hi) = beta;
      beta = 0.5 * (lo + hi);
    }
  }
  if (!converged && kMaxBeta - beta < 1e-6) {
    throw ConfigError("T60 of " + std::to_string(t60) +
                      " s is unreachable for this room (reflection would exceed " +
                      std::to_string(kMaxBeta) + ")");
  }
  std::array<double, 6> out;
  out.fill(beta);
  return out;
}

Room make_room(const Vec3& dimensions, double t60, int sample_rate) {
  Room room;
  room.dimensions = dimensions;
  room.t60 = t60;
  room.sample_rate = sample_rate;
  room.reflection = calibrated_reflection(t60, dimensions, sample_rate);
  room.validate();
  return room;
}

std::vector<double> image_source_rir(const Room& room, const Vec3& source,
                                     const Vec3& mic) {
  room.validate();
  if (!room.contains(source) || !room.contains(mic)) {
    throw ContractViolation("image_source_rir: source and microphone must lie inside the room");
  }
  if ((source - mic).norm() == 0.0) {
    throw ContractViolation("image_source_rir: source coincides with microphone");
  }
  const std::size_t length = room.rir_length();
  std::vector<double> h(length, 0.0);
  const double fs = room.sample_rate;
  const double max_dist = static_cast<double>(length + kSincHalfWidth) / fs * kSpeedOfSound;
  const Vec3& dims = room.dimensions;
  const auto& beta = room.reflection;

  std::array<int, 3> reach;
  for (int a = 0; a < 3; ++a) {
    reach[a] = static_cast<int>(std::ceil(max_dist / (2.0 * dims[a]))) + 1;
  }

  const double window_width = kSincHalfWidth + 1.0;
  const double step_cos = std::cos(std::numbers::pi / window_width);
  const double step_sin = std::sin(std::numbers::pi / window_width);
  for (int mx = -reach[0]; mx <= reach[0]; ++mx) {
    for (int qx = 0; qx <= 1; ++qx) {
      const double dx = (1 - 2 * qx) * source.x() + 2.0 * mx * dims.x() - mic.x();
      const int ox0 = std::abs(mx - qx), ox1 = std::abs(mx);
      const double rx = std::pow(beta[0], ox0) * std::pow(beta[1], ox1);
      for (int my = -reach[1]; my <= reach[1]; ++my) {
        for (int qy = 0; qy <= 1; ++qy) {
          const double dy = (1 - 2 * qy) * source.y() + 2.0 * my * dims.y() - mic.y();
          const int oy0 = std::abs(my - qy), oy1 = std::abs(my);
          const double ry = std::pow(beta[2], oy0) * std::pow(beta[3], oy1);
          for (int mz = -reach[2]; mz <= reach[2]; ++mz) {
            for (int qz = 0; qz <= 1; ++qz) {
              const double dz = (1 - 2 * qz) * source.z() + 2.0 * mz * dims.z() - mic.z();
              const int oz0 = std::abs(mz - qz), oz1 = std::abs(mz);
              const int order = ox0 + ox1 + oy0 + oy1 + oz0 + oz1;
              if (room.max_image_order >= 0 && order > room.max_image_order) continue;
              const double rz = std::pow(beta[4], oz0) * std::pow(beta[5], oz1);
              const double gain_num = rx * ry * rz;
              if (gain_num == 0.0) continue;
              const double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
              if (dist > max_dist) continue;
              const double delay = dist / kSpeedOfSound * fs;
              const double amp = gain_num / (4.0 * std::numbers::pi * dist);
              const auto centre = static_cast<long>(std::floor(delay));
              // sin(pi t) alternates in sign across integer steps; the window
              // cosine advances by a fixed rotation.
              const double t0 = static_cast<double>(centre - kSincHalfWidth) - delay;
              const double sin_t0 = std::sin(std::numbers::pi * t0);
              double c = std::cos(std::numbers::pi * t0 / window_width);
              double s = std::sin(std::numbers::pi * t0 / window_width);
              double sign = 1.0;
              for (long k = 0; k <= 2 * kSincHalfWidth; ++k) {
                const long p = centre - kSincHalfWidth + k;
                const double t = t0 + static_cast<double>(k);
                if (p >= 0 && p < static_cast<long>(length)) {
                  const double sinc =
                      std::abs(t) < 1e-12 ? 1.0 : sign * sin_t0 / (std::numbers::pi * t);
                  h[p] += amp * 0.5 * (1.0 + c) * sinc;
                }
                const double c_next = c * step_cos - s * step_sin;
                s = s * step_cos + c * step_sin;
                c = c_next;
                sign = -sign;
              }
            }
          }
        }
      }
    }
  }
  return h;
}

double measure_t60(const std::vector<double>& rir, int sample_rate) {
  if (rir.empty() || sample_rate <= 0) {
    throw ContractViolation("measure_t60: empty response");
  }
  std::vector<double> edc(rir.size());
  double acc = 0.0;
  for (std::size_t t = rir.size(); t-- > 0;) {
    acc += rir[t] * rir[t];
    edc[t] = acc;
  }
  if (acc <= 0.0) return std::numeric_limits<double>::quiet_NaN();
  std::size_t begin = rir.size(), end = rir.size();
  for (std::size_t t = 0; t < rir.size(); ++t) {
    const double level = db10(edc[t] / acc);
    if (begin == rir.size() && level <= -5.0) begin = t;
    if (level <= -35.0) {
      end = t;
      break;
    }
  }
  if (end == rir.size() || end <= begin + 1) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  // Least-squares line through (time, level).
  double st = 0, sl = 0, stt = 0, stl = 0;
  const double count = static_cast<double>(end - begin + 1);
  for (std::size_t t = begin; t <= end; ++t) {
    const double time = static_cast<double>(t) / sample_rate;
    const double level = db10(edc[t] / acc);
    st += time;
    sl += level;
    stt += time * time;
    stl += time * level;
  }
  const double slope = (count * stl - st * sl) / (count * stt - st * st);
  return -60.0 / slope;
}

ArrayGeometry ArrayGeometry::grid(int rows, int cols, double spacing,
                                  const Vec3& center) {
  if (rows < 1 || cols < 1 || !(spacing > 0.0)) {
    throw ConfigError("array grid needs rows, cols >= 1 and spacing > 0");
  }
  ArrayGeometry g;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      g.positions.emplace_back(center.x() + (c - 0.5 * (cols - 1)) * spacing,
                               center.y() + (r - 0.5 * (rows - 1)) * spacing,
                               center.z());
    }
  }
  return g;
}

bool satisfies_placement(const Room& room, const std::vector<Vec3>& positions,
                         const PlacementRules& rules) {
  const Vec3 center = 0.5 * room.dimensions;
  for (std::size_t a = 0; a < positions.size(); ++a) {
    if (!position_ok(room, positions[a], rules)) return false;
    for (std::size_t b = 0; b < a; ++b) {
      if (angular_gap_deg(azimuth(positions[a], center),
                          azimuth(positions[b], center)) < rules.min_angle_deg) {
        return false;
      }
    }
  }
  return true;
}

std::vector<Vec3> place_noise_sources(const Room& room, int count,
                                      std::uint64_t seed,
                                      const PlacementRules& rules) {
  room.validate();
  if (count < 0) throw ContractViolation("place_noise_sources: negative count");
  std::mt19937_64 rng(seed);
  const Vec3& d = room.dimensions;
  const double m = rules.wall_margin;
  if (d.x() <= 2 * m || d.y() <= 2 * m || d.z() <= 2 * m) {
    throw ConfigError("noise placement: room is smaller than twice the wall margin");
  }
  std::uniform_real_distribution<double> ux(m, d.x() - m), uy(m, d.y() - m),
      uz(m, d.z() - m);

  for (int restart = 0; restart < rules.max_restarts; ++restart) {
    std::vector<Vec3> placed;
    while (static_cast<int>(placed.size()) < count) {
      bool accepted = false;
      for (int attempt = 0; attempt < rules.max_candidates; ++attempt) {
        const double x = ux(rng);
        const double y = uy(rng);
        const double z = uz(rng);
        placed.emplace_back(x, y, z);
        if (satisfies_placement(room, placed, rules)) {
          accepted = true;
          break;
        }
        placed.pop_back();
      }
      if (!accepted) break;
    }
    if (static_cast<int>(placed.size()) == count) return placed;
  }
  throw ConfigError("noise placement: could not place " + std::to_string(count) +
                    " sources satisfying the wall, distance and angle constraints");
}

void Scenario::validate() const {
  room.validate();
  if (array.positions.empty()) throw ConfigError("scenario needs at least one microphone");
  if (sources.empty()) throw ConfigError("scenario needs at least one target source");
  for (const auto& p : array.positions) {
    if (!room.contains(p)) throw ConfigError("microphone position outside the room");
  }
  for (const auto& p : sources) {
    if (!room.contains(p)) throw ConfigError("target source position outside the room");
  }
  for (const auto& p : noise_sources) {
    if (!room.contains(p)) throw ConfigError("noise source position outside the room");
  }
  if (noise_count < 0) throw ConfigError("noise count must be >= 0");
  if (!(duration_s > 0.0)) throw ConfigError("duration_s must be > 0");
  if (!(white_noise_scale >= 0.0)) throw ConfigError("white_noise_scale must be >= 0");
  if (noise_gain && !(*noise_gain >= 0.0)) throw ConfigError("noise_gain must be >= 0");
}

Scenario Scenario::resolved(std::uint64_t run_seed) const {
  Scenario out = *this;
  out.seed = run_seed;
  if (out.noise_sources.empty() && noise_count > 0) {
    out.noise_sources = place_noise_sources(room, noise_count, run_seed);
  }
  return out;
}

MixtureBundle mix(const Scenario& scenario,
                  const std::vector<std::vector<double>>& targets,
                  const std::vector<std::vector<double>>& noise_signals,
                  std::uint64_t white_seed) {
  scenario.validate();
  const auto& mics = scenario.array.positions;
  const std::size_t n_mics = mics.size();
  const std::size_t n_src = scenario.sources.size();
  if (targets.size() != n_src) {
    throw ContractViolation("mix: expected " + std::to_string(n_src) + " target signals");
  }
  std::vector<Vec3> noise_pos = scenario.noise_sources;
  if (noise_pos.empty() && scenario.noise_count > 0) {
    noise_pos = place_noise_sources(scenario.room, scenario.noise_count, scenario.seed);
  }
  if (noise_signals.size() != noise_pos.size()) {
    throw ContractViolation("mix: expected " + std::to_string(noise_pos.size()) +
                            " noise signals");
  }
  const std::size_t length = targets.front().size();
  if (length == 0) throw ContractViolation("mix: empty target signal");
  for (const auto& s : targets) {
    if (s.size() != length) throw ContractViolation("mix: target lengths differ");
    if (energy(s) == 0.0) throw ContractViolation("mix: zero-energy target signal");
  }
  for (const auto& s : noise_signals) {
    if (s.size() != length) throw ContractViolation("mix: noise length differs from targets");
  }

  MixtureBundle bundle;
  bundle.metadata.noise_positions = noise_pos;

  // Unscaled source images.
  bundle.images.assign(n_src, MultiSignal(n_mics));
  for (std::size_t n = 0; n < n_src; ++n) {
    for (std::size_t m = 0; m < n_mics; ++m) {
      const auto h = image_source_rir(scenario.room, scenario.sources[n], mics[m]);
      bundle.images[n][m] = convolve(targets[n], h, length);
    }
  }

  // Source 1 sits at -26 dBFS RMS on microphone 1; the others are set
  // relative to it so that E_1 / sum_{k>1} E_k matches iSIR.
  std::vector<double> gains(n_src);
  const double e1 = energy(bundle.images[0][0]);
  if (e1 == 0.0) throw ContractViolation("mix: source 1 image is silent at microphone 1");
  const double level = 0.05 * std::sqrt(static_cast<double>(length));
  gains[0] = level / std::sqrt(e1);
  const double others = n_src > 1
                            ? std::pow(10.0, -scenario.isir_db / 10.0) /
                                  static_cast<double>(n_src - 1)
                            : 0.0;
  for (std::size_t n = 1; n < n_src; ++n) {
    const double en = energy(bundle.images[n][0]);
    if (en == 0.0) throw ContractViolation("mix: a source image is silent at microphone 1");
    gains[n] = level * std::sqrt(others / en);
  }
  for (std::size_t n = 0; n < n_src; ++n) {
    for (auto& ch : bundle.images[n]) {
      for (auto& v : ch) v *= gains[n];
    }
  }
  bundle.metadata.source_gains = gains;

  MultiSignal clean(n_mics, std::vector<double>(length, 0.0));
  for (std::size_t n = 0; n < n_src; ++n) {
    for (std::size_t m = 0; m < n_mics; ++m) {
      for (std::size_t t = 0; t < length; ++t) clean[m][t] += bundle.images[n][m][t];
    }
  }

  // Point-noise field plus equal-variance sensor noise.
  MultiSignal raw_noise(n_mics, std::vector<double>(length, 0.0));
  for (std::size_t k = 0; k < noise_pos.size(); ++k) {
    for (std::size_t m = 0; m < n_mics; ++m) {
      const auto h = image_source_rir(scenario.room, noise_pos[k], mics[m]);
      const auto img = convolve(noise_signals[k], h, length);
      for (std::size_t t = 0; t < length; ++t) raw_noise[m][t] += img[t];
    }
  }
  double point_power = 0.0;
  for (const auto& ch : raw_noise) point_power += energy(ch);
  point_power /= static_cast<double>(n_mics * length);
  const double white_power =
      noise_pos.empty() ? energy(clean[0]) / static_cast<double>(length) : point_power;
  if (scenario.white_noise_scale > 0.0 && white_power > 0.0) {
    const double white_gain = scenario.white_noise_scale * std::sqrt(white_power);
    for (std::size_t m = 0; m < n_mics; ++m) {
      const auto w = white_noise(length, white_seed + 7919 * m);
      for (std::size_t t = 0; t < length; ++t) raw_noise[m][t] += white_gain * w[t];
    }
  }

  const double clean_energy = energy(clean[0]);
  const double raw_noise_energy = energy(raw_noise[0]);
  double sigma = 0.0;
  if (scenario.noise_gain) {
    sigma = *scenario.noise_gain;
  } else {
    if (raw_noise_energy == 0.0) {
      throw ContractViolation(
          "mix: noise is silent at microphone 1; set noise_gain to disable calibration");
    }
    sigma = std::sqrt(clean_energy / (raw_noise_energy *
                                      std::pow(10.0, scenario.isnr_db / 10.0)));
  }
  bundle.metadata.noise_gain = sigma;

  bundle.noise.assign(n_mics, std::vector<double>(length));
  bundle.observations.assign(n_mics, std::vector<double>(length));
  for (std::size_t m = 0; m < n_mics; ++m) {
    for (std::size_t t = 0; t < length; ++t) {
      bundle.noise[m][t] = sigma * raw_noise[m][t];
      bundle.observations[m][t] = clean[m][t] + bundle.noise[m][t];
    }
  }

  bundle.references.resize(n_src);
  for (std::size_t n = 0; n < n_src; ++n) bundle.references[n] = bundle.images[n][0];

  if (n_src > 1) {
    double rest = 0.0;
    for (std::size_t n = 1; n < n_src; ++n) rest += energy(bundle.references[n]);
    bundle.metadata.measured_isir_db = db10(energy(bundle.references[0]) / rest);
  }
  const double noise_energy = energy(bundle.noise[0]);
  if (noise_energy > 0.0) {
    bundle.metadata.measured_isnr_db = db10(clean_energy / noise_energy);
  }
  return bundle;
}

}  // namespace bss
