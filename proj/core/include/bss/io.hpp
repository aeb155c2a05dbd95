#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bss/metrics.hpp"
#include "bss/roomsim.hpp"
#include "bss/separator.hpp"
#include "bss/stft.hpp"

namespace bss {

struct AudioBuffer {
  int sample_rate = 16000;
  MultiSignal samples;  // one vector per channel

  int channels() const { return static_cast<int>(samples.size()); }
  std::size_t frames() const { return samples.empty() ? 0 : samples.front().size(); }
  void validate() const;
};

enum class WavFormat { kFloat32, kPcm16 };

struct WavWriteInfo {
  // Samples clamped to the PCM range (always 0 for float32).
  std::size_t clipped = 0;
};

// Reads RIFF WAVE files holding PCM16, PCM24 or IEEE float32 samples
// (WAVE_FORMAT_EXTENSIBLE accepted). Integer samples are scaled by 2^-(bits-1).
AudioBuffer read_wav(const std::filesystem::path& path);

WavWriteInfo write_wav(const AudioBuffer& buffer, const std::filesystem::path& path,
                       WavFormat format = WavFormat::kFloat32);

// Dotted-key overrides such as {"room.t60", "0.2"}. Values are parsed as
// JSON when possible and kept as strings otherwise.
using Overrides = std::vector<std::pair<std::string, std::string>>;

// Full validated scenario from a JSON document; missing keys take the
// documented defaults. Errors carry the JSON path of the offending key.
Scenario parse_scenario(const std::string& json_text, const Overrides& overrides = {});
Scenario load_scenario(const std::filesystem::path& path, const Overrides& overrides = {});

SeparatorConfig parse_separator_config(const std::string& json_text,
                                       const Overrides& overrides = {});
SeparatorConfig load_separator_config(const std::filesystem::path& path,
                                      const Overrides& overrides = {});

EvalConfig parse_eval_config(const std::string& json_text, const Overrides& overrides = {});
StftConfig parse_stft_config(const std::string& json_text, const Overrides& overrides = {});

// Most-square factorization m1 * m2 = mics with m1 >= m2.
std::pair<int, int> square_factors(int mics);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

// Infinite scores are written as +/-1e9 with clipped_flag = 1.
inline constexpr double kCsvInfinity = 1e9;
std::string eval_csv(const EvalReport& report);
void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);
// Inverse of eval_csv; restores infinities from the clipped flag.
EvalReport parse_eval_csv(const std::string& text);

std::string mix_metadata_json(const Scenario& scenario, const MixMetadata& metadata);

}  // namespace bss
