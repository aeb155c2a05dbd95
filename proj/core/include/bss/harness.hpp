#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bss/io.hpp"
#include "bss/metrics.hpp"
#include "bss/roomsim.hpp"
#include "bss/separator.hpp"
#include "bss/stft.hpp"

namespace bss {

// Environment variable that relocates relative output directories.
inline constexpr const char* kOutputRootEnv = "BSS_OUTPUT_ROOT";

std::filesystem::path resolve_output(const std::filesystem::path& dir);

// Independent 64-bit stream seed derived from a run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

struct SeparateOptions {
  StftConfig stft;
  // 1-based microphone the outputs are projected back to; 0 keeps the raw
  // demixed spectra.
  int reference_mic = 1;
};

// Frame-synchronous separator over sample blocks. Output sample t is emitted
// as soon as every frame overlapping it has been processed, so the output is
// a function of the input seen so far only.
class StreamSeparator {
 public:
  StreamSeparator(const SeparatorConfig& cfg, const SeparateOptions& options);
  ~StreamSeparator();
  StreamSeparator(StreamSeparator&&) noexcept;
  StreamSeparator& operator=(StreamSeparator&&) noexcept;

  // Appends one block (M channels, equal lengths) and returns the newly
  // finalized output samples, one vector per source.
  MultiSignal push(const MultiSignal& block);

  // Processes the zero-padded tail; afterwards the total output length equals
  // the total input length.
  MultiSignal finish();

  long frames_processed() const;
  const std::vector<FrameTiming>& timing() const;
  const SeparatorState& state() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct SeparationResult {
  MultiSignal outputs;
  std::vector<FrameTiming> timing;
  double wall_seconds = 0.0;
  double audio_seconds = 0.0;

  double real_time_factor() const {
    return audio_seconds > 0.0 ? wall_seconds / audio_seconds : 0.0;
  }
};

SeparationResult separate(const MultiSignal& mixture, const SeparatorConfig& cfg,
                          const SeparateOptions& options = {});

// Target and point-noise signals for one run: recordings when the scenario
// names them, otherwise speech-like targets and pink noise drawn from
// `seed`.
struct SourceSignals {
  std::vector<std::vector<double>> targets;
  std::vector<std::vector<double>> noise;
};
SourceSignals make_signals(const Scenario& scenario, std::uint64_t seed);

// Resolves noise placement and signals for `seed` and mixes.
MixtureBundle simulate(const Scenario& scenario, std::uint64_t seed);

// Which parts of a run change with the seed.
enum class SeedAxis { kBoth, kSignals, kScenario };

struct RunManifest {
  Scenario scenario;
  std::vector<SeparatorConfig> separators;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::filesystem::path output_dir = "runs";
  EvalConfig eval;
  StftConfig stft;
  SeedAxis vary = SeedAxis::kBoth;
  int jobs = 1;
  bool write_audio = false;

  void validate() const;
};

// Desk-scale experiment: 3x3 array, two talkers, three noise points,
// T60 150 ms, 30 s, five seeds, all three algorithms.
RunManifest default_manifest();

// Keys prefixed `scenario.` or `separator.` are forwarded to every scenario
// or separator document; the rest apply to the manifest itself.
RunManifest parse_manifest(const std::string& json_text,
                           const std::filesystem::path& base_dir,
                           const Overrides& overrides = {});
RunManifest load_manifest(const std::filesystem::path& path,
                          const Overrides& overrides = {});

struct RunResult {
  Algorithm algorithm = Algorithm::kBiIva;
  std::uint64_t seed = 0;
  std::filesystem::path directory;
  bool ok = false;
  std::string error;
  EvalReport report;
  double real_time_factor = 0.0;
};

struct AlgorithmSummary {
  Algorithm algorithm = Algorithm::kBiIva;
  int runs = 0;
  // Per segment, across seeds and sources.
  std::vector<double> sir_improvement_mean, sir_improvement_std;
  std::vector<double> sdr_improvement_mean, sdr_improvement_std;
  std::vector<double> sir_mean, sdr_mean;
  // Converged improvement averaged over runs and sources.
  double converged_sir_improvement = 0.0;
  double converged_sdr_improvement = 0.0;
  double converged_sir = 0.0;
  double converged_sdr = 0.0;
};

struct BenchmarkResult {
  std::vector<RunResult> runs;
  std::vector<AlgorithmSummary> summaries;
  double segment_length = 2.0;
  bool all_ok() const;
  const AlgorithmSummary* find(Algorithm algorithm) const;
};

// Runs simulate -> separate -> evaluate for every (separator, seed) pair,
// writes one directory per run plus summary.csv and summary.txt, and keeps
// partial results when runs fail.
BenchmarkResult run_benchmark(const RunManifest& manifest);

std::string summary_csv(const BenchmarkResult& result);
std::string summary_table(const BenchmarkResult& result);

// ---------------------------------------------------------------------------
// Subcommands. Each returns the process exit code.

struct RirRequest {
  std::filesystem::path scenario;
  Overrides overrides;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir = "rir";
};
int cmd_rir(const RirRequest& request);

struct SimulateRequest {
  std::filesystem::path scenario;
  Overrides overrides;
  std::vector<std::filesystem::path> sources;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir = "mixture";
};
int cmd_simulate(const SimulateRequest& request);

struct SeparateRequest {
  std::filesystem::path mixture;
  std::filesystem::path config;  // empty: defaults sized to the mixture
  Overrides overrides;
  SeparateOptions options;
  std::filesystem::path out_dir = "separated";
  bool write_timing = true;
};
int cmd_separate(const SeparateRequest& request);

struct EvaluateRequest {
  std::vector<std::filesystem::path> estimates;
  std::vector<std::filesystem::path> references;
  std::filesystem::path mixture;
  EvalConfig eval;
  std::filesystem::path out_csv = "eval.csv";
};
int cmd_evaluate(const EvaluateRequest& request);

struct BenchmarkRequest {
  std::filesystem::path manifest;  // empty: default manifest
  Overrides overrides;
};
int cmd_benchmark(const BenchmarkRequest& request);

}  // namespace bss
