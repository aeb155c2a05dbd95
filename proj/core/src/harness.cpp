#include "bss/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "bss/error.hpp"
#include "bss/signals.hpp"

namespace bss {
namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

AudioBuffer to_buffer(const MultiSignal& channels, int sample_rate) {
  AudioBuffer buf;
  buf.sample_rate = sample_rate;
  buf.samples = channels;
  return buf;
}

std::vector<double> mono(const std::filesystem::path& path, int sample_rate) {
  const AudioBuffer buf = read_wav(path);
  if (buf.sample_rate != sample_rate) {
    throw IoError(path.string() + ": sample rate " + std::to_string(buf.sample_rate) +
                  " Hz does not match the configured " + std::to_string(sample_rate) + " Hz");
  }
  if (buf.channels() != 1) {
    throw IoError(path.string() + ": expected a single-channel file");
  }
  return buf.samples.front();
}

std::string frames_csv(const std::vector<FrameTiming>& timing) {
  std::string out = "frame,statistics_s,filters_s,constraint_s,output_s,total_s\n";
  for (std::size_t j = 0; j < timing.size(); ++j) {
    const auto& t = timing[j];
    out += std::to_string(j) + "," + fmt("%.9f", t.statistics) + "," +
           fmt("%.9f", t.filters) + "," + fmt("%.9f", t.constraint) + "," +
           fmt("%.9f", t.output) + "," + fmt("%.9f", t.total()) + "\n";
  }
  return out;
}

double clamp_db(double v) { return std::clamp(v, -kCsvInfinity, kCsvInfinity); }

void mean_std(const std::vector<double>& v, double& mean, double& stdev) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  stdev = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
}

}  // namespace

std::filesystem::path resolve_output(const std::filesystem::path& dir) {
  const char* root = std::getenv(kOutputRootEnv);
  if (root != nullptr && *root != '\0' && dir.is_relative()) {
    return std::filesystem::path(root) / dir;
  }
  return dir;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + stream + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------

struct StreamSeparator::Impl {
  Impl(const SeparatorConfig& c, const SeparateOptions& o)
      : cfg(c), options(o), stft(o.stft), state(init_state(c, o.stft.num_bins())) {
    cfg.validate();
    if (options.reference_mic < 0 || options.reference_mic > cfg.active_channels()) {
      throw ConfigError("reference_mic must lie in [0, " +
                        std::to_string(cfg.active_channels()) + "]");
    }
    input.assign(cfg.mics, {});
    numer.assign(cfg.sources, {});
  }

  SeparatorConfig cfg;
  SeparateOptions options;
  Stft stft;
  SeparatorState state;
  std::vector<FrameTiming> timing;

  // Input samples starting at absolute index `input_start`.
  MultiSignal input;
  std::size_t input_start = 0;
  std::size_t received = 0;
  // Overlap-add accumulators starting at absolute index `emitted`.
  MultiSignal numer;
  std::vector<double> norm;
  std::size_t emitted = 0;
  long next_frame = 0;
  std::vector<double> scratch;

  std::size_t frame_start(long j) const {
    return static_cast<std::size_t>(j) * options.stft.hop;
  }

  void process_next() {
    const std::size_t start = frame_start(next_frame);
    const int n = options.stft.fft_size;
    MultiSignal window_in(cfg.mics);
    for (int m = 0; m < cfg.mics; ++m) {
      const auto& ch = input[m];
      const std::size_t off = start - input_start;
      const std::size_t end = std::min(ch.size(), off + n);
      window_in[m].assign(ch.begin() + static_cast<long>(std::min(off, ch.size())),
                          ch.begin() + static_cast<long>(end));
    }
    const SpectralFrame frame = stft.analyze_frame(window_in, 0, next_frame);
    FrameTiming t;
    SourceEstimate est;
    try {
      est = process_frame(state, frame, &t);
    } catch (const SingularMatrix& e) {
      throw SingularMatrix("frame " + std::to_string(next_frame) + ": " + e.what(), e.bin(),
                           e.source());
    }
    const auto out_start = Clock::now();
    const CMat spectra = options.reference_mic > 0
                             ? projection_back(state, est.spectra, options.reference_mic - 1)
                             : est.spectra;
    const std::size_t need = start + n - emitted;
    if (norm.size() < need) {
      norm.resize(need, 0.0);
      for (auto& ch : numer) ch.resize(need, 0.0);
    }
    const auto& w = stft.window();
    const std::size_t off = start - emitted;
    for (int s = 0; s < cfg.sources; ++s) {
      stft.inverse_frame(spectra.row(s).transpose(), scratch);
      auto& acc = numer[s];
      for (int k = 0; k < n; ++k) acc[off + k] += scratch[k];
    }
    for (int k = 0; k < n; ++k) norm[off + k] += w[k] * w[k];
    t.output += seconds_since(out_start);
    timing.push_back(t);
    ++next_frame;
  }

  // Moves finalized samples [emitted, upto) to the caller.
  MultiSignal emit(std::size_t upto) {
    MultiSignal out(cfg.sources);
    if (upto <= emitted) return out;
    const std::size_t count = upto - emitted;
    if (norm.size() < count) {
      norm.resize(count, 0.0);
      for (auto& ch : numer) ch.resize(count, 0.0);
    }
    for (int s = 0; s < cfg.sources; ++s) {
      out[s].resize(count);
      for (std::size_t k = 0; k < count; ++k) {
        out[s][k] = numer[s][k] / stft.synthesis_norm(norm[k]);
      }
      numer[s].erase(numer[s].begin(), numer[s].begin() + static_cast<long>(count));
    }
    norm.erase(norm.begin(), norm.begin() + static_cast<long>(count));
    emitted = upto;
    return out;
  }

  // Drops input no longer needed by future frames.
  void trim_input() {
    const std::size_t keep_from = frame_start(next_frame);
    if (keep_from <= input_start) return;
    const std::size_t drop = std::min(keep_from - input_start, input.front().size());
    for (auto& ch : input) ch.erase(ch.begin(), ch.begin() + static_cast<long>(drop));
    input_start += drop;
  }
};

StreamSeparator::StreamSeparator(const SeparatorConfig& cfg, const SeparateOptions& options)
    : impl_(std::make_unique<Impl>(cfg, options)) {}
StreamSeparator::~StreamSeparator() = default;
StreamSeparator::StreamSeparator(StreamSeparator&&) noexcept = default;
StreamSeparator& StreamSeparator::operator=(StreamSeparator&&) noexcept = default;

MultiSignal StreamSeparator::push(const MultiSignal& block) {
  auto& d = *impl_;
  if (static_cast<int>(block.size()) != d.cfg.mics) {
    throw ContractViolation("stream: expected " + std::to_string(d.cfg.mics) +
                            " channels, got " + std::to_string(block.size()));
  }
  const std::size_t len = block.front().size();
  for (int m = 0; m < d.cfg.mics; ++m) {
    if (block[m].size() != len) throw ContractViolation("stream: channel lengths differ");
    d.input[m].insert(d.input[m].end(), block[m].begin(), block[m].end());
  }
  d.received += len;
  const auto n = static_cast<std::size_t>(d.options.stft.fft_size);
  while (d.frame_start(d.next_frame) + n <= d.received) d.process_next();
  d.trim_input();
  // Every frame starting at or before t has run once frame next_frame - 1 is
  // done, so samples before frame_start(next_frame) are final.
  return d.emit(std::min(d.frame_start(d.next_frame), d.received));
}

MultiSignal StreamSeparator::finish() {
  auto& d = *impl_;
  if (d.received == 0) throw ContractViolation("stream: no input");
  const long total = frame_count(d.received, d.options.stft);
  while (d.next_frame < total) d.process_next();
  d.trim_input();
  return d.emit(d.received);
}

long StreamSeparator::frames_processed() const { return impl_->next_frame; }
const std::vector<FrameTiming>& StreamSeparator::timing() const { return impl_->timing; }
const SeparatorState& StreamSeparator::state() const { return impl_->state; }

SeparationResult separate(const MultiSignal& mixture, const SeparatorConfig& cfg,
                          const SeparateOptions& options) {
  if (static_cast<int>(mixture.size()) != cfg.mics) {
    throw ContractViolation("separate: mixture has " + std::to_string(mixture.size()) +
                            " channels, config expects " + std::to_string(cfg.mics));
  }
  const auto start = Clock::now();
  StreamSeparator stream(cfg, options);
  SeparationResult result;
  result.outputs = stream.push(mixture);
  const MultiSignal tail = stream.finish();
  for (std::size_t s = 0; s < tail.size(); ++s) {
    result.outputs[s].insert(result.outputs[s].end(), tail[s].begin(), tail[s].end());
  }
  result.wall_seconds = seconds_since(start);
  result.timing = stream.timing();
  result.audio_seconds =
      static_cast<double>(mixture.front().size()) / options.stft.sample_rate;
  return result;
}

// ---------------------------------------------------------------------------

SourceSignals make_signals(const Scenario& scenario, std::uint64_t seed) {
  const int fs = scenario.room.sample_rate;
  auto length = static_cast<std::size_t>(std::llround(scenario.duration_s * fs));
  SourceSignals sig;
  if (!scenario.source_files.empty()) {
    for (const auto& f : scenario.source_files) sig.targets.push_back(mono(f, fs));
  } else {
    for (std::size_t n = 0; n < scenario.sources.size(); ++n) {
      sig.targets.push_back(speech_like(scenario.duration_s, fs, derive_seed(seed, 100 + n)));
    }
  }
  const std::size_t noises = scenario.noise_sources.empty()
                                 ? static_cast<std::size_t>(scenario.noise_count)
                                 : scenario.noise_sources.size();
  if (!scenario.noise_files.empty()) {
    for (const auto& f : scenario.noise_files) sig.noise.push_back(mono(f, fs));
  } else {
    for (std::size_t k = 0; k < noises; ++k) {
      sig.noise.push_back(pink_noise(length, derive_seed(seed, 200 + k)));
    }
  }
  // Recordings shorter than the scenario duration shorten the run.
  for (const auto* group : {&sig.targets, &sig.noise}) {
    for (const auto& s : *group) length = std::min(length, s.size());
  }
  for (auto* group : {&sig.targets, &sig.noise}) {
    for (auto& s : *group) s.resize(length, 0.0);
  }
  return sig;
}

MixtureBundle simulate(const Scenario& scenario, std::uint64_t seed) {
  const Scenario sc = scenario.resolved(seed);
  const SourceSignals sig = make_signals(sc, seed);
  return mix(sc, sig.targets, sig.noise, derive_seed(seed, 300));
}

// ---------------------------------------------------------------------------

void RunManifest::validate() const {
  scenario.validate();
  if (separators.empty()) throw ConfigError("manifest: no separators");
  if (seeds.empty()) throw ConfigError("manifest: no seeds");
  for (const auto& s : separators) {
    s.validate();
    if (s.mics != static_cast<int>(scenario.array.positions.size())) {
      throw ConfigError("manifest: separator " + to_string(s.algorithm) + " expects " +
                        std::to_string(s.mics) + " mics, scenario has " +
                        std::to_string(scenario.array.positions.size()));
    }
    if (s.sources != static_cast<int>(scenario.sources.size())) {
      throw ConfigError("manifest: separator " + to_string(s.algorithm) +
                        " source count differs from the scenario");
    }
  }
  eval.validate();
  stft.validate();
  if (stft.sample_rate != scenario.room.sample_rate) {
    throw ConfigError("manifest: stft sample rate differs from the scenario sample rate");
  }
  if (jobs < 1) throw ConfigError("manifest: jobs must be >= 1");
}

RunManifest default_manifest() {
  RunManifest m;
  m.scenario = parse_scenario(R"({"room": {"t60": 0.15}})");
  for (const char* name : {"auxiva", "overiva", "biiva"}) {
    m.separators.push_back(
        parse_separator_config(std::string("{\"algorithm\": \"") + name + "\"}"));
  }
  m.output_dir = "runs/desk_scale";
  return m;
}

RunManifest parse_manifest(const std::string& json_text, const std::filesystem::path& base_dir,
                           const Overrides& overrides) {
  Overrides own, scenario_ov, separator_ov;
  for (const auto& [k, v] : overrides) {
    if (k.rfind("scenario.", 0) == 0) {
      scenario_ov.emplace_back(k.substr(9), v);
    } else if (k.rfind("separator.", 0) == 0) {
      separator_ov.emplace_back(k.substr(10), v);
    } else {
      own.emplace_back(k, v);
    }
  }
  json doc;
  try {
    doc = json_text.empty() ? json::object() : json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("manifest: malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("manifest $: expected an object");
  for (const auto& [k, v] : own) {
    json value;
    try {
      value = json::parse(v);
    } catch (const json::parse_error&) {
      value = v;
    }
    doc[k] = value;
  }
  static const std::vector<std::string> kKeys = {"scenario", "separators", "seeds",
                                                  "output_dir", "eval", "stft",
                                                  "vary", "jobs", "write_audio"};
  for (const auto& [k, unused] : doc.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), k) == kKeys.end()) {
      throw ConfigError("manifest $." + k + ": unknown key");
    }
  }
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_relative() ? base_dir / path : path;
  };
  auto wrap = [](const std::string& where, const auto& fn) {
    try {
      return fn();
    } catch (const json::exception& e) {
      throw ConfigError("manifest " + where + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("manifest " + where + ": " + e.what());
    }
  };

  RunManifest m = default_manifest();
  if (doc.contains("scenario")) {
    const json& s = doc["scenario"];
    m.scenario = wrap("$.scenario", [&] {
      return s.is_string() ? load_scenario(resolve(s.get<std::string>()), scenario_ov)
                           : parse_scenario(s.dump(), scenario_ov);
    });
  } else if (!scenario_ov.empty()) {
    m.scenario = wrap("$.scenario", [&] { return parse_scenario("{}", scenario_ov); });
  }
  const int mics = static_cast<int>(m.scenario.array.positions.size());
  const int sources = static_cast<int>(m.scenario.sources.size());
  // Separator documents inherit the scenario's array and source count unless
  // they set them.
  Overrides sizing = {{"mics", std::to_string(mics)}, {"sources", std::to_string(sources)}};
  auto separator_from = [&](const json& entry, const std::string& where) {
    return wrap(where, [&] {
      json body = entry.is_string() ? json::parse(read_text(resolve(entry.get<std::string>())))
                                    : entry;
      Overrides ov;
      for (const auto& [k, v] : sizing) {
        if (!body.contains(k)) ov.emplace_back(k, v);
      }
      ov.insert(ov.end(), separator_ov.begin(), separator_ov.end());
      return parse_separator_config(body.dump(), ov);
    });
  };
  m.separators.clear();
  if (doc.contains("separators")) {
    const json& list = doc["separators"];
    if (!list.is_array() || list.empty()) {
      throw ConfigError("manifest $.separators: expected a non-empty array");
    }
    for (std::size_t i = 0; i < list.size(); ++i) {
      m.separators.push_back(
          separator_from(list[i], "$.separators[" + std::to_string(i) + "]"));
    }
  } else {
    for (const char* name : {"auxiva", "overiva", "biiva"}) {
      m.separators.push_back(separator_from(json{{"algorithm", name}}, "$.separators"));
    }
  }
  if (doc.contains("seeds")) {
    m.seeds = wrap("$.seeds", [&] {
      auto v = doc["seeds"].get<std::vector<std::uint64_t>>();
      if (v.empty()) throw ConfigError("need at least one seed");
      return v;
    });
  }
  if (doc.contains("output_dir")) {
    m.output_dir = wrap("$.output_dir", [&] { return std::filesystem::path(doc["output_dir"].get<std::string>()); });
  }
  if (doc.contains("eval")) {
    m.eval = wrap("$.eval", [&] { return parse_eval_config(doc["eval"].dump()); });
  }
  if (doc.contains("stft")) {
    m.stft = wrap("$.stft", [&] { return parse_stft_config(doc["stft"].dump()); });
  } else {
    m.stft.sample_rate = m.scenario.room.sample_rate;
  }
  if (doc.contains("vary")) {
    const auto v = wrap("$.vary", [&] { return doc["vary"].get<std::string>(); });
    if (v == "both") {
      m.vary = SeedAxis::kBoth;
    } else if (v == "signals") {
      m.vary = SeedAxis::kSignals;
    } else if (v == "scenario") {
      m.vary = SeedAxis::kScenario;
    } else {
      throw ConfigError("manifest $.vary: expected \"both\", \"signals\" or \"scenario\"");
    }
  }
  if (doc.contains("jobs")) m.jobs = wrap("$.jobs", [&] { return doc["jobs"].get<int>(); });
  if (doc.contains("write_audio")) {
    m.write_audio = wrap("$.write_audio", [&] { return doc["write_audio"].get<bool>(); });
  }
  m.validate();
  return m;
}

RunManifest load_manifest(const std::filesystem::path& path, const Overrides& overrides) {
  try {
    return parse_manifest(read_text(path), path.parent_path(), overrides);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

bool BenchmarkResult::all_ok() const {
  return std::all_of(runs.begin(), runs.end(), [](const RunResult& r) { return r.ok; });
}

const AlgorithmSummary* BenchmarkResult::find(Algorithm algorithm) const {
  for (const auto& s : summaries) {
    if (s.algorithm == algorithm) return &s;
  }
  return nullptr;
}

namespace {

std::string run_json(const RunResult& r, const SeparatorConfig& cfg) {
  json doc;
  doc["algorithm"] = to_string(r.algorithm);
  doc["seed"] = r.seed;
  doc["ok"] = r.ok;
  doc["alpha"] = cfg.alpha;
  doc["mics"] = cfg.mics;
  doc["sources"] = cfg.sources;
  if (cfg.algorithm == Algorithm::kBiIva) {
    doc["m1"] = cfg.m1;
    doc["m2"] = cfg.m2;
  }
  if (!r.ok) doc["error"] = r.error;
  if (r.ok) {
    auto clamp_all = [](std::vector<double> v) {
      for (auto& x : v) x = clamp_db(x);
      return v;
    };
    doc["real_time_factor"] = r.real_time_factor;
    doc["assignment"] = r.report.assignment;
    doc["converged_sir_db"] = clamp_all(r.report.converged_sir_db);
    doc["converged_sdr_db"] = clamp_all(r.report.converged_sdr_db);
    doc["converged_sir_improvement_db"] = clamp_all(r.report.converged_sir_improvement_db);
    doc["converged_sdr_improvement_db"] = clamp_all(r.report.converged_sdr_improvement_db);
  }
  return doc.dump(2) + "\n";
}

}  // namespace

BenchmarkResult run_benchmark(const RunManifest& manifest) {
  manifest.validate();
  const std::filesystem::path out_dir = resolve_output(manifest.output_dir);
  const int fs = manifest.scenario.room.sample_rate;

  struct Job {
    std::size_t separator;
    std::size_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t k = 0; k < manifest.separators.size(); ++k) {
    for (std::size_t s = 0; s < manifest.seeds.size(); ++s) jobs.push_back({k, s});
  }
  BenchmarkResult result;
  result.segment_length = manifest.eval.segment_length;
  result.runs.resize(jobs.size());

  // Mixtures depend only on the seed; build each once.
  std::vector<std::optional<MixtureBundle>> mixtures(manifest.seeds.size());
  std::vector<std::string> mixture_errors(manifest.seeds.size());
  std::vector<std::once_flag> mixture_once(manifest.seeds.size());
  auto mixture_for = [&](std::size_t s) -> const MixtureBundle& {
    std::call_once(mixture_once[s], [&] {
      const std::uint64_t seed = manifest.seeds[s];
      try {
        Scenario sc = manifest.scenario;
        const std::uint64_t fixed = manifest.scenario.seed;
        const std::uint64_t scene_seed = manifest.vary == SeedAxis::kSignals ? fixed : seed;
        const std::uint64_t signal_seed = manifest.vary == SeedAxis::kScenario ? fixed : seed;
        sc = sc.resolved(scene_seed);
        const SourceSignals sig = make_signals(sc, signal_seed);
        mixtures[s] = mix(sc, sig.targets, sig.noise, derive_seed(signal_seed, 300));
      } catch (const std::exception& e) {
        mixture_errors[s] = e.what();
      }
    });
    if (!mixtures[s]) throw std::runtime_error("simulation failed: " + mixture_errors[s]);
    return *mixtures[s];
  };

  auto run_one = [&](std::size_t index) {
    const Job& job = jobs[index];
    const SeparatorConfig& cfg = manifest.separators[job.separator];
    RunResult& r = result.runs[index];
    r.algorithm = cfg.algorithm;
    r.seed = manifest.seeds[job.seed];
    r.directory = out_dir / (to_string(cfg.algorithm) + "_seed" + std::to_string(r.seed));
    try {
      const MixtureBundle& bundle = mixture_for(job.seed);
      SeparateOptions options;
      options.stft = manifest.stft;
      options.reference_mic = manifest.eval.reference_channel;
      const SeparationResult sep = separate(bundle.observations, cfg, options);
      const int ref = manifest.eval.reference_channel - 1;
      std::vector<std::vector<double>> refs;
      for (const auto& img : bundle.images) refs.push_back(img.at(ref));
      r.report = convergence_curve(sep.outputs, refs, bundle.observations.at(ref), fs,
                                   manifest.eval);
      r.real_time_factor = sep.real_time_factor();
      r.ok = true;
      write_eval_csv(r.report, r.directory / "eval.csv");
      write_text(r.directory / "frames.csv", frames_csv(sep.timing));
      if (manifest.write_audio) {
        for (std::size_t n = 0; n < sep.outputs.size(); ++n) {
          write_wav(to_buffer({sep.outputs[n]}, fs),
                    r.directory / ("source_" + std::to_string(n + 1) + ".wav"));
        }
      }
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    try {
      write_text(r.directory / "run.json", run_json(r, cfg));
    } catch (const std::exception& e) {
      if (r.ok) {
        r.ok = false;
        r.error = e.what();
      }
    }
  };

  const int workers = std::min<int>(manifest.jobs, static_cast<int>(jobs.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < jobs.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) run_one(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  // Aggregate per algorithm, in manifest order.
  for (const auto& cfg : manifest.separators) {
    if (result.find(cfg.algorithm) != nullptr) continue;
    AlgorithmSummary sum;
    sum.algorithm = cfg.algorithm;
    int segments = 0;
    for (const auto& r : result.runs) {
      if (r.ok && r.algorithm == cfg.algorithm) {
        ++sum.runs;
        segments = segments == 0 ? r.report.segments : std::min(segments, r.report.segments);
      }
    }
    if (sum.runs > 0) {
      std::vector<std::vector<double>> sir_i(segments), sdr_i(segments), sir(segments),
          sdr(segments);
      std::vector<double> conv_sir_i, conv_sdr_i, conv_sir, conv_sdr;
      for (const auto& r : result.runs) {
        if (!r.ok || r.algorithm != cfg.algorithm) continue;
        for (const auto& sc : r.report.scores) {
          if (sc.segment >= segments) continue;
          sir_i[sc.segment].push_back(clamp_db(sc.sir_improvement_db));
          sdr_i[sc.segment].push_back(clamp_db(sc.sdr_improvement_db));
          sir[sc.segment].push_back(clamp_db(sc.sir_db));
          sdr[sc.segment].push_back(clamp_db(sc.sdr_db));
        }
        for (std::size_t n = 0; n < r.report.converged_sir_db.size(); ++n) {
          conv_sir_i.push_back(r.report.converged_sir_improvement_db[n]);
          conv_sdr_i.push_back(r.report.converged_sdr_improvement_db[n]);
          conv_sir.push_back(r.report.converged_sir_db[n]);
          conv_sdr.push_back(r.report.converged_sdr_db[n]);
        }
      }
      for (int s = 0; s < segments; ++s) {
        double m, sd;
        mean_std(sir_i[s], m, sd);
        sum.sir_improvement_mean.push_back(m);
        sum.sir_improvement_std.push_back(sd);
        mean_std(sdr_i[s], m, sd);
        sum.sdr_improvement_mean.push_back(m);
        sum.sdr_improvement_std.push_back(sd);
        mean_std(sir[s], m, sd);
        sum.sir_mean.push_back(m);
        mean_std(sdr[s], m, sd);
        sum.sdr_mean.push_back(m);
      }
      double unused;
      mean_std(conv_sir_i, sum.converged_sir_improvement, unused);
      mean_std(conv_sdr_i, sum.converged_sdr_improvement, unused);
      mean_std(conv_sir, sum.converged_sir, unused);
      mean_std(conv_sdr, sum.converged_sdr, unused);
    }
    result.summaries.push_back(std::move(sum));
  }

  write_text(out_dir / "summary.csv", summary_csv(result));
  write_text(out_dir / "summary.txt", summary_table(result));
  return result;
}

std::string summary_csv(const BenchmarkResult& result) {
  std::string out =
      "algorithm,segment_index,t_start_s,runs,sir_improvement_mean_db,"
      "sir_improvement_std_db,sdr_improvement_mean_db,sdr_improvement_std_db,"
      "sir_mean_db,sdr_mean_db\n";
  for (const auto& s : result.summaries) {
    for (std::size_t k = 0; k < s.sir_improvement_mean.size(); ++k) {
      out += to_string(s.algorithm) + "," + std::to_string(k) + "," +
             fmt("%.3f", static_cast<double>(k) * result.segment_length) + "," +
             std::to_string(s.runs) + "," + fmt("%.6f", s.sir_improvement_mean[k]) + "," +
             fmt("%.6f", s.sir_improvement_std[k]) + "," +
             fmt("%.6f", s.sdr_improvement_mean[k]) + "," +
             fmt("%.6f", s.sdr_improvement_std[k]) + "," + fmt("%.6f", s.sir_mean[k]) + "," +
             fmt("%.6f", s.sdr_mean[k]) + "\n";
    }
  }
  return out;
}

std::string summary_table(const BenchmarkResult& result) {
  std::string out = "algorithm  runs  conv_SIRi_dB  conv_SDRi_dB  conv_SIR_dB  conv_SDR_dB\n";
  for (const auto& s : result.summaries) {
    char line[160];
    std::snprintf(line, sizeof line, "%-9s  %4d  %12.2f  %12.2f  %11.2f  %11.2f\n",
                  to_string(s.algorithm).c_str(), s.runs, s.converged_sir_improvement,
                  s.converged_sdr_improvement, s.converged_sir, s.converged_sdr);
    out += line;
  }
  const auto* bi = result.find(Algorithm::kBiIva);
  const auto* over = result.find(Algorithm::kOverIva);
  const auto* aux = result.find(Algorithm::kAuxIva);
  if (bi && over && aux && bi->runs && over->runs && aux->runs) {
    const bool holds = bi->converged_sir_improvement >= over->converged_sir_improvement &&
                       over->converged_sir_improvement >= aux->converged_sir_improvement;
    out += std::string("ordering biiva >= overiva >= auxiva (SIRi): ") +
           (holds ? "holds" : "does not hold") + "\n";
  }
  int failed = 0;
  for (const auto& r : result.runs) failed += r.ok ? 0 : 1;
  out += "failed runs: " + std::to_string(failed) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

int cmd_rir(const RirRequest& request) {
  const Scenario base = load_scenario(request.scenario, request.overrides);
  const Scenario sc = base.resolved(request.seed.value_or(base.seed));
  const std::filesystem::path out = resolve_output(request.out_dir);
  const int fs = sc.room.sample_rate;
  json info;
  info["sample_rate"] = fs;
  info["reflection"] = sc.room.reflection;
  info["t60_target"] = sc.room.t60;
  auto export_set = [&](const std::vector<Vec3>& points, const std::string& prefix) {
    json measured = json::array();
    for (std::size_t k = 0; k < points.size(); ++k) {
      MultiSignal rirs;
      for (const auto& mic : sc.array.positions) {
        rirs.push_back(image_source_rir(sc.room, points[k], mic));
      }
      const double t60 = measure_t60(rirs.front(), fs);
      measured.push_back(std::isfinite(t60) ? json(t60) : json(nullptr));
      write_wav(to_buffer(rirs, fs), out / (prefix + std::to_string(k + 1) + ".wav"));
    }
    return measured;
  };
  info["t60_measured_sources"] = export_set(sc.sources, "rir_source_");
  info["t60_measured_noise"] = export_set(sc.noise_sources, "rir_noise_");
  write_text(out / "rir.json", info.dump(2) + "\n");
  std::cout << "wrote " << sc.sources.size() + sc.noise_sources.size()
            << " impulse response sets to " << out.string() << "\n";
  return 0;
}

int cmd_simulate(const SimulateRequest& request) {
  Scenario sc = load_scenario(request.scenario, request.overrides);
  if (!request.sources.empty()) {
    if (request.sources.size() != sc.sources.size()) {
      throw ConfigError("simulate: scenario has " + std::to_string(sc.sources.size()) +
                        " sources but " + std::to_string(request.sources.size()) +
                        " files were given");
    }
    sc.source_files.clear();
    for (const auto& p : request.sources) sc.source_files.push_back(p.string());
  }
  const std::uint64_t seed = request.seed.value_or(sc.seed);
  const Scenario resolved = sc.resolved(seed);
  const MixtureBundle bundle = simulate(sc, seed);
  const std::filesystem::path out = resolve_output(request.out_dir);
  const int fs = sc.room.sample_rate;
  write_wav(to_buffer(bundle.observations, fs), out / "observations.wav");
  for (std::size_t n = 0; n < bundle.references.size(); ++n) {
    write_wav(to_buffer({bundle.references[n]}, fs),
              out / ("reference_" + std::to_string(n + 1) + ".wav"));
  }
  write_wav(to_buffer(bundle.noise, fs), out / "noise.wav");
  write_text(out / "metadata.json", mix_metadata_json(resolved, bundle.metadata));
  std::cout << "iSIR " << fmt("%.3f", bundle.metadata.measured_isir_db) << " dB, iSNR "
            << fmt("%.3f", bundle.metadata.measured_isnr_db) << " dB -> " << out.string()
            << "\n";
  if (!std::isfinite(bundle.metadata.measured_isir_db)) {
    std::cout << "note: iSIR is undefined for a single source\n";
  }
  return 0;
}

int cmd_separate(const SeparateRequest& request) {
  const AudioBuffer mixture = read_wav(request.mixture);
  if (mixture.sample_rate != request.options.stft.sample_rate) {
    throw ConfigError("separate: mixture is " + std::to_string(mixture.sample_rate) +
                      " Hz but the STFT is configured for " +
                      std::to_string(request.options.stft.sample_rate) + " Hz");
  }
  Overrides ov = {{"mics", std::to_string(mixture.channels())}};
  ov.insert(ov.end(), request.overrides.begin(), request.overrides.end());
  SeparatorConfig cfg;
  if (request.config.empty()) {
    cfg = parse_separator_config("{}", ov);
  } else {
    // The file decides mics unless overridden; it must then match the audio.
    cfg = load_separator_config(request.config, request.overrides);
  }
  if (cfg.mics != mixture.channels()) {
    throw ConfigError("separate: mixture has " + std::to_string(mixture.channels()) +
                      " channels, config expects " + std::to_string(cfg.mics));
  }
  const SeparationResult sep = separate(mixture.samples, cfg, request.options);
  const std::filesystem::path out = resolve_output(request.out_dir);
  for (std::size_t n = 0; n < sep.outputs.size(); ++n) {
    write_wav(to_buffer({sep.outputs[n]}, mixture.sample_rate),
              out / ("source_" + std::to_string(n + 1) + ".wav"));
  }
  if (request.write_timing) write_text(out / "frames.csv", frames_csv(sep.timing));
  json info;
  info["algorithm"] = to_string(cfg.algorithm);
  info["frames"] = sep.timing.size();
  info["wall_seconds"] = sep.wall_seconds;
  info["audio_seconds"] = sep.audio_seconds;
  info["real_time_factor"] = sep.real_time_factor();
  info["frames_per_second"] =
      sep.wall_seconds > 0.0 ? static_cast<double>(sep.timing.size()) / sep.wall_seconds : 0.0;
  write_text(out / "separate.json", info.dump(2) + "\n");
  std::cout << to_string(cfg.algorithm) << ": " << sep.timing.size() << " frames, real-time factor "
            << fmt("%.3f", sep.real_time_factor()) << " -> " << out.string() << "\n";
  return 0;
}

int cmd_evaluate(const EvaluateRequest& request) {
  request.eval.validate();
  if (request.estimates.size() != request.references.size() || request.estimates.empty()) {
    throw ConfigError("evaluate: need the same number of estimates and references");
  }
  int fs = 0;
  auto load_mono = [&](const std::filesystem::path& p) {
    const AudioBuffer b = read_wav(p);
    if (fs == 0) fs = b.sample_rate;
    if (b.sample_rate != fs) throw IoError(p.string() + ": sample rate mismatch");
    if (b.channels() != 1) throw IoError(p.string() + ": expected a single-channel file");
    return b.samples.front();
  };
  std::vector<std::vector<double>> est, ref;
  for (const auto& p : request.references) ref.push_back(load_mono(p));
  for (const auto& p : request.estimates) est.push_back(load_mono(p));
  const AudioBuffer mixture = read_wav(request.mixture);
  if (mixture.sample_rate != fs) throw IoError(request.mixture.string() + ": sample rate mismatch");
  if (request.eval.reference_channel > mixture.channels()) {
    throw ConfigError("evaluate: reference_channel exceeds the mixture channel count");
  }
  // Trim everything to the shortest signal.
  std::size_t len = mixture.frames();
  for (const auto& s : est) len = std::min(len, s.size());
  for (const auto& s : ref) len = std::min(len, s.size());
  for (auto* group : {&est, &ref}) {
    for (auto& s : *group) s.resize(len);
  }
  std::vector<double> mix_ref = mixture.samples[request.eval.reference_channel - 1];
  mix_ref.resize(len);
  const EvalReport report = convergence_curve(est, ref, mix_ref, fs, request.eval);
  const auto out = resolve_output(request.out_csv);
  write_eval_csv(report, out);
  for (std::size_t n = 0; n < ref.size(); ++n) {
    std::cout << "source " << n + 1 << " (estimate " << report.assignment[n] + 1
              << "): converged SIR " << fmt("%.2f", report.converged_sir_db[n]) << " dB, SDR "
              << fmt("%.2f", report.converged_sdr_db[n]) << " dB, SIRi "
              << fmt("%.2f", report.converged_sir_improvement_db[n]) << " dB\n";
  }
  return 0;
}

int cmd_benchmark(const BenchmarkRequest& request) {
  const RunManifest manifest =
      request.manifest.empty()
          ? parse_manifest("{}", std::filesystem::current_path(), request.overrides)
          : load_manifest(request.manifest, request.overrides);
  const BenchmarkResult result = run_benchmark(manifest);
  std::cout << summary_table(result);
  for (const auto& r : result.runs) {
    if (!r.ok) {
      std::cerr << to_string(r.algorithm) << " seed " << r.seed << " failed: " << r.error << "\n";
    }
  }
  return result.all_ok() ? 0 : 1;
}

}  // namespace bss
