// bsskit: simulate, separate and evaluate streaming BSS experiments.
//
// Every subcommand accepts `--<config.key> <value>` overrides after its own
// options; they take precedence over the config file, which takes precedence
// over built-in defaults.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bss/error.hpp"
#include "bss/harness.hpp"

namespace {

namespace fs = std::filesystem;

// Turns leftover "--key value" / "--key=value" tokens into overrides.
bss::Overrides collect_overrides(const std::vector<std::string>& extras) {
  bss::Overrides out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& tok = extras[i];
    if (tok.rfind("--", 0) != 0 || tok.size() == 2) {
      throw CLI::ValidationError("unexpected argument '" + tok + "'");
    }
    const std::string body = tok.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < extras.size()) {
      out.emplace_back(body, extras[++i]);
    } else {
      throw CLI::ValidationError("override --" + body + " needs a value");
    }
  }
  return out;
}

std::optional<std::uint64_t> seed_option(long long seed) {
  if (seed < 0) return std::nullopt;
  return static_cast<std::uint64_t>(seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming blind source separation toolkit (AuxIVA, OverIVA, BiIVA)"};
  app.require_subcommand(1);
  app.footer("Unknown --key value pairs override config keys (dotted paths allowed).\n"
             "Relative output paths are placed under $" +
             std::string(bss::kOutputRootEnv) + " when it is set.");

  // rir
  bss::RirRequest rir;
  long long rir_seed = -1;
  auto* rir_cmd = app.add_subcommand("rir", "Export image-source impulse responses");
  rir_cmd->add_option("-s,--scenario", rir.scenario, "Scenario JSON")->required();
  rir_cmd->add_option("--seed", rir_seed, "Noise placement seed (default: scenario seed)");
  rir_cmd->add_option("-o,--out", rir.out_dir, "Output directory");
  rir_cmd->allow_extras();

  // simulate
  bss::SimulateRequest sim;
  long long sim_seed = -1;
  auto* sim_cmd = app.add_subcommand("simulate", "Mix sources through simulated room responses");
  sim_cmd->add_option("-s,--scenario", sim.scenario, "Scenario JSON")->required();
  sim_cmd->add_option("--source", sim.sources, "Mono source WAV, once per target")
      ->check(CLI::ExistingFile);
  sim_cmd->add_option("--seed", sim_seed, "Run seed (default: scenario seed)");
  sim_cmd->add_option("-o,--out", sim.out_dir, "Output directory");
  sim_cmd->allow_extras();

  // separate
  bss::SeparateRequest sep;
  bool raw = false;
  bool no_timing = false;
  auto* sep_cmd = app.add_subcommand("separate", "Run an online separator over a mixture");
  sep_cmd->add_option("-m,--mixture", sep.mixture, "Multichannel mixture WAV")
      ->required()
      ->check(CLI::ExistingFile);
  sep_cmd->add_option("-c,--config", sep.config, "Separator config JSON")
      ->check(CLI::ExistingFile);
  sep_cmd->add_option("-o,--out", sep.out_dir, "Output directory");
  sep_cmd->add_option("--reference-mic", sep.options.reference_mic,
                      "Projection-back microphone (1-based)");
  sep_cmd->add_flag("--raw", raw, "Skip projection back");
  sep_cmd->add_option("--fft-size", sep.options.stft.fft_size, "STFT length");
  sep_cmd->add_option("--hop", sep.options.stft.hop, "STFT hop");
  sep_cmd->add_option("--sample-rate", sep.options.stft.sample_rate, "Expected sample rate");
  sep_cmd->add_flag("--no-timing", no_timing, "Do not write frames.csv");
  sep_cmd->allow_extras();

  // evaluate
  bss::EvaluateRequest ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Segment-wise SIR/SDR of separated signals");
  ev_cmd->add_option("-e,--estimate", ev.estimates, "Estimate WAV (repeat)")
      ->required()
      ->check(CLI::ExistingFile);
  ev_cmd->add_option("-r,--reference", ev.references, "Reference image WAV (repeat)")
      ->required()
      ->check(CLI::ExistingFile);
  ev_cmd->add_option("-m,--mixture", ev.mixture, "Unprocessed mixture WAV")
      ->required()
      ->check(CLI::ExistingFile);
  ev_cmd->add_option("--segment-length", ev.eval.segment_length, "Segment length in seconds");
  ev_cmd->add_option("--filter-length", ev.eval.filter_length, "Allowed distortion taps");
  ev_cmd->add_option("--reference-channel", ev.eval.reference_channel,
                     "Mixture channel used as the baseline (1-based)");
  ev_cmd->add_option("--pairing", ev.eval.pairing, "Segments that decide the pairing")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, bss::PairingWindow>{
              {"converged", bss::PairingWindow::kConverged},
              {"first_segment", bss::PairingWindow::kFirstSegment}},
          CLI::ignore_case));
  ev_cmd->add_option("-o,--out", ev.out_csv, "Output CSV");

  // benchmark
  bss::BenchmarkRequest bench;
  auto* bench_cmd =
      app.add_subcommand("benchmark", "Simulate, separate and evaluate every (algorithm, seed)");
  bench_cmd->add_option("manifest", bench.manifest, "Manifest JSON (default: desk scale)")
      ->check(CLI::ExistingFile);
  bench_cmd->allow_extras();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*rir_cmd) {
      rir.seed = seed_option(rir_seed);
      rir.overrides = collect_overrides(rir_cmd->remaining());
      return bss::cmd_rir(rir);
    }
    if (*sim_cmd) {
      sim.seed = seed_option(sim_seed);
      sim.overrides = collect_overrides(sim_cmd->remaining());
      return bss::cmd_simulate(sim);
    }
    if (*sep_cmd) {
      if (raw) sep.options.reference_mic = 0;
      sep.write_timing = !no_timing;
      sep.overrides = collect_overrides(sep_cmd->remaining());
      return bss::cmd_separate(sep);
    }
    if (*ev_cmd) return bss::cmd_evaluate(ev);
    if (*bench_cmd) {
      bench.overrides = collect_overrides(bench_cmd->remaining());
      return bss::cmd_benchmark(bench);
    }
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const bss::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const bss::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
