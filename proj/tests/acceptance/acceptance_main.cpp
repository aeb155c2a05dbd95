// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero when a criterion fails that was not declared with --expect-fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/LU>
#include <Eigen/QR>

#include "bss/harness.hpp"
#include "bss/metrics.hpp"
#include "bss/numerics.hpp"
#include "bss/roomsim.hpp"
#include "bss/separator.hpp"
#include "bss/signals.hpp"
#include "bss/stft.hpp"
#include "test_support.hpp"

namespace bss {
namespace {

using testing::kron_oracle;
using testing::random_hpd;
using testing::random_matrix;
using testing::random_vector;
using testing::Rng;
using testing::uniform_int;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---------------------------------------------------------------------------

Outcome kronecker_identities() {
  const auto start = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    int m1, m2;
    do {
      m1 = uniform_int(rng, 1, 36);
      m2 = uniform_int(rng, 1, 36);
    } while (m1 * m2 > 36);
    const CVec a = random_vector(m1, rng);
    const CVec b = random_vector(m2, rng);
    const CVec k = kron_oracle(a, b);
    worst = std::max({worst, testing::max_abs(kron(a, b) - k),
                      testing::max_abs(lift_left(b, m1) * a - k),
                      testing::max_abs(lift_right(a, m2) * b - k)});
  }
  const double t = seconds_since(start);
  return {worst <= 1e-15 && t < 5.0,
          "max elementwise error " + fmt("%.2e", worst) + ", " + fmt("%.2f", t) + " s"};
}

Outcome normalization_contracts() {
  const auto start = Clock::now();
  Rng rng(102);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    int m1, m2;
    do {
      m1 = uniform_int(rng, 1, 6);
      m2 = uniform_int(rng, 1, 6);
    } while (m1 * m2 < 2);
    const int m = m1 * m2;
    const CMat w = random_matrix(m, m, rng);
    const CMat v = random_hpd(m, rng);
    const int n = uniform_int(rng, 0, m - 1);
    const auto ip = ip_update(w, v, n, kDefaultLoading);
    worst = std::max(worst, std::abs(ip.filter.dot(v * ip.filter).real() - 1.0));
    const auto first = update_first_subfilter(w, v, random_vector(m2, rng), n, kDefaultLoading);
    worst = std::max(worst,
                     std::abs(first.filter.dot(first.lifted_cov * first.filter).real() - 1.0));
    const auto second = update_second_subfilter(w, v, first.filter, n, kDefaultLoading);
    worst = std::max(
        worst, std::abs(second.filter.dot(second.lifted_cov * second.filter).real() - 1.0));
    const CVec stacked = kron_oracle(first.filter, second.filter);
    worst = std::max(worst, std::abs(stacked.dot(v * stacked).real() - 1.0));
  }
  const double t = seconds_since(start);
  return {worst <= 1e-10 && t < 10.0,
          "max |w^H V w - 1| " + fmt("%.2e", worst) + ", " + fmt("%.2f", t) + " s"};
}

Outcome orthogonal_constraint() {
  const auto start = Clock::now();
  Rng rng(103);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int m = uniform_int(rng, 2, 36);
    const int n = uniform_int(rng, 1, std::min(m - 1, 4));
    const CMat c = random_hpd(m, rng);
    const CMat ws = random_matrix(n, m, rng);
    const CMat j = oc_update(c, ws, kDefaultLoading);
    CMat u(m - n, m);
    u << j, -CMat::Identity(m - n, m - n);
    worst = std::max(worst, (u * c * ws.adjoint()).norm() / (c.norm() * ws.norm()));
  }
  const double t = seconds_since(start);
  return {worst <= 1e-8 && t < 10.0,
          "max relative residual " + fmt("%.2e", worst) + ", " + fmt("%.2f", t) + " s"};
}

Outcome stationarity() {
  Rng rng(104);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    int m1, m2;
    do {
      m1 = uniform_int(rng, 1, 6);
      m2 = uniform_int(rng, 1, 6);
    } while (m1 * m2 < 2);
    const int m = m1 * m2;
    const CMat w = random_matrix(m, m, rng);
    const CMat v = random_hpd(m, rng);
    const int n = uniform_int(rng, 0, m - 1);
    const CVec target = w.fullPivLu().solve(CVec::Unit(m, n));

    const CVec w2 = random_vector(m2, rng);
    const auto first = update_first_subfilter(w, v, w2, n, 0.0);
    // Independent lifted quantities from the explicit lift matrices.
    const CMat d1 = lift_left(w2, m1);
    const CVec rhs1 = d1.adjoint() * target;
    const CMat v1 = d1.adjoint() * v * d1;
    worst = std::max(worst, (v1 * first.unnormalized - rhs1).norm() / rhs1.norm());
    const auto second = update_second_subfilter(w, v, first.filter, n, 0.0);
    const CMat d2 = lift_right(first.filter, m2);
    const CVec rhs2 = d2.adjoint() * target;
    const CMat v2 = d2.adjoint() * v * d2;
    worst = std::max(worst, (v2 * second.unnormalized - rhs2).norm() / rhs2.norm());
  }
  return {worst <= 1e-9, "max relative residual " + fmt("%.2e", worst)};
}


SeparatorConfig engine(Algorithm algorithm, int mics, int sources, int m1 = 0, int m2 = 0) {
  SeparatorConfig cfg;
  cfg.algorithm = algorithm;
  cfg.mics = mics;
  cfg.sources = sources;
  cfg.m1 = m1;
  cfg.m2 = m2;
  cfg.alpha = 0.98;
  return cfg;
}

Outcome degeneracy() {
  const auto start = Clock::now();
  Rng rng(105);
  const int m = 6, bins = 65;
  std::vector<CMat> mixing;
  for (int i = 0; i < bins; ++i) mixing.push_back(random_matrix(m, 2, rng));
  std::exponential_distribution<double> activity(1.0);
  auto over = init_state(engine(Algorithm::kOverIva, m, 2), bins);
  auto bi = init_state(engine(Algorithm::kBiIva, m, 2, m, 1), bins);
  double worst = 0.0;
  for (int j = 0; j < 100; ++j) {
    SpectralFrame f;
    f.index = j;
    f.bins.resize(m, bins);
    const double a0 = activity(rng), a1 = activity(rng);
    for (int i = 0; i < bins; ++i) {
      CVec s(2);
      s << a0 * testing::random_complex(rng), a1 * testing::random_complex(rng);
      f.bins.col(i) = mixing[i] * s + 1e-2 * random_vector(m, rng);
    }
    const Eigen::MatrixXd a = process_frame(over, f).spectra.cwiseAbs();
    const Eigen::MatrixXd b = process_frame(bi, f).spectra.cwiseAbs();
    for (int i = 0; i < bins; ++i) {
      const double scale = a.col(i).maxCoeff();
      if (scale > 0.0) worst = std::max(worst, (a.col(i) - b.col(i)).cwiseAbs().maxCoeff() / scale);
    }
  }
  const double t = seconds_since(start);
  return {worst <= 1e-8 && t < 30.0,
          "max per-bin relative difference " + fmt("%.2e", worst) + ", " + fmt("%.2f", t) + " s"};
}

// Objective written out from its definition, independent of the library.
double mm_objective(const std::vector<CMat>& w, const std::vector<std::vector<CMat>>& v) {
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    for (Index n = 0; n < w[i].rows(); ++n) {
      const CVec row = w[i].row(n).adjoint();
      total += row.dot(v[n][i] * row).real();
    }
    total -= 2.0 * std::log(std::abs(w[i].fullPivLu().determinant()));
  }
  return total;
}

Outcome mm_monotonicity() {
  Rng rng(106);
  double worst = -1.0;
  int violations = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int k = uniform_int(rng, 2, 5);
    const int bins = uniform_int(rng, 1, 8);
    std::vector<CMat> w(bins);
    std::vector<std::vector<CMat>> v(k, std::vector<CMat>(bins));
    for (int i = 0; i < bins; ++i) {
      w[i] = random_matrix(k, k, rng);
      for (int n = 0; n < k; ++n) v[n][i] = random_hpd(k, rng);
    }
    double prev = mm_objective(w, v);
    for (int sweep = 0; sweep < 20; ++sweep) {
      ip_sweep(w, v, 0.0);
      const double cur = mm_objective(w, v);
      const double rise = (cur - prev) / std::abs(prev);
      worst = std::max(worst, rise);
      if (rise > 1e-9) ++violations;
      prev = cur;
    }
  }
  return {violations == 0, "largest relative step " + fmt("%.2e", worst) + ", " +
                               std::to_string(violations) + " increases"};
}

Outcome stft_round_trip() {
  Rng rng(107);
  const std::size_t n = 3 * 16000;
  const StftConfig cfg;
  MultiSignal x{testing::gaussian_signal(n, rng), testing::gaussian_signal(n, rng)};
  const auto y = synthesize(analyze(x, cfg), cfg, n);
  double worst = 0.0;
  for (std::size_t c = 0; c < x.size(); ++c) {
    double err = 0.0, ref = 0.0;
    for (std::size_t t = cfg.fft_size; t + cfg.fft_size < n; ++t) {
      err += (y[c][t] - x[c][t]) * (y[c][t] - x[c][t]);
      ref += x[c][t] * x[c][t];
    }
    worst = std::max(worst, std::sqrt(err / ref));
  }
  return {worst <= 1e-10, "interior relative error " + fmt("%.2e", worst)};
}

double sum_sq(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

// Schroeder backward integration with a least-squares line over -5..-35 dB.
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
  return -60.0 / ((n * sxy - sx * sy) / (n * sxx - sx * sx));
}

Outcome simulator_calibration() {
  Scenario sc = parse_scenario(R"({"duration_s": 5, "room": {"t60": 0.2}})");
  double isir_err = 0.0, isnr_err = 0.0;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto b = simulate(sc, seed);
    const double e0 = sum_sq(b.images[0][0]), e1 = sum_sq(b.images[1][0]);
    std::vector<double> clean(b.observations[0].size());
    for (std::size_t t = 0; t < clean.size(); ++t) clean[t] = b.images[0][0][t] + b.images[1][0][t];
    isir_err = std::max(isir_err, std::abs(10.0 * std::log10(e0 / e1) - sc.isir_db));
    isnr_err = std::max(isnr_err,
                        std::abs(10.0 * std::log10(sum_sq(clean) / sum_sq(b.noise[0])) - sc.isnr_db));
  }
  double t60_min = 1e9, t60_max = 0.0;
  for (const auto& src : sc.sources) {
    for (std::size_t m : {std::size_t{0}, sc.array.positions.size() - 1}) {
      const double t60 = schroeder_t60(image_source_rir(sc.room, src, sc.array.positions[m]),
                                       sc.room.sample_rate);
      t60_min = std::min(t60_min, t60);
      t60_max = std::max(t60_max, t60);
    }
  }
  const bool pass = isir_err <= 0.01 && isnr_err <= 0.01 && t60_min >= 0.16 && t60_max <= 0.24;
  return {pass, "iSIR error " + fmt("%.4f", isir_err) + " dB, iSNR error " +
                    fmt("%.4f", isnr_err) + " dB, T60 " + fmt("%.3f", t60_min) + ".." +
                    fmt("%.3f", t60_max) + " s"};
}

Outcome desk_benchmark(const std::filesystem::path& out_dir) {
  const auto start = Clock::now();
  RunManifest manifest = default_manifest();
  manifest.output_dir = out_dir;
  manifest.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const auto result = run_benchmark(manifest);
  const double t = seconds_since(start);
  const auto* aux = result.find(Algorithm::kAuxIva);
  const auto* over = result.find(Algorithm::kOverIva);
  const auto* bi = result.find(Algorithm::kBiIva);
  if (!result.all_ok() || aux == nullptr || over == nullptr || bi == nullptr) {
    return {false, "benchmark runs failed"};
  }
  const double a = aux->converged_sir_improvement;
  const double o = over->converged_sir_improvement;
  const double b = bi->converged_sir_improvement;
  const bool pass = o >= 8.0 && b >= 8.0 && a >= 5.0 && b >= o - 1.0 && t <= 900.0;
  return {pass, "converged SIRi auxiva " + fmt("%.2f", a) + " (>= 5), overiva " +
                    fmt("%.2f", o) + " (>= 8), biiva " + fmt("%.2f", b) + " (>= 8, >= overiva - 1), " +
                    fmt("%.0f", t) + " s"};
}

Outcome online_causality() {
  Scenario sc = parse_scenario(R"({"duration_s": 4, "room": {"t60": 0.15}})");
  const auto bundle = simulate(sc, 7);
  const MultiSignal& x = bundle.observations;
  const std::size_t cut = 40000;
  MultiSignal prefix, altered = x;
  Rng rng(108);
  for (auto& ch : altered) {
    prefix.emplace_back(ch.begin(), ch.begin() + cut);
    for (std::size_t t = cut; t < ch.size(); ++t) ch[t] = testing::uniform(rng, -0.1, 0.1);
  }
  int identical = 0, total = 0;
  std::size_t shortest = cut;
  for (const char* name : {"auxiva", "overiva", "biiva"}) {
    const auto cfg = parse_separator_config(std::string("{\"algorithm\": \"") + name + "\"}");
    StreamSeparator stream(cfg, {});
    const MultiSignal early = stream.push(prefix);
    const auto full = separate(x, cfg).outputs;
    const auto other = separate(altered, cfg).outputs;
    for (std::size_t n = 0; n < early.size(); ++n) {
      const std::size_t len = early[n].size();
      shortest = std::min(shortest, len);
      total += 2;
      identical += std::memcmp(early[n].data(), full[n].data(), len * sizeof(double)) == 0;
      identical += std::memcmp(early[n].data(), other[n].data(), len * sizeof(double)) == 0;
    }
  }
  return {identical == total && shortest > 0,
          std::to_string(identical) + "/" + std::to_string(total) +
              " prefixes byte-identical, " + std::to_string(shortest) + " samples each"};
}

// Dense least-squares decomposition with explicit shifted-reference columns.
SirSdr dense_bss_eval(const std::vector<double>& e, const std::vector<std::vector<double>>& refs,
                      int target, int filter_length) {
  const auto len = static_cast<Index>(e.size());
  const Index rows = len + filter_length - 1;
  auto shifted = [&](const std::vector<double>& r) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, filter_length);
    for (int s = 0; s < filter_length; ++s) {
      for (Index t = 0; t < len; ++t) a(t + s, s) = r[t];
    }
    return a;
  };
  Eigen::MatrixXd all(rows, static_cast<Index>(refs.size()) * filter_length);
  for (std::size_t k = 0; k < refs.size(); ++k) {
    all.middleCols(static_cast<Index>(k) * filter_length, filter_length) = shifted(refs[k]);
  }
  const Eigen::MatrixXd tgt = shifted(refs[target]);
  Eigen::VectorXd ev = Eigen::VectorXd::Zero(rows);
  for (Index t = 0; t < len; ++t) ev(t) = e[t];
  const Eigen::VectorXd p_all = all * all.householderQr().solve(ev);
  const Eigen::VectorXd p_t = tgt * tgt.householderQr().solve(ev);
  return {10.0 * std::log10(p_t.squaredNorm() / (p_all - p_t).squaredNorm()),
          10.0 * std::log10(p_t.squaredNorm() / (ev - p_t).squaredNorm())};
}

Outcome metrics_consistency() {
  Rng rng(109);
  const int filter_length = 32;
  double energy_err = 0.0, db_err = 0.0;
  for (int clip = 0; clip < 4; ++clip) {
    const std::size_t len = 16000;
    std::vector<std::vector<double>> refs;
    for (int n = 0; n < 2; ++n) {
      auto s = speech_like(1.0, 16000, 500 + 2 * clip + n);
      s.resize(len, 0.0);
      refs.push_back(s);
    }
    const auto c0 = convolve(refs[0], testing::gaussian_signal(64, rng), len);
    const auto c1 = convolve(refs[1], testing::gaussian_signal(64, rng), len);
    const auto noise = testing::gaussian_signal(len, rng);
    std::vector<double> e(len);
    for (std::size_t t = 0; t < len; ++t) e[t] = c0[t] + 0.4 * c1[t] + 0.02 * noise[t];
    std::vector<std::span<const double>> spans{refs[0], refs[1]};
    for (int target = 0; target < 2; ++target) {
      const auto d = decompose(e, spans, target, filter_length);
      const double parts = sum_sq(d.target) + sum_sq(d.interference) + sum_sq(d.artifact);
      energy_err = std::max(energy_err, std::abs(parts - sum_sq(e)) / sum_sq(e));
      const auto got = sir_sdr(d);
      const auto want = dense_bss_eval(e, refs, target, filter_length);
      db_err = std::max({db_err, std::abs(got.sir_db - want.sir_db),
                         std::abs(got.sdr_db - want.sdr_db)});
    }
  }
  return {energy_err <= 1e-8 && db_err <= 0.01,
          "energy error " + fmt("%.2e", energy_err) + ", max deviation from dense oracle " +
              fmt("%.2e", db_err) + " dB"};
}

}  // namespace
}  // namespace bss

int main(int argc, char** argv) {
  using namespace bss;
  std::set<int> expected_fail, only;
  std::filesystem::path out_dir = std::filesystem::temp_directory_path() / "bss_acceptance";
  for (int a = 1; a < argc; ++a) {
    const std::string arg = argv[a];
    if (arg == "--expect-fail" && a + 1 < argc) {
      expected_fail.insert(std::stoi(argv[++a]));
    } else if (arg == "--only" && a + 1 < argc) {
      only.insert(std::stoi(argv[++a]));
    } else if (arg == "--out" && a + 1 < argc) {
      out_dir = argv[++a];
    } else {
      std::cerr << "usage: acceptance [--only N]... [--expect-fail N]... [--out DIR]\n";
      return 2;
    }
  }

  const std::vector<Criterion> criteria{
      {1, "kronecker and lifting identities", kronecker_identities},
      {2, "normalization after IP and bilinear updates", normalization_contracts},
      {3, "orthogonal-constraint residual", orthogonal_constraint},
      {4, "bilinear stationarity residual", stationarity},
      {5, "BiIVA (M,1) equals OverIVA", degeneracy},
      {6, "batch MM objective monotone", mm_monotonicity},
      {7, "STFT perfect reconstruction", stft_round_trip},
      {8, "simulator iSIR/iSNR/T60 calibration", simulator_calibration},
      {9, "desk-scale separation benchmark", [&] { return desk_benchmark(out_dir); }},
      {10, "online causality", online_causality},
      {11, "metrics self-consistency", metrics_consistency},
  };

  int unexpected = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const bool known = expected_fail.count(c.id) > 0;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " ["
              << o.detail << "]";
    if (!o.pass && known) std::cout << " (known failure)";
    if (o.pass && known) std::cout << " (listed as known failure but passed)";
    std::cout << std::endl;
    if (!o.pass && !known) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
