#include "bss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bss/error.hpp"
#include "bss/signals.hpp"

namespace bss {
namespace {

double ratio_db(double num, double den, double scale) {
  const double floor = kZeroEnergyFraction * scale;
  const bool num_zero = num <= floor;
  const bool den_zero = den <= floor;
  if (num_zero) return -kPlusInfinityDb;
  if (den_zero) return kPlusInfinityDb;
  return db10(num / den);
}

// Converts an LDLT factorization failure or a non-positive pivot into the
// rank-deficiency error callers expect.
void check_factor(const Eigen::LDLT<Eigen::MatrixXd>& ldlt, const char* what) {
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw ContractViolation(std::string(what) + ": references are rank deficient");
  }
  const auto d = ldlt.vectorD();
  if (d.minCoeff() <= 1e-13 * d.maxCoeff()) {
    throw ContractViolation(std::string(what) + ": references are rank deficient");
  }
}

std::span<const double> segment_of(const std::vector<double>& x, std::size_t start,
                                   std::size_t length) {
  return std::span<const double>(x).subspan(start, length);
}

int converged_tail(int segments) {
  return std::max(1, static_cast<int>(std::ceil(0.25 * segments)));
}

}  // namespace

void EvalConfig::validate() const {
  if (!(segment_length > 0.0)) throw ConfigError("eval.segment_length must be > 0");
  if (filter_length < 1) throw ConfigError("eval.filter_length must be >= 1");
  if (reference_channel < 1) throw ConfigError("eval.reference_channel must be >= 1");
}

ReferenceProjector::ReferenceProjector(
    const std::vector<std::span<const double>>& references, int filter_length)
    : filter_length_(filter_length) {
  if (references.empty() || filter_length < 1) {
    throw ContractViolation("decompose: need references and filter_length >= 1");
  }
  length_ = references.front().size();
  for (const auto& r : references) {
    if (r.size() != length_ || length_ == 0) {
      throw ContractViolation("decompose: reference lengths differ");
    }
    if (energy(r) == 0.0) {
      throw ContractViolation("decompose: silent reference, projection is rank deficient");
    }
    references_.emplace_back(r.begin(), r.end());
  }
  const int L = filter_length;
  const auto n = static_cast<int>(references_.size());
  Eigen::MatrixXd gram(n * L, n * L);
  for (int k = 0; k < n; ++k) {
    for (int l = k; l < n; ++l) {
      // xc[lag + L - 1] = sum_s r_k(s) r_l(s + lag)
      const auto xc = cross_correlation(references_[k], references_[l], L - 1);
      for (int a = 0; a < L; ++a) {
        for (int b = 0; b < L; ++b) {
          // <r_k(. - a), r_l(. - b)> = xc_kl(a - b)
          const double v = xc[a - b + L - 1];
          gram(k * L + a, l * L + b) = v;
          gram(l * L + b, k * L + a) = v;
        }
      }
    }
  }
  all_.compute(gram);
  check_factor(all_, "decompose");
  single_.resize(n);
  for (int k = 0; k < n; ++k) {
    single_[k].compute(gram.block(k * L, k * L, L, L));
    check_factor(single_[k], "decompose");
  }
}

std::vector<double> ReferenceProjector::synthesize(const Eigen::VectorXd& coeffs,
                                                   std::size_t first_ref,
                                                   std::size_t count) const {
  const int L = filter_length_;
  std::vector<double> out(length_ + L - 1, 0.0);
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<double> taps(coeffs.data() + k * L, coeffs.data() + (k + 1) * L);
    const auto part = convolve(references_[first_ref + k], taps);
    for (std::size_t t = 0; t < out.size(); ++t) out[t] += part[t];
  }
  return out;
}

Decomposition ReferenceProjector::decompose(std::span<const double> estimate,
                                            int target) const {
  if (estimate.size() != length_) {
    throw ContractViolation("decompose: estimate length differs from references");
  }
  if (target < 0 || target >= static_cast<int>(references_.size())) {
    throw ContractViolation("decompose: target index out of range");
  }
  const int L = filter_length_;
  const auto n = static_cast<int>(references_.size());
  // <e, r_k(. - a)> = sum_s r_k(s) e(s + a)
  Eigen::VectorXd proj(n * L);
  for (int k = 0; k < n; ++k) {
    const auto xc = cross_correlation(references_[k], estimate, L - 1);
    for (int a = 0; a < L; ++a) proj(k * L + a) = xc[a + L - 1];
  }
  const Eigen::VectorXd c_all = all_.solve(proj);
  const Eigen::VectorXd c_target = single_[target].solve(proj.segment(target * L, L));

  Decomposition d;
  d.target = synthesize(c_target, target, 1);
  // Single-reference synthesis for the target keeps its coefficients in the
  // target slot only.
  const auto explained = synthesize(c_all, 0, references_.size());
  const std::size_t total = length_ + L - 1;
  d.interference.resize(total);
  d.artifact.resize(total);
  for (std::size_t t = 0; t < total; ++t) {
    const double e = t < length_ ? estimate[t] : 0.0;
    d.interference[t] = explained[t] - d.target[t];
    d.artifact[t] = e - explained[t];
  }
  return d;
}

Decomposition decompose(std::span<const double> estimate,
                        const std::vector<std::span<const double>>& references,
                        int target, int filter_length) {
  return ReferenceProjector(references, filter_length).decompose(estimate, target);
}

SirSdr sir_sdr(const Decomposition& d) {
  const double et = energy(d.target);
  const double ei = energy(d.interference);
  double ed = 0.0;
  for (std::size_t t = 0; t < d.interference.size(); ++t) {
    const double v = d.interference[t] + d.artifact[t];
    ed += v * v;
  }
  const double scale = et + ei + energy(d.artifact);
  return {ratio_db(et, ei, scale), ratio_db(et, ed, scale)};
}

std::vector<int> pair_sources(const std::vector<std::vector<double>>& estimates,
                              const std::vector<std::vector<double>>& references,
                              int sample_rate, const EvalConfig& cfg) {
  const std::size_t n = references.size();
  if (estimates.size() != n) {
    throw ContractViolation("pair_sources: estimate and reference counts differ");
  }
  const auto seg = static_cast<std::size_t>(std::llround(cfg.segment_length * sample_rate));
  const std::size_t length = references.front().size();
  std::vector<std::size_t> starts{0};
  const std::size_t len = std::min(seg, length);
  if (cfg.pairing == PairingWindow::kConverged && length >= seg) {
    const int segments = static_cast<int>(length / seg);
    const int tail = converged_tail(segments);
    starts.clear();
    for (int s = segments - tail; s < segments; ++s) starts.push_back(s * seg);
  }

  // score(e, r): SIR of estimate e against reference r, clamped so infinities
  // do not dominate the sum.
  std::vector<std::vector<double>> score(n, std::vector<double>(n, 0.0));
  for (const std::size_t start : starts) {
    std::vector<std::span<const double>> refs;
    for (const auto& r : references) refs.push_back(segment_of(r, start, len));
    const ReferenceProjector projector(refs, cfg.filter_length);
    for (std::size_t e = 0; e < n; ++e) {
      for (std::size_t r = 0; r < n; ++r) {
        const auto d = projector.decompose(segment_of(estimates[e], start, len),
                                           static_cast<int>(r));
        score[e][r] += std::clamp(sir_sdr(d).sir_db, -1e9, 1e9);
      }
    }
  }
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_total = -std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) total += score[perm[r]][r];
    if (total > best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

EvalReport convergence_curve(const std::vector<std::vector<double>>& estimates,
                             const std::vector<std::vector<double>>& references,
                             const std::vector<double>& mixture, int sample_rate,
                             const EvalConfig& cfg, std::vector<int> assignment) {
  cfg.validate();
  if (references.empty() || estimates.size() != references.size()) {
    throw ContractViolation("convergence_curve: need one estimate per reference");
  }
  const std::size_t length = references.front().size();
  for (const auto& s : estimates) {
    if (s.size() != length) throw ContractViolation("convergence_curve: estimate length mismatch");
  }
  if (mixture.size() != length) {
    throw ContractViolation("convergence_curve: mixture length mismatch");
  }
  const auto seg = static_cast<std::size_t>(std::llround(cfg.segment_length * sample_rate));
  const auto n = references.size();

  EvalReport report;
  report.segments = static_cast<int>(length / seg);
  if (report.segments == 0) {
    throw ContractViolation("convergence_curve: signal shorter than one segment");
  }
  report.assignment =
      assignment.empty() ? pair_sources(estimates, references, sample_rate, cfg)
                         : std::move(assignment);

  for (int s = 0; s < report.segments; ++s) {
    const std::size_t start = static_cast<std::size_t>(s) * seg;
    std::vector<std::span<const double>> refs;
    for (const auto& r : references) refs.push_back(segment_of(r, start, seg));
    const ReferenceProjector projector(refs, cfg.filter_length);
    for (std::size_t r = 0; r < n; ++r) {
      const auto out = sir_sdr(projector.decompose(
          segment_of(estimates[report.assignment[r]], start, seg), static_cast<int>(r)));
      const auto in = sir_sdr(
          projector.decompose(segment_of(mixture, start, seg), static_cast<int>(r)));
      SegmentScore sc;
      sc.segment = s;
      sc.t_start_s = static_cast<double>(start) / sample_rate;
      sc.source = static_cast<int>(r);
      sc.sir_db = out.sir_db;
      sc.sdr_db = out.sdr_db;
      sc.sir_improvement_db = out.sir_db - in.sir_db;
      sc.sdr_improvement_db = out.sdr_db - in.sdr_db;
      report.scores.push_back(sc);
      if (report.input_sir_db.size() < n) report.input_sir_db.resize(n, 0.0);
      report.input_sir_db[r] += in.sir_db / report.segments;
    }
  }

  const int tail = converged_tail(report.segments);
  auto clamp = [](double v) { return std::clamp(v, -1e9, 1e9); };
  report.converged_sir_db.assign(n, 0.0);
  report.converged_sdr_db.assign(n, 0.0);
  report.converged_sir_improvement_db.assign(n, 0.0);
  report.converged_sdr_improvement_db.assign(n, 0.0);
  for (const auto& sc : report.scores) {
    if (sc.segment < report.segments - tail) continue;
    report.converged_sir_db[sc.source] += clamp(sc.sir_db) / tail;
    report.converged_sdr_db[sc.source] += clamp(sc.sdr_db) / tail;
    report.converged_sir_improvement_db[sc.source] += clamp(sc.sir_improvement_db) / tail;
    report.converged_sdr_improvement_db[sc.source] += clamp(sc.sdr_improvement_db) / tail;
  }
  return report;
}

}  // namespace bss
