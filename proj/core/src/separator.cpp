#include "bss/separator.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <string>
#include <utility>

#include "bss/error.hpp"

namespace bss {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Scales w so that w^H V w = 1.
// w / sqrt(w^H V w). When rounding has left V indefinite along w, the
// diagonal shift used by the solve stands in for the lost definiteness.
CVec normalize_against(const CVec& w, const CMat& cov, double shift, const char* what) {
  double q = w.dot(cov * w).real();
  if (!(q > 0.0)) q += shift * w.squaredNorm();
  if (!(q > 0.0) || !std::isfinite(q)) {
    throw SingularMatrix(std::string(what) + ": quadratic form is not positive");
  }
  return w / std::sqrt(q);
}

// True once the OC step has left W in the [A; J -I] shape.
bool has_block_form(const CMat& w, int n_src) {
  const Index k = w.rows();
  return n_src < k && w.bottomRightCorner(k - n_src, k - n_src) ==
                          -CMat::Identity(k - n_src, k - n_src);
}

CVec demix_column(const CMat& w, int source, int n_src) {
  if (has_block_form(w, n_src)) return leading_inverse_columns(w, n_src).col(source);
  return solve_column(w, source);
}

FilterUpdate ip_from_column(const CMat& cov, const CVec& column, double loading) {
  FilterUpdate out;
  double shift = 0.0;
  out.unnormalized = hermitian_solve(cov, column, loading, &shift);
  out.filter = normalize_against(out.unnormalized, cov, shift, "ip_update");
  return out;
}

// The lifted covariance can lose all definiteness to cancellation when V
// spans many decades. The fallback loads V itself before the congruence,
// i.e. adds kMaxLoading * tr(V) / K * ||other||^2 to the lifted diagonal.
SubfilterUpdate subfilter_from(CMat lifted_cov, CVec rhs, const CMat& cov,
                               const CVec& other, double loading, const char* what) {
  SubfilterUpdate out;
  out.lifted_cov = std::move(lifted_cov);
  out.rhs = std::move(rhs);
  double shift = 0.0;
  try {
    out.unnormalized = hermitian_solve(out.lifted_cov, out.rhs, loading, &shift);
  } catch (const SingularMatrix&) {
    if (!(loading > 0.0)) throw;
    const double floor = kMaxLoading * cov.trace().real() /
                         static_cast<double>(cov.rows()) * other.squaredNorm();
    if (!(floor > 0.0)) throw;
    CMat loaded = out.lifted_cov;
    loaded.diagonal().array() += floor;
    out.unnormalized = hermitian_solve(loaded, out.rhs, 0.0);
    shift = floor;
  }
  out.filter = normalize_against(out.unnormalized, out.lifted_cov, shift, what);
  return out;
}

// lift_left(second)^H * column, without the lift.
CVec first_rhs(const CVec& second, const CVec& column) {
  const Index m2 = second.size();
  const Index m1 = column.size() / m2;
  CVec out(m1);
  for (Index p = 0; p < m1; ++p) out(p) = second.dot(column.segment(p * m2, m2));
  return out;
}

// lift_right(first)^H * column.
CVec second_rhs(const CVec& first, const CVec& column) {
  const Index m1 = first.size();
  const Index m2 = column.size() / m1;
  CVec out = CVec::Zero(m2);
  for (Index p = 0; p < m1; ++p) out += std::conj(first(p)) * column.segment(p * m2, m2);
  return out;
}

std::string context(const SingularMatrix& e, int bin, int source) {
  return std::string(e.what()) + " (bin " + std::to_string(bin) + ", source " +
         std::to_string(source) + ")";
}

}  // namespace

std::string to_string(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kAuxIva:
      return "auxiva";
    case Algorithm::kOverIva:
      return "overiva";
    case Algorithm::kBiIva:
      return "biiva";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  if (lower == "auxiva") return Algorithm::kAuxIva;
  if (lower == "overiva") return Algorithm::kOverIva;
  if (lower == "biiva") return Algorithm::kBiIva;
  throw ConfigError("unknown algorithm '" + name +
                    "' (expected auxiva, overiva or biiva)");
}

double default_forgetting_factor(Algorithm algorithm) {
  switch (algorithm) {
    case Algorithm::kAuxIva:
      return 0.96;
    case Algorithm::kOverIva:
      return 0.99;
    case Algorithm::kBiIva:
      return 0.98;
  }
  return 0.98;
}

void SeparatorConfig::validate() const {
  if (mics < 1) throw ConfigError("mics must be >= 1");
  if (sources < 1) throw ConfigError("sources must be >= 1");
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ConfigError("alpha must lie in (0, 1]");
  }
  if (inner_iters < 0) throw ConfigError("inner_iters must be >= 0");
  if (!(loading >= 0.0)) throw ConfigError("loading must be >= 0");
  if (!(weight_floor > 0.0)) throw ConfigError("weight_floor must be > 0");
  switch (algorithm) {
    case Algorithm::kAuxIva:
      if (sources > mics) {
        throw ConfigError("auxiva needs sources <= mics");
      }
      break;
    case Algorithm::kOverIva:
      if (sources >= mics) {
        throw ConfigError("overiva needs sources < mics");
      }
      break;
    case Algorithm::kBiIva:
      if (sources >= mics) {
        throw ConfigError("biiva needs sources < mics");
      }
      if (m1 < 1 || m2 < 1 || m1 * m2 != mics) {
        throw ConfigError("biiva needs m1 * m2 == mics (got m1=" +
                          std::to_string(m1) + ", m2=" + std::to_string(m2) +
                          ", mics=" + std::to_string(mics) + ")");
      }
      if (m1 < m2) {
        throw ConfigError("biiva needs m1 >= m2 (got m1=" + std::to_string(m1) +
                          ", m2=" + std::to_string(m2) + ")");
      }
      if (sources > m1) {
        throw ConfigError("biiva needs sources <= m1 so that w1 = e_n exists");
      }
      break;
  }
}

int SeparatorConfig::active_channels() const {
  return algorithm == Algorithm::kAuxIva ? sources : mics;
}

SeparatorState init_state(const SeparatorConfig& cfg, int bins) {
  cfg.validate();
  if (bins < 1) throw ContractViolation("init_state: bins must be >= 1");

  SeparatorState s;
  s.config = cfg;
  s.bins = bins;
  const int k = cfg.active_channels();
  const int n_src = cfg.sources;

  CMat w0 = CMat::Identity(k, k);
  if (cfg.algorithm == Algorithm::kOverIva) {
    w0.bottomRightCorner(k - n_src, k - n_src) *= -1.0;
  } else if (cfg.algorithm == Algorithm::kBiIva) {
    w0.setZero();
    std::vector<bool> used(k, false);
    for (int n = 0; n < n_src; ++n) {
      const int col = n * cfg.m2;  // kron(e_n, e_1)
      w0(n, col) = 1.0;
      used[col] = true;
    }
    int row = n_src;
    for (int col = 0; col < k; ++col) {
      if (!used[col]) w0(row++, col) = -1.0;
    }
  }
  s.demix.assign(bins, w0);

  s.weighted_cov.assign(n_src, std::vector<CMat>(bins, CMat::Identity(k, k)));
  if (cfg.algorithm != Algorithm::kAuxIva) {
    s.spatial_cov.assign(bins, CMat::Identity(k, k));
    s.noise_coupling.assign(bins, CMat::Zero(k - n_src, n_src));
  }
  if (cfg.algorithm == Algorithm::kBiIva) {
    s.subfilter_first.resize(n_src);
    s.subfilter_second.resize(n_src);
    for (int n = 0; n < n_src; ++n) {
      s.subfilter_first[n].assign(bins, CVec::Unit(cfg.m1, n));
      s.subfilter_second[n].assign(bins, CVec::Unit(cfg.m2, 0));
    }
  }
  return s;
}

double contrast_weight(const SeparatorState& state, const SpectralFrame& frame,
                       int source) {
  const int k = state.config.active_channels();
  double energy = 0.0;
  for (int i = 0; i < state.bins; ++i) {
    const Complex y = (state.demix[i].row(source) * frame.bins.col(i).head(k))(0);
    energy += std::norm(y);
  }
  // Variance estimate (1/I) sum_i |y_i|^2, so phi * sum_i |y_i|^2 = I.
  return state.bins / std::max(energy, state.config.weight_floor);
}

void accumulate_weighted_cov(CMat& cov, const CVec& x, double phi,
                             double alpha) {
  cov *= alpha;
  cov.noalias() += ((1.0 - alpha) * phi) * (x * x.adjoint());
}

CMat update_weighted_cov(const CMat& prev, const CVec& x, double phi,
                         double alpha) {
  if (prev.rows() != x.size() || prev.cols() != x.size()) {
    throw ContractViolation("update_weighted_cov: dimension mismatch");
  }
  CMat cov = prev;
  accumulate_weighted_cov(cov, x, phi, alpha);
  return cov;
}

CMat update_spatial_cov(const CMat& prev, const CVec& x, double alpha) {
  return update_weighted_cov(prev, x, 1.0, alpha);
}

FilterUpdate ip_update(const CMat& demix, const CMat& cov, int source,
                       double loading) {
  if (demix.rows() != cov.rows()) {
    throw ContractViolation("ip_update: demixing/covariance size mismatch");
  }
  return ip_from_column(cov, solve_column(demix, source), loading);
}

CMat oc_update(const CMat& spatial_cov, const CMat& extraction,
               double loading) {
  const Index k = spatial_cov.rows();
  const Index n = extraction.rows();
  if (extraction.cols() != k || n >= k) {
    throw ContractViolation("oc_update: extraction must be N x M with N < M");
  }
  const CMat cross = spatial_cov * extraction.adjoint();  // M x N
  const CMat top = cross.topRows(n);
  const CMat bottom = cross.bottomRows(k - n);
  // J * top = bottom  <=>  top^T J^T = bottom^T
  try {
    return general_solve(top.transpose(), bottom.transpose()).transpose();
  } catch (const SingularMatrix&) {
    if (!(loading > 0.0)) throw;
  }
  CMat loaded = top;
  loaded.diagonal().array() +=
      loading * top.norm() / std::sqrt(static_cast<double>(n));
  return general_solve(loaded.transpose(), bottom.transpose()).transpose();
}

SubfilterUpdate update_first_subfilter(const CMat& demix, const CMat& cov,
                                       const CVec& second, int source,
                                       double loading) {
  const Index m2 = second.size();
  if (m2 == 0 || cov.rows() % m2 != 0 || demix.rows() != cov.rows()) {
    throw ContractViolation("update_first_subfilter: dimension mismatch");
  }
  return subfilter_from(congruence_left(second, cov),
                        first_rhs(second, solve_column(demix, source)), cov, second,
                        loading, "first sub-filter");
}

SubfilterUpdate update_second_subfilter(const CMat& demix, const CMat& cov,
                                        const CVec& first, int source,
                                        double loading) {
  const Index m1 = first.size();
  if (m1 == 0 || cov.rows() % m1 != 0 || demix.rows() != cov.rows()) {
    throw ContractViolation("update_second_subfilter: dimension mismatch");
  }
  return subfilter_from(congruence_right(first, cov),
                        second_rhs(first, solve_column(demix, source)), cov, first,
                        loading, "second sub-filter");
}

SourceEstimate process_frame(SeparatorState& state, const SpectralFrame& frame,
                             FrameTiming* timing) {
  const SeparatorConfig& cfg = state.config;
  if (frame.channels() != cfg.mics || frame.num_bins() != state.bins) {
    throw ContractViolation(
        "process_frame: frame is " + std::to_string(frame.channels()) + "x" +
        std::to_string(frame.num_bins()) + ", separator expects " +
        std::to_string(cfg.mics) + "x" + std::to_string(state.bins));
  }
  const int k = cfg.active_channels();
  const int n_src = cfg.sources;
  const bool constrained = cfg.algorithm != Algorithm::kAuxIva;
  FrameTiming local;
  auto tick = Clock::now();

  std::vector<CVec> x(state.bins);
  for (int i = 0; i < state.bins; ++i) x[i] = frame.bins.col(i).head(k);

  // C is source independent, so it is refreshed once per frame.
  if (constrained) {
    for (int i = 0; i < state.bins; ++i) {
      accumulate_weighted_cov(state.spatial_cov[i], x[i], 1.0, cfg.alpha);
    }
  }

  for (int n = 0; n < n_src; ++n) {
    const double phi = contrast_weight(state, frame, n);
    for (int i = 0; i < state.bins; ++i) {
      accumulate_weighted_cov(state.weighted_cov[n][i], x[i], phi, cfg.alpha);
    }
    local.statistics += seconds_since(tick);
    tick = Clock::now();

    for (int iter = 0; iter < cfg.inner_iters; ++iter) {
      for (int i = 0; i < state.bins; ++i) {
        CMat& w = state.demix[i];
        const CMat& v = state.weighted_cov[n][i];
        try {
          // Row n of W is rewritten only after both sub-filters, so one
          // column of W^{-1} serves the whole update.
          const CVec column = demix_column(w, n, constrained ? n_src : k);
          if (cfg.algorithm == Algorithm::kBiIva) {
            CVec& w1 = state.subfilter_first[n][i];
            CVec& w2 = state.subfilter_second[n][i];
            w1 = subfilter_from(congruence_left(w2, v), first_rhs(w2, column), v, w2,
                                cfg.loading, "first sub-filter")
                     .filter;
            w2 = subfilter_from(congruence_right(w1, v), second_rhs(w1, column), v, w1,
                                cfg.loading, "second sub-filter")
                     .filter;
            // Keep ||w1|| = 1; the Kronecker product is unchanged.
            const double scale = w1.norm();
            w1 /= scale;
            w2 *= scale;
            w.row(n) = kron(w1, w2).adjoint();
          } else {
            w.row(n) = ip_from_column(v, column, cfg.loading).filter.adjoint();
          }
        } catch (const SingularMatrix& e) {
          throw SingularMatrix(context(e, i, n), i, n);
        }
      }
    }
    local.filters += seconds_since(tick);
    tick = Clock::now();
  }

  if (constrained) {
    for (int i = 0; i < state.bins; ++i) {
      CMat& w = state.demix[i];
      try {
        state.noise_coupling[i] =
            oc_update(state.spatial_cov[i], w.topRows(n_src), cfg.loading);
      } catch (const SingularMatrix& e) {
        throw SingularMatrix(context(e, i, -1), i, -1);
      }
      w.bottomLeftCorner(k - n_src, n_src) = state.noise_coupling[i];
      w.bottomRightCorner(k - n_src, k - n_src) =
          -CMat::Identity(k - n_src, k - n_src);
    }
  }
  local.constraint += seconds_since(tick);
  tick = Clock::now();

  SourceEstimate out;
  out.frame_index = frame.index;
  out.spectra.resize(n_src, state.bins);
  for (int i = 0; i < state.bins; ++i) {
    out.spectra.col(i).noalias() = state.demix[i].topRows(n_src) * x[i];
  }
  ++state.frame_index;
  local.output += seconds_since(tick);
  if (timing) *timing = local;
  return out;
}

CMat projection_back(const SeparatorState& state, const CMat& spectra,
                     int reference_channel) {
  const int k = state.config.active_channels();
  if (reference_channel < 0 || reference_channel >= k) {
    throw ContractViolation("projection_back: reference channel out of range");
  }
  if (spectra.rows() != state.config.sources || spectra.cols() != state.bins) {
    throw ContractViolation("projection_back: spectra shape mismatch");
  }
  CMat out(spectra.rows(), spectra.cols());
  const CMat unit = CVec::Unit(k, reference_channel);
  for (int i = 0; i < state.bins; ++i) {
    CVec gains;
    try {
      const CMat& w = state.demix[i];
      if (has_block_form(w, state.config.sources)) {
        gains = leading_inverse_columns(w, state.config.sources)
                    .row(reference_channel)
                    .transpose();
      } else {
        // Row `ref` of W^{-1}, via W^T r = e_ref.
        gains = general_solve(w.transpose(), unit);
      }
    } catch (const SingularMatrix& e) {
      throw SingularMatrix(context(e, i, -1), i, -1);
    }
    out.col(i) = spectra.col(i).cwiseProduct(gains.head(spectra.rows()));
  }
  return out;
}

double auxiliary_objective(const std::vector<CMat>& demix,
                           const std::vector<std::vector<CMat>>& cov) {
  double value = 0.0;
  for (std::size_t i = 0; i < demix.size(); ++i) {
    const CMat& w = demix[i];
    for (std::size_t n = 0; n < cov.size(); ++n) {
      const CVec filter = w.row(static_cast<Index>(n)).adjoint();
      value += filter.dot(cov[n][i] * filter).real();
    }
    Eigen::PartialPivLU<CMat> lu(w);
    const auto diag = lu.matrixLU().diagonal();
    for (Index d = 0; d < diag.size(); ++d) {
      value -= 2.0 * std::log(std::abs(diag[d]));
    }
  }
  return value;
}

void ip_sweep(std::vector<CMat>& demix,
              const std::vector<std::vector<CMat>>& cov, double loading) {
  for (std::size_t n = 0; n < cov.size(); ++n) {
    for (std::size_t i = 0; i < demix.size(); ++i) {
      const auto src = static_cast<int>(n);
      demix[i].row(src) =
          ip_update(demix[i], cov[n][i], src, loading).filter.adjoint();
    }
  }
}

}  // namespace bss
