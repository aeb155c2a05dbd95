#pragma once

#include <string>
#include <vector>

#include "bss/numerics.hpp"
#include "bss/stft.hpp"

namespace bss {

enum class Algorithm { kAuxIva, kOverIva, kBiIva };

std::string to_string(Algorithm algorithm);
// Accepts "auxiva", "overiva", "biiva" (case-insensitive).
Algorithm parse_algorithm(const std::string& name);
// Forgetting factors that worked best for each engine on the 36-mic setup.
double default_forgetting_factor(Algorithm algorithm);

struct SeparatorConfig {
  int mics = 0;
  int sources = 0;
  // Sub-filter lengths for BiIVA; mics == m1 * m2.
  int m1 = 0;
  int m2 = 0;
  double alpha = 0.98;
  Algorithm algorithm = Algorithm::kBiIva;
  // Sub-filter alternations (or IP sweeps) per source per frame. 0 freezes
  // the demixing filters, which is only useful for debugging.
  int inner_iters = 1;
  double loading = kDefaultLoading;
  double weight_floor = 1e-12;

  // Throws ConfigError naming the violated constraint.
  void validate() const;
  // AuxIVA runs determined on the first `sources` channels; the other
  // engines use all `mics`.
  int active_channels() const;
};

// Per-frequency adaptive quantities. Indexing is [bin] or [source][bin].
struct SeparatorState {
  SeparatorConfig config;
  int bins = 0;
  long frame_index = 0;

  // K x K demixing matrices, K = config.active_channels(). Rows 0..N-1 are
  // the extraction filters (conjugated); for OverIVA/BiIVA rows N..M-1 hold
  // the noise block [J, -I].
  std::vector<CMat> demix;
  // Weighted covariances V_{n,i}.
  std::vector<std::vector<CMat>> weighted_cov;
  // Spatial covariance C_i (OverIVA/BiIVA).
  std::vector<CMat> spatial_cov;
  // (M - N) x N orthogonal-constraint block J_i (OverIVA/BiIVA).
  std::vector<CMat> noise_coupling;
  // BiIVA sub-filters of length m1 and m2.
  std::vector<std::vector<CVec>> subfilter_first;
  std::vector<std::vector<CVec>> subfilter_second;
};

// Separated spectra of one frame: row n, column i holds Y_{n,i}.
struct SourceEstimate {
  long frame_index = 0;
  CMat spectra;
};

// Wall-clock seconds spent in each stage of process_frame.
struct FrameTiming {
  double statistics = 0.0;
  double filters = 0.0;
  double constraint = 0.0;
  double output = 0.0;

  double total() const { return statistics + filters + constraint + output; }
};

// Covariances start at identity, OverIVA at W = diag(I_N, -I_{M-N}) (the
// noise-row sign is immaterial to every output), AuxIVA at I_N, and BiIVA
// with w1 = e_n, w2 = e_1. BiIVA's noise rows start as the negated unit
// vectors complementing the Kronecker rows, which is the orthogonal
// complement under C = I; the [J, -I] structure applies from frame 1.
SeparatorState init_state(const SeparatorConfig& cfg, int bins);

// phi = I / max(sum_i |w_{n,i}^H x_i|^2, floor), with the current filters.
double contrast_weight(const SeparatorState& state, const SpectralFrame& frame,
                       int source);

CMat update_weighted_cov(const CMat& prev, const CVec& x, double phi,
                         double alpha);
CMat update_spatial_cov(const CMat& prev, const CVec& x, double alpha);

// In-place forms used on the hot path.
void accumulate_weighted_cov(CMat& cov, const CVec& x, double phi,
                             double alpha);

struct FilterUpdate {
  // Normalized so filter^H V filter = 1.
  CVec filter;
  CVec unnormalized;
};

// Iterative projection: w = (W V)^{-1} e_n, then w / sqrt(w^H V w).
// `demix` is K x K, `source` is 0-based.
FilterUpdate ip_update(const CMat& demix, const CMat& cov, int source,
                       double loading);

// J = (R_N C Ws^H)(R_S C Ws^H)^{-1}. Diagonal loading is applied to the
// N x N block only when it is numerically singular.
CMat oc_update(const CMat& spatial_cov, const CMat& extraction,
               double loading);

struct SubfilterUpdate {
  CVec filter;
  CVec unnormalized;
  // Lifted covariance D^H V D.
  CMat lifted_cov;
  // D^H W^{-1} e_n.
  CVec rhs;
};

// First half of the alternating update: with w2 fixed, D = I_{m1} ⊗ w2.
SubfilterUpdate update_first_subfilter(const CMat& demix, const CMat& cov,
                                       const CVec& second, int source,
                                       double loading);
// Second half: with w1 fixed, D = w1 ⊗ I_{m2}.
SubfilterUpdate update_second_subfilter(const CMat& demix, const CMat& cov,
                                        const CVec& first, int source,
                                        double loading);

// Runs one frame of the online algorithm selected by state.config and
// returns the separated spectra y_n = (row n of W) x for every bin.
SourceEstimate process_frame(SeparatorState& state, const SpectralFrame& frame,
                             FrameTiming* timing = nullptr);

// Rescales each source by (W_i^{-1})_{ref, n} so it approximates that
// source's image at `reference_channel` (0-based).
CMat projection_back(const SeparatorState& state, const CMat& spectra,
                     int reference_channel);

// sum_i sum_n w_{n,i}^H V_{n,i} w_{n,i} - 2 sum_i log|det W_i| for
// determined demixing matrices.
double auxiliary_objective(const std::vector<CMat>& demix,
                           const std::vector<std::vector<CMat>>& cov);

// One IP sweep over all sources and bins with fixed covariances.
void ip_sweep(std::vector<CMat>& demix,
              const std::vector<std::vector<CMat>>& cov, double loading);

// Convenience owner of a state for stream processing.
class OnlineSeparator {
 public:
  OnlineSeparator(const SeparatorConfig& cfg, int bins)
      : state_(init_state(cfg, bins)) {}

  SourceEstimate process(const SpectralFrame& frame,
                         FrameTiming* timing = nullptr) {
    return process_frame(state_, frame, timing);
  }
  const SeparatorState& state() const { return state_; }

 private:
  SeparatorState state_;
};

}  // namespace bss
