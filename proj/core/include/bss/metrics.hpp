#pragma once

#include <limits>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

namespace bss {

// Which segments decide the estimate/reference pairing.
enum class PairingWindow { kConverged, kFirstSegment };

struct EvalConfig {
  double segment_length = 2.0;  // seconds
  int filter_length = 512;      // allowed distortion taps
  int reference_channel = 1;    // 1-based microphone index
  PairingWindow pairing = PairingWindow::kConverged;

  void validate() const;
};

// Orthogonal split of an estimate (zero-extended by L - 1 samples) into the
// part explained by L-tap filtering of the target reference, the part
// explained by the other references, and the residual.
struct Decomposition {
  std::vector<double> target;
  std::vector<double> interference;
  std::vector<double> artifact;
};

// Precomputes the reference Gram matrix once so several estimates can be
// decomposed against the same reference segment.
class ReferenceProjector {
 public:
  // Throws ContractViolation for mismatched lengths and when a reference is
  // silent or the references are linearly dependent.
  ReferenceProjector(const std::vector<std::span<const double>>& references,
                     int filter_length);

  Decomposition decompose(std::span<const double> estimate, int target) const;

  int filter_length() const { return filter_length_; }
  std::size_t num_references() const { return references_.size(); }

 private:
  std::vector<double> synthesize(const Eigen::VectorXd& coeffs,
                                 std::size_t first_ref, std::size_t count) const;

  std::vector<std::vector<double>> references_;
  int filter_length_;
  std::size_t length_;
  Eigen::LDLT<Eigen::MatrixXd> all_;
  std::vector<Eigen::LDLT<Eigen::MatrixXd>> single_;
};

Decomposition decompose(std::span<const double> estimate,
                        const std::vector<std::span<const double>>& references,
                        int target, int filter_length);

inline constexpr double kPlusInfinityDb = std::numeric_limits<double>::infinity();

struct SirSdr {
  double sir_db;
  double sdr_db;
};

// Component energies below this fraction of the estimate energy count as
// exact zeros and yield infinite ratios.
inline constexpr double kZeroEnergyFraction = 1e-20;

SirSdr sir_sdr(const Decomposition& d);

struct SegmentScore {
  int segment = 0;
  double t_start_s = 0.0;
  int source = 0;  // 0-based reference index
  double sir_db = 0.0;
  double sdr_db = 0.0;
  double sir_improvement_db = 0.0;
  double sdr_improvement_db = 0.0;
};

struct EvalReport {
  int segments = 0;
  std::vector<SegmentScore> scores;
  // Estimate index assigned to each reference.
  std::vector<int> assignment;
  // Means over the final ceil(25%) of segments, per reference.
  std::vector<double> converged_sir_db;
  std::vector<double> converged_sdr_db;
  std::vector<double> converged_sir_improvement_db;
  std::vector<double> converged_sdr_improvement_db;
  // Mean input SIR per reference over all segments, and the mixture's iSNR
  // when known.
  std::vector<double> input_sir_db;
  double input_snr_db = std::numeric_limits<double>::quiet_NaN();
};

// Permutation maximizing total SIR, summed over the final 25% of segments
// (kConverged) or taken from the first segment; entry n is the estimate
// paired with reference n.
std::vector<int> pair_sources(const std::vector<std::vector<double>>& estimates,
                              const std::vector<std::vector<double>>& references,
                              int sample_rate, const EvalConfig& cfg);

// Per-segment SIR/SDR of each estimate against its reference (after
// pairing when `assignment` is empty) and improvements over `mixture`.
EvalReport convergence_curve(const std::vector<std::vector<double>>& estimates,
                             const std::vector<std::vector<double>>& references,
                             const std::vector<double>& mixture,
                             int sample_rate, const EvalConfig& cfg,
                             std::vector<int> assignment = {});

}  // namespace bss
