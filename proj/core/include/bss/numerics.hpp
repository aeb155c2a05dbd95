#pragma once

#include <complex>

#include <Eigen/Dense>

namespace bss {

using Complex = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Index = Eigen::Index;

// Default relative diagonal loading used by every Hermitian solve.
inline constexpr double kDefaultLoading = 1e-9;

// a ⊗ b. Entry p * |b| + q holds a[p] * b[q] (0-based).
CVec kron(const CVec& a, const CVec& b);

// I_{m1} ⊗ b, the (m1 * |b|) x m1 block-diagonal stacking of b.
// Satisfies lift_left(b, |a|) * a == kron(a, b).
CMat lift_left(const CVec& b, Index m1);

// a ⊗ I_{m2}. Row block p equals a[p] * I_{m2}.
// Satisfies lift_right(a, |b|) * b == kron(a, b).
CMat lift_right(const CVec& a, Index m2);

// D^H V D for Hermitian V, returned exactly Hermitian.
CMat congruence(const CMat& d, const CMat& v);

// congruence(lift_left(b, m1), V) and congruence(lift_right(a, m2), V),
// computed blockwise without forming the lift.
CMat congruence_left(const CVec& b, const CMat& v);
CMat congruence_right(const CVec& a, const CMat& v);

// Largest relative loading hermitian_solve escalates to.
inline constexpr double kMaxLoading = 1e-3;

// Solves (A + loading * trace(A)/K * I) x = b for Hermitian A. A positive
// loading that leaves the system numerically indefinite is raised tenfold,
// up to kMaxLoading. `shift`, when given, receives the diagonal shift applied.
// Throws SingularMatrix when no loading yields a stable solution; with zero
// loading the solve is exact or fails.
CVec hermitian_solve(const CMat& a, const CVec& b,
                     double loading = kDefaultLoading, double* shift = nullptr);

// Column n (0-based) of W^{-1}, by LU solve against e_n. A positive loading
// adds loading * ||W||_F / sqrt(M) to the diagonal first.
CVec solve_column(const CMat& w, Index n, double loading = 0.0);

// First N columns of W^{-1} for W = [A1 A2; J -I] with an N x N block A1,
// via the reduced system (A1 + A2 J) U = I. The caller guarantees the -I
// block.
CMat leading_inverse_columns(const CMat& w, Index n_top);

// General square solve A X = B with the same singularity test as above.
CMat general_solve(const CMat& a, const CMat& b);

bool all_finite(const CMat& m);

}  // namespace bss
