#include "bss/numerics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "bss/error.hpp"

namespace bss {
namespace {

// Pivot magnitudes below this fraction of the largest pivot mark a system as
// numerically singular.
double singular_threshold(Index k) {
  return static_cast<double>(k) * std::numeric_limits<double>::epsilon();
}

void require_square(const CMat& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw ContractViolation(std::string(what) + ": matrix must be square and non-empty, got " +
                            std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
}

template <typename Lu>
void check_lu_pivots(const Lu& lu, const char* what) {
  const auto diag = lu.matrixLU().diagonal().cwiseAbs();
  const double max_pivot = diag.maxCoeff();
  const double min_pivot = diag.minCoeff();
  if (!std::isfinite(max_pivot) || max_pivot == 0.0 ||
      min_pivot <= singular_threshold(diag.size()) * max_pivot) {
    throw SingularMatrix(std::string(what) + ": matrix is singular");
  }
}

}  // namespace

CVec kron(const CVec& a, const CVec& b) {
  if (a.size() == 0 || b.size() == 0) {
    throw ContractViolation("kron: empty operand");
  }
  CVec out(a.size() * b.size());
  for (Index p = 0; p < a.size(); ++p) {
    out.segment(p * b.size(), b.size()) = a[p] * b;
  }
  return out;
}

CMat lift_left(const CVec& b, Index m1) {
  if (m1 < 1 || b.size() == 0) {
    throw ContractViolation("lift_left: need m1 >= 1 and non-empty b");
  }
  const Index m2 = b.size();
  CMat out = CMat::Zero(m1 * m2, m1);
  for (Index p = 0; p < m1; ++p) {
    out.block(p * m2, p, m2, 1) = b;
  }
  return out;
}

CMat lift_right(const CVec& a, Index m2) {
  if (m2 < 1 || a.size() == 0) {
    throw ContractViolation("lift_right: need m2 >= 1 and non-empty a");
  }
  const Index m1 = a.size();
  CMat out = CMat::Zero(m1 * m2, m2);
  for (Index p = 0; p < m1; ++p) {
    out.block(p * m2, 0, m2, m2).diagonal().setConstant(a[p]);
  }
  return out;
}

CMat congruence(const CMat& d, const CMat& v) {
  require_square(v, "congruence");
  if (d.rows() != v.rows()) {
    throw ContractViolation("congruence: D has " + std::to_string(d.rows()) +
                            " rows but V is " + std::to_string(v.rows()) + "x" +
                            std::to_string(v.cols()));
  }
  CMat out = d.adjoint() * (v * d);
  // Round-off leaves the two triangles slightly apart.
  return 0.5 * (out + out.adjoint());
}

CMat congruence_left(const CVec& b, const CMat& v) {
  require_square(v, "congruence_left");
  const Index m2 = b.size();
  if (m2 == 0 || v.rows() % m2 != 0) {
    throw ContractViolation("congruence_left: V size is not a multiple of |b|");
  }
  const Index m1 = v.rows() / m2;
  CMat out(m1, m1);
  for (Index r = 0; r < m1; ++r) {
    for (Index p = 0; p <= r; ++p) {
      out(p, r) = b.dot(v.block(p * m2, r * m2, m2, m2) * b);
      out(r, p) = std::conj(out(p, r));
    }
    out(r, r) = out(r, r).real();
  }
  return out;
}

CMat congruence_right(const CVec& a, const CMat& v) {
  require_square(v, "congruence_right");
  const Index m1 = a.size();
  if (m1 == 0 || v.rows() % m1 != 0) {
    throw ContractViolation("congruence_right: V size is not a multiple of |a|");
  }
  const Index m2 = v.rows() / m1;
  CMat out = CMat::Zero(m2, m2);
  for (Index p = 0; p < m1; ++p) {
    for (Index r = 0; r < m1; ++r) {
      out.noalias() += (std::conj(a(p)) * a(r)) * v.block(p * m2, r * m2, m2, m2);
    }
  }
  return 0.5 * (out + out.adjoint());
}

CVec hermitian_solve(const CMat& a, const CVec& b, double loading, double* shift) {
  require_square(a, "hermitian_solve");
  if (b.size() != a.rows()) {
    throw ContractViolation("hermitian_solve: rhs length mismatch");
  }
  if (!(loading >= 0.0)) {
    throw ContractViolation("hermitian_solve: loading must be nonnegative");
  }
  const Index k = a.rows();
  const double scale = a.trace().real() / static_cast<double>(k);
  std::string failure;
  for (double level = loading;; level *= 10.0) {
    CMat loaded = a;
    const double applied = level * scale;
    if (applied > 0.0) loaded.diagonal().array() += applied;
    Eigen::LLT<CMat> llt(loaded);
    if (llt.info() != Eigen::Success) {
      failure = "hermitian_solve: matrix is not positive definite";
    } else {
      const auto d = llt.matrixLLT().diagonal().real().cwiseAbs2();
      const double max_d = d.maxCoeff();
      if (!std::isfinite(max_d) || max_d == 0.0 ||
          d.minCoeff() <= singular_threshold(k) * max_d) {
        failure = "hermitian_solve: matrix is singular after loading";
      } else {
        CVec x = llt.solve(b);
        if (x.allFinite()) {
          if (shift != nullptr) *shift = applied;
          return x;
        }
        failure = "hermitian_solve: non-finite solution";
      }
    }
    if (!(level > 0.0) || !(scale > 0.0) || level * 10.0 > kMaxLoading * (1.0 + 1e-12)) break;
  }
  throw SingularMatrix(failure);
}

CVec solve_column(const CMat& w, Index n, double loading) {
  require_square(w, "solve_column");
  if (n < 0 || n >= w.rows()) {
    throw ContractViolation("solve_column: column index out of range");
  }
  Eigen::PartialPivLU<CMat> lu;
  if (loading > 0.0) {
    CMat loaded = w;
    loaded.diagonal().array() +=
        loading * w.norm() / std::sqrt(static_cast<double>(w.rows()));
    lu.compute(loaded);
  } else {
    lu.compute(w);
  }
  check_lu_pivots(lu, "solve_column");
  CVec x = lu.solve(CVec::Unit(w.rows(), n));
  if (!x.allFinite()) {
    throw SingularMatrix("solve_column: non-finite solution");
  }
  return x;
}

CMat leading_inverse_columns(const CMat& w, Index n_top) {
  require_square(w, "leading_inverse_columns");
  const Index k = w.rows();
  if (n_top < 1 || n_top >= k) {
    throw ContractViolation("leading_inverse_columns: n_top out of range");
  }
  const auto coupling = w.bottomLeftCorner(k - n_top, n_top);
  const CMat reduced = w.topLeftCorner(n_top, n_top) +
                       w.topRightCorner(n_top, k - n_top) * coupling;
  CMat x(k, n_top);
  x.topRows(n_top) = general_solve(reduced, CMat::Identity(n_top, n_top));
  x.bottomRows(k - n_top).noalias() = coupling * x.topRows(n_top);
  return x;
}

CMat general_solve(const CMat& a, const CMat& b) {
  require_square(a, "general_solve");
  if (b.rows() != a.rows()) {
    throw ContractViolation("general_solve: rhs row mismatch");
  }
  Eigen::PartialPivLU<CMat> lu(a);
  check_lu_pivots(lu, "general_solve");
  CMat x = lu.solve(b);
  if (!x.allFinite()) {
    throw SingularMatrix("general_solve: non-finite solution");
  }
  return x;
}

bool all_finite(const CMat& m) { return m.allFinite(); }

}  // namespace bss
