// Guarded linear algebra: every inversion goes through an eigendecomposition
// (symmetric) or rank-revealing factorization (general) with a condition
// number cap; past the cap we fall back to the Moore-Penrose pseudo-inverse
// instead of failing.

#pragma once

#include <Eigen/Dense>

namespace megmm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kConditionCap = 1e12;

struct InverseResult {
    Mat inverse;
    bool pseudo = false;  // true when the condition cap triggered the fallback
};

// Inverse of a symmetric PSD matrix. Eigenvalues below max_eig / cap are
// treated as zero (generalized inverse).
InverseResult guarded_inverse_sym(const Mat& a, double cap = kConditionCap);

// Inverse of a general square matrix; falls back to the pseudo-inverse via
// complete orthogonal decomposition when ill-conditioned.
InverseResult guarded_inverse(const Mat& a, double cap = kConditionCap);

// Covariance-block inverse for estimating-equation weights: like
// guarded_inverse_sym, but a numerically zero block maps to the identity
// instead of the zero matrix, so zero-variance directions keep unit weight
// and degenerate exact-fit problems stay solvable.
InverseResult weight_inverse_sym(const Mat& a, double cap = kConditionCap);

// Column rank with a relative singular-value threshold.
Eigen::Index column_rank(const Mat& a, double tol = 1e-10);

// Symmetry check: ||A - A'|| small relative to ||A||.
bool is_symmetric(const Mat& a, double tol = 1e-8);

// Symmetric positive definite check via eigenvalue floor.
bool is_spd(const Mat& a, double floor_ratio = 1e-12);

// Smallest eigenvalue of a symmetric matrix.
double min_eigenvalue(const Mat& a);

// 0.5 (A + A'): clean up roundoff asymmetry before eigen/Cholesky work.
inline Mat symmetrize(const Mat& a) { return 0.5 * (a + a.transpose()); }

// Row-stack of a matrix: [row 1, row 2, ...] as one vector. This is the
// single vec convention used for Jacobian blocks across the project.
Vec vec_rows(const Mat& a);

// Inverse of vec_rows.
Mat unvec_rows(const Vec& v, Eigen::Index rows, Eigen::Index cols);

}  // namespace megmm
