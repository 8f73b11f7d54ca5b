// Centered covariance of the augmented moment stack, its block algebra, and
// the variance estimators built on it: the conventional sandwich, the
// misspecification-robust sandwich, the efficiency bound, and the general
// sandwich for an arbitrary moment combination.

#pragma once

#include <vector>

#include "megmm/model.hpp"

namespace megmm {

// Blocks of the centered covariance of [moments; vec_rows(jacobian)].
struct SigmaBlocks {
    Mat sigma;   // m(p+1) x m(p+1)
    Mat s11;     // m x m        moment block
    Mat s12;     // m x mp       moment-Jacobian cross block
    Mat s22;     // mp x mp      Jacobian block
    Mat s11_2;   // m x m        s11 - s12 s22^-1 s21
    Mat s22_1;   // mp x mp      s22 - s21 s11^-1 s12
    Vec theta_at;
    bool pseudo = false;  // a guarded inversion fell back to pseudo-inverse

    Eigen::Index num_moments() const { return s11.rows(); }
};

// Centered sample covariance of the augmented stack at theta.
SigmaBlocks sigma_hat(const MomentModel& model, const DataSet& data,
                      const Vec& theta);

// Assemble blocks from a full covariance matrix (population or sample).
SigmaBlocks make_sigma_blocks(const Mat& sigma, Eigen::Index m,
                              const Vec& theta_at);

// [jac' W, g' W (x) I_p]: the p x m(p+1) combination matrix from the GMM
// first-order condition.
Mat gmm_combination(const Mat& jac_bar, const Vec& g_bar, const Mat& weight);

// (G'WG)^-1 G'W S11 W G (G'WG)^-1: valid under correct specification only.
Mat var_conventional(const Mat& jac_bar, const Mat& weight, const Mat& s11);

// H^-1 A Sigma A' H^-T with H = A * slope; the misspecification-robust
// sandwich when A is the GMM combination.
Mat var_m_of_lambda(const Mat& combo, const Mat& slope, const Mat& sigma);

inline Mat var_misspec_robust(const Mat& combo, const Mat& slope,
                              const Mat& sigma) {
    return var_m_of_lambda(combo, slope, sigma);
}

// Efficiency bound: (G' S11_2^-1 G)^-1 on the linear fast path,
// (slope' Sigma^-1 slope)^-1 on the general path.
Mat var_me_bound(const Mat& slope, const SigmaBlocks& sb, bool linear);

// Decomposition form of the bound: (G'S11^-1 G + Fg' S22_1^-1 Fg)^-1 with
// Fg = F - S21 S11^-1 G. Kept as an independent route for cross-validation.
Mat var_me_bound_decomposed(const Mat& jac_bar, const Mat& curv_bar,
                            const SigmaBlocks& sb);

struct UniformBound {
    Vec sup_variance;             // per-coordinate max diagonal of the bounds
    std::vector<int> argmax_idx;  // index into the candidate list, per coord
};

// Per-coordinate sup of the bound diagonals over a finite candidate set.
UniformBound uniform_me_bound(const std::vector<Mat>& bounds);

// Reporting convention, fixed once: standard error of coordinate k is
// sqrt(V(k,k) / n) for an asymptotic variance matrix V.
Vec standard_errors(const Mat& asymptotic_variance, Eigen::Index n);

}  // namespace megmm
