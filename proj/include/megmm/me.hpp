// Misspecification-efficient estimation: the optimal combination of the
// augmented moments, the oracle recentered estimator, the recentered-GMM
// criterion form, and the worst-case sensitivity machinery (gamma grids and
// union confidence intervals).

#pragma once

#include <string>
#include <vector>

#include "megmm/estimate.hpp"

namespace megmm {

// Recentering targets: the population moment mean (degree of
// misspecification) and Jacobian mean (identification strength).
struct Recentering {
    Vec g_center;    // length m
    Vec jac_center;  // length mp, row-stacking convention
    enum class Source { Oracle, SplitEstimate, GridPoint } source =
        Source::Oracle;
};

// Plug-in recentering from full-sample means at theta; feeding this back into
// the oracle estimator reproduces the plain GMM estimate exactly.
Recentering recentering_from_sample(const MomentModel& model,
                                    const DataSet& data, const Vec& theta);

// slope' Sigma^-1: the optimal combination of the augmented moments.
Mat lambda_star(const Mat& slope, const Mat& sigma);

struct LambdaBlocks {
    Mat moment_block;    // p x m:  G' S11_2^-1
    Mat jacobian_block;  // p x mp: -G' S11_2^-1 S12 S22^-1
};

// Closed-form optimal combination for linear models.
LambdaBlocks lambda_star_linear(const Mat& jac_bar, const SigmaBlocks& sb);

struct MeFit {
    Vec theta;
    Mat variance;  // asymptotic; divide by n for reporting
    GmmFit pilot;
};

// Oracle ME estimator for the pseudo-true value targeted by `weight`; the
// recentering is supplied externally (population values, a split estimate, or
// a sensitivity grid point). Covariance is anchored at the pilot GMM fit.
MeFit oracle_me(const MomentModel& model, const DataSet& data,
                const Mat& weight, const Recentering& centers,
                const GmmOptions& opts = {});

// Recentered-GMM criterion with an arbitrary symmetric PSD weighting `delta`
// on the augmented stack: min_theta (psi_n(theta) - gamma)' delta (...).
Vec me_gmm(const MomentModel& model, const DataSet& data, const Mat& delta,
           const Recentering& centers, const GmmOptions& opts = {});

struct MeGammaFit {
    Vec theta;
    Mat variance;
};

// ME estimator under a hypothesized recentering gamma, with the sandwich
// variance using the hypothesized Jacobian strength and the second moment of
// the stack recentered by gamma gamma'.
MeGammaFit me_gamma(const MomentModel& model, const DataSet& data,
                    const GmmFit& pilot, const Recentering& centers,
                    const GmmOptions& opts = {});

// Constraint set for the sensitivity analysis: gamma2 magnitude in
// [gamma2_min, gamma2_max], gamma1 magnitude in [0, gamma1_max], with gamma1
// in the null space of gamma2' W (the population first-order condition).
struct GammaSpace {
    double gamma1_max = 0.0;
    double gamma2_min = 1e-3;
    double gamma2_max = 1.0;
    Mat weight;
    int grid_resolution = 200;
};

// Deterministic grid over the constraint set (scalar-parameter models).
std::vector<Recentering> make_gamma_grid(const GammaSpace& space,
                                         Eigen::Index m, std::uint64_t seed);

struct SensitivityRow {
    int id;
    double gamma1_norm;
    double gamma2_norm;
    double theta;
    double se;
    double ci_lo;
    double ci_hi;
};

struct UnionCi {
    double lo;
    double hi;
    std::vector<SensitivityRow> rows;
};

// Hull of the per-gamma Wald intervals over the grid. Scalar parameter only.
// When `skip_moment_center` is set (linear model estimated with the
// residual-variance weight), gamma1 is forced to zero: the moment recentering
// drops out of the first-order condition.
UnionCi union_ci(const MomentModel& model, const DataSet& data,
                 const GmmFit& pilot,
                 const std::vector<Recentering>& grid, double alpha,
                 bool skip_moment_center = false,
                 const GmmOptions& opts = {});

// CSV export of the per-gamma sensitivity table.
std::string sensitivity_csv(const std::vector<SensitivityRow>& rows);

}  // namespace megmm
