// Bootstrap procedures (recentered, fully recentered-and-reweighted, and
// double-recentered) plus the repeated split-sample estimator, with
// percentile intervals and robust spread estimates.
//
// Replicate b always derives its RNG from derive_seed(base_seed, b) and draws
// its resample indices before any other randomness, so the index streams are
// shared across methods run with the same base seed and are independent of
// the worker count.

#pragma once

#include "megmm/me.hpp"
#include "megmm/parallel.hpp"
#include "megmm/rng.hpp"

namespace megmm {

enum class DrawKind { HH, ME, DR, SplitSample };

struct DrawSet {
    Mat draws;  // surviving replicates in replicate order, one row per draw
    std::vector<int> replicate_ids;  // source replicate index per draw row
    Mat draw_se;  // per-draw standard errors when requested (else 0 x 0)
    DrawKind kind = DrawKind::HH;
    std::uint64_t base_seed = 0;
    int requested = 0;
    int failures = 0;

    // more than 5% discarded replicates marks the set unreliable
    bool reliable() const {
        return requested > 0 &&
               static_cast<double>(failures) <=
                   0.05 * static_cast<double>(requested);
    }
    Eigen::Index size() const { return draws.rows(); }
};

// CSV export: replicate index, estimate components, convergence flag.
// Discarded replicates appear with empty estimate cells and flag 0.
std::string draw_set_csv(const DrawSet& draws);

// n i.i.d. uniform draws from {0..n-1}; deterministic given the rng state.
std::vector<Eigen::Index> resample_indices(Eigen::Index n, Rng& rng);

// Random partition into halves of size ceil(n/2) and floor(n/2).
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>>
split_half_indices(Eigen::Index n, Rng& rng);

struct BootstrapOptions {
    int threads = 0;  // 0 = all hardware threads
    GmmOptions gmm;
};

// Recentered bootstrap: each replicate minimizes the GMM criterion in the
// recentered bootstrap moments, with the weight spec re-resolved on the
// bootstrap sample for data-dependent kinds.
DrawSet hh_bootstrap(const MomentModel& model, const DataSet& data,
                     const WeightSpec& spec, const GmmFit& fit, int b_draws,
                     std::uint64_t seed, const BootstrapOptions& opts = {});

// Bootstrap analog of the efficient recentered estimator: both blocks of the
// augmented stack recentered at the original-sample means, weighted by the
// inverse of the original-sample augmented covariance. The draw spread
// estimates the efficiency bound.
DrawSet me_bootstrap(const MomentModel& model, const DataSet& data,
                     const GmmFit& fit, int b_draws, std::uint64_t seed,
                     const BootstrapOptions& opts = {});

struct DrOptions : BootstrapOptions {
    // test hook: drop the Jacobian-recentering term from the estimating
    // equation
    bool jacobian_correction = true;
    // also compute each replicate's misspecification-robust standard error
    // (enables percentile-t intervals; costs one covariance pass per draw)
    bool replicate_se = false;
};

// Double-recentered bootstrap: solves the original-sample combination matrix
// applied to the fully recentered bootstrap stack. Mimics the sampling
// distribution of the plain GMM estimator under misspecification.
DrawSet dr_bootstrap(const MomentModel& model, const DataSet& data,
                     const GmmFit& fit, int b_draws, std::uint64_t seed,
                     const DrOptions& opts = {});

struct SplitAggregate {
    Vec mean;
    Vec sd_mean_rule;     // across-split standard deviation, per coordinate
    Vec median;           // coordinate-wise median of the split estimates
    Mat var_median_rule;  // median of {V_s/n_half + dev dev'} across splits
    Eigen::Index n_half = 0;
};

struct SplitResult {
    DrawSet draws;
    SplitAggregate aggregate;
};

// Repeated half-sample splitting: estimate the recentering on one half, solve
// the recentered estimator on the other, repeat S times and aggregate. With
// the residual-variance weight on a linear model the moment recentering is
// skipped (it drops out of the first-order condition).
SplitResult split_sample(const MomentModel& model, const DataSet& data,
                         const WeightSpec& spec, int s_splits,
                         std::uint64_t seed,
                         const BootstrapOptions& opts = {});

struct Interval {
    double lo;
    double hi;
    double length() const { return hi - lo; }
    bool contains(double x) const { return x >= lo && x <= hi; }
};

// Empirical alpha/2 and 1-alpha/2 quantiles with linear interpolation
// (type-7), per coordinate. Requires at least 20 surviving draws.
std::vector<Interval> percentile_ci(const DrawSet& draws, double alpha);

// Percentile-t intervals from studentized draws: requires draw_se (run the
// double-recentered bootstrap with replicate_se). `center` and `center_se`
// are the original-sample estimate and its standard error.
std::vector<Interval> percentile_t_ci(const DrawSet& draws,
                                      const Vec& center,
                                      const Vec& center_se, double alpha);

// Per-coordinate quantile of the draw matrix (type-7).
Vec draw_quantile(const Mat& draws, double q);

// 1.4826 * median absolute deviation, per coordinate.
Vec robust_sd(const DrawSet& draws);

// Plain standard deviation of the draws, per coordinate.
Vec draw_sd(const Mat& draws);

}  // namespace megmm
