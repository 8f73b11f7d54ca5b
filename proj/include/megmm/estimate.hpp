// One-step GMM: weight-matrix construction, criterion minimization, and the
// overidentification J-test.

#pragma once

#include <memory>
#include <optional>
#include <string>

#include "megmm/covariance.hpp"
#include "megmm/solver.hpp"

namespace megmm {

enum class WeightKind {
    Identity,
    InstrumentGram,  // (Z'Z/n)^-1, linear IV only
    MomentVarInv,    // inverse variance of the moments (S11^-1)
    ResidualVarInv,  // inverse variance of the residualized moments (S11_2^-1)
    Fixed,
};

struct WeightSpec {
    WeightKind kind = WeightKind::Identity;
    Mat fixed;  // used when kind == Fixed; must be symmetric PD
    // pilot spec for the data-dependent kinds; must itself resolve without a
    // pilot (Identity, InstrumentGram, or Fixed)
    std::shared_ptr<WeightSpec> preliminary;

    static WeightSpec identity() { return {}; }
    static WeightSpec instrument_gram() {
        return {WeightKind::InstrumentGram, {}, nullptr};
    }
    static WeightSpec moment_var_inv() {
        return {WeightKind::MomentVarInv, {}, nullptr};
    }
    static WeightSpec residual_var_inv() {
        return {WeightKind::ResidualVarInv, {}, nullptr};
    }
    static WeightSpec fixed_matrix(Mat w) {
        return {WeightKind::Fixed, std::move(w), nullptr};
    }

    bool data_dependent() const {
        return kind == WeightKind::MomentVarInv ||
               kind == WeightKind::ResidualVarInv;
    }
};

std::string weight_kind_name(WeightKind kind);

struct GmmFit {
    Vec theta;
    Mat weight;    // matrix actually used
    Vec g_bar;     // sample moments at theta
    Mat jac_bar;   // sample Jacobian at theta
    Mat curv_bar;  // sample curvature at theta
    double j_stat = 0.0;
    double j_pvalue = std::numeric_limits<double>::quiet_NaN();
    bool j_defined = false;  // false when just-identified
    SigmaBlocks sigma;       // at theta
    Mat var_conventional;
    Mat var_robust;
    Mat var_me_bound;
};

struct GmmOptions {
    NewtonOptions newton;
    std::optional<Vec> start;  // nonlinear start; defaults to zero
};

// Minimize the GMM quadratic form. Linear models use the closed form; the
// nonlinear path is Newton with line search and a multistart fallback.
GmmFit solve_gmm(const MomentModel& model, const DataSet& data,
                 const Mat& weight, const GmmOptions& opts = {});

struct ResolvedWeight {
    Mat weight;
    std::optional<GmmFit> pilot;  // present for data-dependent kinds
};

// Resolve a weight spec against the data. Data-dependent kinds run a pilot
// GMM with the preliminary spec (default identity) and invert the relevant
// covariance block at the pilot estimate; never iterated beyond one pilot.
ResolvedWeight build_weight(const WeightSpec& spec, const MomentModel& model,
                            const DataSet& data, const GmmOptions& opts = {});

struct JTest {
    double stat;
    double pvalue;
    bool defined;  // false when m == p (just-identified)
};

// Chi-square(m-p) upper tail at the J statistic.
JTest j_test(double j_stat, Eigen::Index m, Eigen::Index p);

}  // namespace megmm
