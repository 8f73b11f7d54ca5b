#include "megmm/estimate.hpp"

#include <boost/math/distributions/chi_squared.hpp>

namespace megmm {

std::string weight_kind_name(WeightKind kind) {
    switch (kind) {
        case WeightKind::Identity: return "identity";
        case WeightKind::InstrumentGram: return "zz";
        case WeightKind::MomentVarInv: return "s11";
        case WeightKind::ResidualVarInv: return "s112";
        case WeightKind::Fixed: return "fixed";
    }
    return "unknown";
}

namespace {

Vec solve_linear_gmm(const MomentModel& model, const DataSet& data,
                     const Mat& weight) {
    // g_n(theta) = g_n(0) + jac_bar * theta, so the FOC is linear in theta
    const Vec zero = Vec::Zero(model.num_params());
    const SampleMoments s0 = sample_means(model, data, zero);
    const Mat gwg = s0.jac_bar.transpose() * weight * s0.jac_bar;
    const auto inv = guarded_inverse_sym(gwg);
    if (inv.pseudo)
        throw NumericalError("solve_gmm: rank-deficient design (G'WG)");
    return -inv.inverse * (s0.jac_bar.transpose() * weight * s0.g_bar);
}

Vec solve_nonlinear_gmm(const MomentModel& model, const DataSet& data,
                        const Mat& weight, const GmmOptions& opts) {
    CriterionFn fn = [&](const Vec& theta) -> CriterionEval {
        const SampleMoments s = sample_means(model, data, theta);
        CriterionEval ev;
        ev.value = s.g_bar.dot(weight * s.g_bar);
        ev.gradient = 2.0 * s.jac_bar.transpose() * weight * s.g_bar;
        const Mat combo = gmm_combination(s.jac_bar, s.g_bar, weight);
        ev.hessian = 2.0 * combo * augmented_jacobian(s);
        ev.scale = s.g_bar.norm();
        return ev;
    };
    const Vec start =
        opts.start ? *opts.start : Vec::Zero(model.num_params());
    return minimize_newton(fn, start, opts.newton).theta;
}

}  // namespace

GmmFit solve_gmm(const MomentModel& model, const DataSet& data,
                 const Mat& weight, const GmmOptions& opts) {
    if (weight.rows() != model.num_moments() ||
        weight.cols() != model.num_moments())
        throw std::invalid_argument("solve_gmm: weight dimension mismatch");
    if (!is_symmetric(weight))
        throw std::invalid_argument("solve_gmm: weight must be symmetric");

    GmmFit fit;
    fit.theta = model.is_linear()
                    ? solve_linear_gmm(model, data, weight)
                    : solve_nonlinear_gmm(model, data, weight, opts);
    fit.weight = weight;

    const SampleMoments s = sample_means(model, data, fit.theta);
    fit.g_bar = s.g_bar;
    fit.jac_bar = s.jac_bar;
    fit.curv_bar = s.curv_bar;
    fit.j_stat = static_cast<double>(data.size()) *
                 s.g_bar.dot(weight * s.g_bar);
    const JTest jt = j_test(fit.j_stat, model.num_moments(),
                            model.num_params());
    fit.j_pvalue = jt.pvalue;
    fit.j_defined = jt.defined;

    fit.sigma = sigma_hat(model, data, fit.theta);
    fit.var_conventional = var_conventional(s.jac_bar, weight, fit.sigma.s11);
    const Mat combo = gmm_combination(s.jac_bar, s.g_bar, weight);
    const Mat slope = augmented_jacobian(s);
    fit.var_robust = var_misspec_robust(combo, slope, fit.sigma.sigma);
    fit.var_me_bound = var_me_bound(slope, fit.sigma, model.is_linear());
    return fit;
}

ResolvedWeight build_weight(const WeightSpec& spec, const MomentModel& model,
                            const DataSet& data, const GmmOptions& opts) {
    const Eigen::Index m = model.num_moments();
    switch (spec.kind) {
        case WeightKind::Identity:
            return {Mat::Identity(m, m), std::nullopt};
        case WeightKind::InstrumentGram: {
            const auto* iv = dynamic_cast<const LinearIvModel*>(&model);
            if (iv == nullptr)
                throw std::invalid_argument(
                    "build_weight: instrument-gram weight needs a linear IV "
                    "model");
            const auto inv = guarded_inverse_sym(iv->instrument_gram(data));
            if (inv.pseudo)
                throw NumericalError(
                    "build_weight: singular instrument gram");
            return {inv.inverse, std::nullopt};
        }
        case WeightKind::Fixed: {
            if (spec.fixed.rows() != m || spec.fixed.cols() != m)
                throw std::invalid_argument(
                    "build_weight: fixed matrix dimension mismatch");
            if (!is_symmetric(spec.fixed) || !is_spd(spec.fixed))
                throw std::invalid_argument(
                    "build_weight: fixed matrix must be symmetric positive "
                    "definite");
            return {spec.fixed, std::nullopt};
        }
        case WeightKind::MomentVarInv:
        case WeightKind::ResidualVarInv: {
            WeightSpec prelim = spec.preliminary ? *spec.preliminary
                                                 : WeightSpec::identity();
            if (prelim.data_dependent())
                throw std::invalid_argument(
                    "build_weight: preliminary spec must resolve without a "
                    "pilot");
            const ResolvedWeight pre =
                build_weight(prelim, model, data, opts);
            GmmFit pilot = solve_gmm(model, data, pre.weight, opts);
            const Mat& block = spec.kind == WeightKind::MomentVarInv
                                   ? pilot.sigma.s11
                                   : pilot.sigma.s11_2;
            const auto inv = guarded_inverse_sym(block);
            return {inv.inverse, std::move(pilot)};
        }
    }
    throw std::invalid_argument("build_weight: unknown kind");
}

JTest j_test(double j_stat, Eigen::Index m, Eigen::Index p) {
    if (m == p) return {j_stat, std::numeric_limits<double>::quiet_NaN(),
                        false};
    boost::math::chi_squared dist(static_cast<double>(m - p));
    const double pvalue =
        j_stat <= 0.0 ? 1.0 : boost::math::cdf(boost::math::complement(
                                  dist, j_stat));
    return {j_stat, pvalue, true};
}

}  // namespace megmm
