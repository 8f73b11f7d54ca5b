#include "megmm/me.hpp"

#include <boost/math/distributions/normal.hpp>
#include <cstdio>

#include "megmm/rng.hpp"

namespace megmm {

Recentering recentering_from_sample(const MomentModel& model,
                                    const DataSet& data, const Vec& theta) {
    const SampleMoments s = sample_means(model, data, theta);
    Recentering c;
    c.g_center = s.g_bar;
    c.jac_center = vec_rows(s.jac_bar);
    return c;
}

Mat lambda_star(const Mat& slope, const Mat& sigma) {
    const auto inv = guarded_inverse_sym(sigma);
    return slope.transpose() * inv.inverse;
}

LambdaBlocks lambda_star_linear(const Mat& jac_bar, const SigmaBlocks& sb) {
    const auto inv11_2 = weight_inverse_sym(sb.s11_2);
    const auto inv22 = guarded_inverse_sym(sb.s22);
    LambdaBlocks lb;
    lb.moment_block = jac_bar.transpose() * inv11_2.inverse;
    lb.jacobian_block = -lb.moment_block * sb.s12 * inv22.inverse;
    return lb;
}

namespace {

void check_centers(const MomentModel& model, const Recentering& centers) {
    if (centers.g_center.size() != model.num_moments() ||
        centers.jac_center.size() !=
            model.num_moments() * model.num_params())
        throw std::invalid_argument("recentering dimension mismatch");
}

// Linear estimating-equation solve: combo1 (g_n(theta) - c1) +
// combo2 (vec jac - c2) = 0, using g_n(theta) = g_n(0) + jac_bar theta.
Vec solve_linear_recentered(const MomentModel& model, const DataSet& data,
                            const Mat& combo1, const Mat& combo2,
                            const Recentering& centers) {
    const Vec zero = Vec::Zero(model.num_params());
    const SampleMoments s0 = sample_means(model, data, zero);
    const Mat bread = combo1 * s0.jac_bar;
    const auto inv = guarded_inverse(bread);
    if (inv.pseudo)
        throw NumericalError("recentered solve: singular bread matrix");
    const Vec rhs = combo1 * (s0.g_bar - centers.g_center) +
                    combo2 * (vec_rows(s0.jac_bar) - centers.jac_center);
    return -inv.inverse * rhs;
}

Vec solve_nonlinear_recentered(const MomentModel& model, const DataSet& data,
                               const Mat& delta, const Recentering& centers,
                               const Vec& start, const GmmOptions& opts) {
    Vec gamma(delta.rows());
    gamma.head(centers.g_center.size()) = centers.g_center;
    gamma.tail(centers.jac_center.size()) = centers.jac_center;

    CriterionFn fn = [&](const Vec& theta) -> CriterionEval {
        const SampleMoments s = sample_means(model, data, theta);
        const Vec resid = s.psi_bar - gamma;
        CriterionEval ev;
        const Mat slope = augmented_jacobian(s);
        ev.value = resid.dot(delta * resid);
        ev.gradient = 2.0 * slope.transpose() * delta * resid;
        // Gauss-Newton curvature; exact enough with the line search
        ev.hessian = 2.0 * slope.transpose() * delta * slope;
        ev.scale = resid.norm();
        return ev;
    };
    GmmOptions local = opts;
    return minimize_newton(fn, start, local.newton).theta;
}

}  // namespace

MeFit oracle_me(const MomentModel& model, const DataSet& data,
                const Mat& weight, const Recentering& centers,
                const GmmOptions& opts) {
    check_centers(model, centers);
    MeFit fit;
    fit.pilot = solve_gmm(model, data, weight, opts);
    if (model.is_linear()) {
        const LambdaBlocks lb =
            lambda_star_linear(fit.pilot.jac_bar, fit.pilot.sigma);
        fit.theta = solve_linear_recentered(model, data, lb.moment_block,
                                            lb.jacobian_block, centers);
    } else {
        const auto delta = weight_inverse_sym(fit.pilot.sigma.sigma);
        fit.theta = solve_nonlinear_recentered(model, data, delta.inverse,
                                               centers, fit.pilot.theta,
                                               opts);
    }
    fit.variance = fit.pilot.var_me_bound;
    return fit;
}

Vec me_gmm(const MomentModel& model, const DataSet& data, const Mat& delta,
           const Recentering& centers, const GmmOptions& opts) {
    check_centers(model, centers);
    if (delta.rows() != model.augmented_dim() ||
        delta.cols() != model.augmented_dim())
        throw std::invalid_argument("me_gmm: delta dimension mismatch");
    if (!is_symmetric(delta))
        throw std::invalid_argument("me_gmm: delta must be symmetric");
    if (min_eigenvalue(delta) < -1e-8 * std::max(1.0,
                                                 delta.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("me_gmm: delta must be PSD");

    const Eigen::Index m = model.num_moments();
    const Eigen::Index mp = m * model.num_params();
    if (model.is_linear()) {
        // FOC: jac_bar' [delta11 (g_n - c1) + delta12 (vec jac - c2)] = 0
        const Vec zero = Vec::Zero(model.num_params());
        const SampleMoments s0 = sample_means(model, data, zero);
        const Mat combo1 = s0.jac_bar.transpose() * delta.topLeftCorner(m, m);
        const Mat combo2 =
            s0.jac_bar.transpose() * delta.topRightCorner(m, mp);
        return solve_linear_recentered(model, data, combo1, combo2, centers);
    }
    const Vec start = opts.start ? *opts.start : Vec::Zero(model.num_params());
    return solve_nonlinear_recentered(model, data, delta, centers, start,
                                      opts);
}

MeGammaFit me_gamma(const MomentModel& model, const DataSet& data,
                    const GmmFit& pilot, const Recentering& centers,
                    const GmmOptions& opts) {
    check_centers(model, centers);
    const auto delta = weight_inverse_sym(pilot.sigma.sigma);
    GmmOptions local = opts;
    if (!local.start) local.start = pilot.theta;
    MeGammaFit fit;
    fit.theta = me_gmm(model, data, delta.inverse, centers, local);

    const Mat jac_hyp = unvec_rows(centers.jac_center, model.num_moments(),
                                   model.num_params());
    if (model.is_linear()) {
        // linear models: the variance depends only on the hypothesized
        // identification strength, through the residualized moment variance
        const Mat inv11_2 = guarded_inverse_sym(pilot.sigma.s11_2).inverse;
        fit.variance =
            guarded_inverse_sym(jac_hyp.transpose() * inv11_2 * jac_hyp)
                .inverse;
        return fit;
    }

    // Hypothesized slope: the gamma2 block is the assumed identification
    // strength; the curvature block is evaluated at the fitted point.
    const SampleMoments s = sample_means(model, data, fit.theta);
    Mat slope(model.augmented_dim(), model.num_params());
    slope.topRows(model.num_moments()) = jac_hyp;
    slope.bottomRows(model.num_moments() * model.num_params()) = s.curv_bar;

    // Sigma_gamma: uncentered second moment of the stack at theta(gamma),
    // recentered by gamma gamma'.
    Vec gamma(model.augmented_dim());
    gamma.head(model.num_moments()) = centers.g_center;
    gamma.tail(model.num_moments() * model.num_params()) = centers.jac_center;
    Mat second = Mat::Zero(model.augmented_dim(), model.augmented_dim());
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const Vec psi = augmented(model, data.row(i), fit.theta);
        second.noalias() += psi * psi.transpose();
    }
    second /= static_cast<double>(data.size());
    const Mat sigma_gamma = symmetrize(second - gamma * gamma.transpose());

    const Mat lam = slope.transpose() * delta.inverse;  // slope' Sigma^-1
    const Mat bread_inv = guarded_inverse_sym(lam * slope).inverse;
    fit.variance = symmetrize(bread_inv * lam * sigma_gamma * lam.transpose() *
                              bread_inv.transpose());
    return fit;
}

std::vector<Recentering> make_gamma_grid(const GammaSpace& space,
                                         Eigen::Index m, std::uint64_t seed) {
    if (space.gamma2_min <= 0.0 || space.gamma2_max < space.gamma2_min ||
        space.gamma1_max < 0.0)
        throw std::invalid_argument("make_gamma_grid: bad magnitude bounds");
    if (space.weight.rows() != m || space.weight.cols() != m)
        throw std::invalid_argument("make_gamma_grid: weight dimension");
    if (space.grid_resolution < 1)
        throw std::invalid_argument("make_gamma_grid: resolution < 1");

    Rng rng(seed);
    const int k_total = space.grid_resolution;
    std::vector<Recentering> grid;
    grid.reserve(static_cast<std::size_t>(k_total));
    for (int k = 0; k < k_total; ++k) {
        const double frac =
            k_total == 1 ? 0.0
                         : static_cast<double>(k) /
                               static_cast<double>(k_total - 1);
        // gamma2 = magnitude-swept random direction on the sphere
        Vec dir2(m);
        do {
            for (Eigen::Index j = 0; j < m; ++j) dir2[j] = rng.normal();
        } while (dir2.norm() < 1e-12);
        dir2.normalize();
        const double r2 =
            space.gamma2_min + (space.gamma2_max - space.gamma2_min) * frac;
        Vec gamma2 = r2 * dir2;

        // gamma1 in the null space of gamma2' W
        const Vec constraint = space.weight.transpose() * gamma2;
        Vec gamma1 = Vec::Zero(m);
        if (space.gamma1_max > 0.0 && m > 1) {
            Vec dir1(m);
            double nrm = 0.0;
            do {
                for (Eigen::Index j = 0; j < m; ++j) dir1[j] = rng.normal();
                dir1 -= constraint * (constraint.dot(dir1) /
                                      constraint.squaredNorm());
                nrm = dir1.norm();
            } while (nrm < 1e-12);
            const double r1 = space.gamma1_max * frac;
            gamma1 = (r1 / nrm) * dir1;
        }

        Recentering c;
        c.g_center = gamma1;
        c.jac_center = gamma2;
        c.source = Recentering::Source::GridPoint;
        grid.push_back(std::move(c));
    }
    return grid;
}

UnionCi union_ci(const MomentModel& model, const DataSet& data,
                 const GmmFit& pilot, const std::vector<Recentering>& grid,
                 double alpha, bool skip_moment_center,
                 const GmmOptions& opts) {
    if (model.num_params() != 1)
        throw std::invalid_argument(
            "union_ci: only scalar-parameter models are supported");
    if (grid.empty()) throw std::invalid_argument("union_ci: empty grid");
    if (alpha <= 0.0 || alpha >= 1.0)
        throw std::invalid_argument("union_ci: alpha must be in (0,1)");

    boost::math::normal norm01;
    const double z = boost::math::quantile(norm01, 1.0 - alpha / 2.0);
    const double n = static_cast<double>(data.size());

    UnionCi out;
    out.lo = std::numeric_limits<double>::infinity();
    out.hi = -std::numeric_limits<double>::infinity();
    int id = 0;
    for (const Recentering& point : grid) {
        Recentering used = point;
        if (skip_moment_center) used.g_center.setZero();
        const MeGammaFit fit = me_gamma(model, data, pilot, used, opts);
        const double se = std::sqrt(std::max(0.0, fit.variance(0, 0)) / n);
        SensitivityRow row;
        row.id = id++;
        row.gamma1_norm = used.g_center.norm();
        row.gamma2_norm = used.jac_center.norm();
        row.theta = fit.theta[0];
        row.se = se;
        row.ci_lo = fit.theta[0] - z * se;
        row.ci_hi = fit.theta[0] + z * se;
        out.lo = std::min(out.lo, row.ci_lo);
        out.hi = std::max(out.hi, row.ci_hi);
        out.rows.push_back(row);
    }
    return out;
}

std::string sensitivity_csv(const std::vector<SensitivityRow>& rows) {
    std::string out =
        "gamma_point_id,gamma1_norm,gamma2_norm,theta,se,ci_lo,ci_hi\n";
    char buf[256];
    for (const SensitivityRow& r : rows) {
        std::snprintf(buf, sizeof(buf),
                      "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.id,
                      r.gamma1_norm, r.gamma2_norm, r.theta, r.se, r.ci_lo,
                      r.ci_hi);
        out += buf;
    }
    return out;
}

}  // namespace megmm
