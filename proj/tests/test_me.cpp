#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "megmm/me.hpp"
#include "megmm/montecarlo.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace megmm;

namespace {

Vec scalar(double v) {
    Vec out(1);
    out << v;
    return out;
}

}  // namespace

TEST_CASE("lambda_star") {
    SUBCASE("identity covariance gives the transposed slope") {
        Mat slope(4, 1);
        slope << 1.0, 2.0, -0.3, 0.5;
        const Mat lam = lambda_star(slope, Mat::Identity(4, 4));
        CHECK((lam - slope.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
    }

    SUBCASE("matches the block assembly on linear problems") {
        Rng rng(103);
        const Mat sigma = testutil::random_spd(6, rng);
        const SigmaBlocks sb = make_sigma_blocks(sigma, 2, scalar(0.0));
        Mat jac(2, 2);
        jac << 1.0, 0.3, -0.7, 2.0;
        Mat slope(6, 2);
        slope << jac, Mat::Zero(4, 2);
        const Mat full = lambda_star(slope, sigma);
        const LambdaBlocks lb = lambda_star_linear(jac, sb);
        Mat assembled(2, 6);
        assembled << lb.moment_block, lb.jacobian_block;
        CHECK((full - assembled).cwiseAbs().maxCoeff() /
                  std::max(1.0, full.cwiseAbs().maxCoeff()) <=
              1e-9);
    }

    SUBCASE("lambda times slope is symmetric positive definite") {
        Rng rng(107);
        for (int rep = 0; rep < 10; ++rep) {
            const Mat sigma = testutil::random_spd(6, rng);
            Mat slope(6, 2);
            for (Eigen::Index i = 0; i < 6; ++i)
                for (Eigen::Index j = 0; j < 2; ++j)
                    slope(i, j) = rng.normal();
            const Mat prod = lambda_star(slope, sigma) * slope;
            CHECK(is_symmetric(prod, 1e-9));
            CHECK(min_eigenvalue(prod) > 0.0);
        }
    }
}

TEST_CASE("lambda_star_linear") {
    Rng rng(109);

    SUBCASE("uncorrelated blocks kill the jacobian part") {
        Mat sigma = Mat::Zero(4, 4);
        sigma.topLeftCorner(2, 2) = testutil::random_spd(2, rng);
        sigma.bottomRightCorner(2, 2) = testutil::random_spd(2, rng);
        const SigmaBlocks sb = make_sigma_blocks(sigma, 2, scalar(0.0));
        Mat jac(2, 1);
        jac << 1.0, 2.0;
        const LambdaBlocks lb = lambda_star_linear(jac, sb);
        CHECK(lb.jacobian_block.cwiseAbs().maxCoeff() <= 1e-12);
        const Mat expected =
            jac.transpose() * guarded_inverse_sym(sb.s11).inverse;
        CHECK((lb.moment_block - expected).cwiseAbs().maxCoeff() <= 1e-10);
    }

    SUBCASE("identity blocks") {
        const SigmaBlocks sb =
            make_sigma_blocks(Mat::Identity(4, 4), 2, scalar(0.0));
        Mat jac(2, 1);
        jac << 1.0, 2.0;
        const LambdaBlocks lb = lambda_star_linear(jac, sb);
        CHECK(lb.moment_block(0, 0) == doctest::Approx(1.0));
        CHECK(lb.moment_block(0, 1) == doctest::Approx(2.0));
        CHECK(lb.jacobian_block.cwiseAbs().maxCoeff() == 0.0);
    }

    SUBCASE("partitioned-inverse identity") {
        for (int rep = 0; rep < 10; ++rep) {
            const Mat sigma = testutil::random_spd(5, rng);
            const SigmaBlocks sb = make_sigma_blocks(sigma, 2, scalar(0.0));
            const Mat lhs = guarded_inverse_sym(sb.s11_2).inverse * sb.s12 *
                            guarded_inverse_sym(sb.s22).inverse;
            const Mat rhs = guarded_inverse_sym(sb.s11).inverse * sb.s12 *
                            guarded_inverse_sym(sb.s22_1).inverse;
            CHECK((lhs - rhs).cwiseAbs().maxCoeff() /
                      std::max(1.0, lhs.cwiseAbs().maxCoeff()) <=
                  1e-9);
        }
    }
}

TEST_CASE("oracle_me degeneracy and exact fits") {
    Rng rng(113);
    LinearIvModel model(2, 1);

    SUBCASE("plug-in recentering reproduces the GMM estimate exactly") {
        for (int rep = 0; rep < 20; ++rep) {
            const DataSet data = testutil::random_linear_iv(80, 2, 1, rng);
            const Mat w = testutil::random_spd(2, rng);
            const GmmFit fit = solve_gmm(model, data, w);
            const Recentering plug =
                recentering_from_sample(model, data, fit.theta);
            const MeFit me = oracle_me(model, data, w, plug);
            CHECK(std::abs(me.theta[0] - fit.theta[0]) <= 1e-10);
        }
    }

    SUBCASE("zero moment center on exact-fit data returns the exact theta") {
        const DataSet data = testutil::exact_fit_linear(60, 2, rng);
        Recentering centers =
            recentering_from_sample(model, data, scalar(2.0));
        centers.g_center.setZero();
        const MeFit me =
            oracle_me(model, data, Mat::Identity(2, 2), centers);
        CHECK(me.theta[0] == doctest::Approx(2.0).epsilon(1e-10));
    }
}

TEST_CASE("me_gmm") {
    Rng rng(127);
    LinearIvModel model(2, 1);
    const DataSet data = testutil::random_linear_iv(250, 2, 1, rng);
    const GmmFit fit = solve_gmm(model, data, Mat::Identity(2, 2));
    const Recentering centers = recentering_from_sample(
        model, data, scalar(fit.theta[0] + 0.4));  // off-sample recentering

    SUBCASE("moment-only block weight reproduces the recentered IV form") {
        const auto* iv = dynamic_cast<const LinearIvModel*>(&model);
        const Mat gram_inv =
            guarded_inverse_sym(iv->instrument_gram(data)).inverse;
        Mat delta = Mat::Zero(4, 4);
        delta.topLeftCorner(2, 2) = gram_inv;
        const Vec theta = me_gmm(model, data, delta, centers);

        // direct evaluation of the recentered two-stage closed form
        const SampleMoments s0 = sample_means(model, data, scalar(0.0));
        const Mat sxz = -s0.jac_bar.transpose();
        const Mat bread = sxz * gram_inv * s0.jac_bar;
        const Vec rhs = sxz * gram_inv * (s0.g_bar - centers.g_center);
        const Vec direct = -guarded_inverse(bread).inverse * rhs;
        CHECK(theta[0] == doctest::Approx(direct[0]).epsilon(1e-12));
    }

    SUBCASE("efficient weighting agrees with the oracle estimator") {
        const Mat delta = guarded_inverse_sym(fit.sigma.sigma).inverse;
        const Vec via_gmm = me_gmm(model, data, delta, centers);
        const MeFit via_oracle =
            oracle_me(model, data, Mat::Identity(2, 2), centers);
        CHECK(via_gmm[0] ==
              doctest::Approx(via_oracle.theta[0]).epsilon(1e-9));
    }

    SUBCASE("sample-mean recentering degenerates to plain GMM") {
        const Recentering plug =
            recentering_from_sample(model, data, fit.theta);
        const Mat delta = guarded_inverse_sym(fit.sigma.sigma).inverse;
        const Vec theta = me_gmm(model, data, delta, plug);
        CHECK(std::abs(theta[0] - fit.theta[0]) <= 1e-10);
    }

    SUBCASE("input validation") {
        CHECK_THROWS_AS(
            me_gmm(model, data, Mat::Identity(3, 3), centers),
            std::invalid_argument);
        Mat skew = Mat::Identity(4, 4);
        skew(0, 1) = 0.5;
        CHECK_THROWS_AS(me_gmm(model, data, skew, centers),
                        std::invalid_argument);
    }
}

TEST_CASE("nonlinear recentered estimation") {
    Rng rng(131);
    ExponentialIvModel model(2, 1);
    const DataSet data = testutil::random_exponential_iv(400, 2, rng);
    const GmmFit fit = solve_gmm(model, data, Mat::Identity(2, 2));

    SUBCASE("plug-in degeneracy holds to solver tolerance") {
        const Recentering plug =
            recentering_from_sample(model, data, fit.theta);
        const MeFit me = oracle_me(model, data, Mat::Identity(2, 2), plug);
        CHECK(me.theta[0] == doctest::Approx(fit.theta[0]).epsilon(1e-8));
    }
}

TEST_CASE("me_gamma") {
    Rng rng(137);
    LinearIvModel model(2, 1);

    SUBCASE("true recentering recovers the pseudo-true value and bound") {
        const LinearIvDesign design = analytic_design();
        Rng gen(991);
        const DataSet data = gen_linear_iv(design, 40000, gen);
        const GmmFit pilot = solve_gmm(model, data, Mat::Identity(2, 2));
        const AnalyticExample ex = analytic_example(0.0);
        const Recentering truth =
            population_recentering(design, ex.theta_w);
        const MeGammaFit fit = me_gamma(model, data, pilot, truth);
        CHECK(std::abs(fit.theta[0] - ex.theta_w) <=
              4.0 * std::sqrt(ex.v_me / 40000.0));
        CHECK(fit.variance(0, 0) ==
              doctest::Approx(pilot.var_me_bound(0, 0)).epsilon(0.05));
        CHECK(fit.variance(0, 0) == doctest::Approx(ex.v_me).epsilon(0.10));
    }

    SUBCASE("zero recentering on correctly specified data") {
        LinearIvDesign design;  // delta = 0
        design.pi = 0.8;
        Rng gen(993);
        const DataSet data = gen_linear_iv(design, 20000, gen);
        const GmmFit pilot = solve_gmm(model, data, Mat::Identity(2, 2));
        Recentering centers = population_recentering(design, design.theta);
        CHECK(centers.g_center.norm() <= 1e-12);  // correctly specified
        const MeGammaFit fit = me_gamma(model, data, pilot, centers);
        CHECK(std::abs(fit.theta[0] - design.theta) <= 0.05);
    }

    SUBCASE("variance is inverse-quadratic in the jacobian magnitude") {
        const DataSet data = testutil::random_linear_iv(300, 2, 1, rng);
        const GmmFit pilot = solve_gmm(model, data, Mat::Identity(2, 2));
        Recentering centers =
            recentering_from_sample(model, data, pilot.theta);
        const MeGammaFit base = me_gamma(model, data, pilot, centers);
        for (const double c : {0.5, 2.0, 5.0}) {
            Recentering scaled = centers;
            scaled.jac_center *= c;
            const MeGammaFit out = me_gamma(model, data, pilot, scaled);
            CHECK(out.variance(0, 0) ==
                  doctest::Approx(base.variance(0, 0) / (c * c))
                      .epsilon(1e-9));
        }
    }
}

TEST_CASE("gamma grid construction") {
    Rng rng(139);
    GammaSpace space;
    space.gamma1_max = 0.5;
    space.gamma2_min = 0.5;
    space.gamma2_max = 2.0;
    space.weight = testutil::random_spd(2, rng);
    space.grid_resolution = 64;

    const auto grid = make_gamma_grid(space, 2, 4242);
    REQUIRE(grid.size() == 64);
    for (const auto& point : grid) {
        const double r2 = point.jac_center.norm();
        CHECK(r2 >= space.gamma2_min - 1e-12);
        CHECK(r2 <= space.gamma2_max + 1e-12);
        CHECK(point.g_center.norm() <= space.gamma1_max + 1e-12);
        // population first-order condition at the grid point
        const double foc = std::abs(point.jac_center.transpose() *
                                    space.weight * point.g_center);
        CHECK(foc <= 1e-10);
    }
    // deterministic
    const auto again = make_gamma_grid(space, 2, 4242);
    CHECK(again[10].g_center.isApprox(grid[10].g_center));

    CHECK_THROWS_AS(
        [&] {
            GammaSpace bad = space;
            bad.gamma2_min = 0.0;
            return make_gamma_grid(bad, 2, 1);
        }(),
        std::invalid_argument);
}

TEST_CASE("union confidence interval") {
    Rng rng(149);
    LinearIvModel model(2, 1);
    const DataSet data = testutil::random_linear_iv(400, 2, 1, rng);
    const ResolvedWeight rw =
        build_weight(WeightSpec::residual_var_inv(), model, data);
    const GmmFit pilot = solve_gmm(model, data, rw.weight);

    SUBCASE("singleton grid is the ordinary Wald interval") {
        const Recentering plug =
            recentering_from_sample(model, data, pilot.theta);
        const UnionCi ci = union_ci(model, data, pilot, {plug}, 0.05);
        REQUIRE(ci.rows.size() == 1);
        CHECK(ci.lo == ci.rows[0].ci_lo);
        CHECK(ci.hi == ci.rows[0].ci_hi);
        const MeGammaFit fit = me_gamma(model, data, pilot, plug);
        const double se = std::sqrt(fit.variance(0, 0) /
                                    static_cast<double>(data.size()));
        CHECK(ci.lo == doctest::Approx(fit.theta[0] - 1.959963985 * se)
                           .epsilon(1e-6));
    }

    SUBCASE("zero misspecification grid centers at the plug-in estimate") {
        Recentering point =
            recentering_from_sample(model, data, pilot.theta);
        point.g_center.setZero();
        const UnionCi ci = union_ci(model, data, pilot, {point}, 0.05);
        CHECK(ci.rows[0].theta ==
              doctest::Approx(pilot.theta[0]).epsilon(1e-7));
    }

    SUBCASE("first-order condition annihilates the moment recentering") {
        // with the residualized-variance weight, the optimal moment
        // combination applied to the fitted moments vanishes
        const Mat inv11_2 =
            guarded_inverse_sym(pilot.sigma.s11_2).inverse;
        const double foc = (pilot.jac_bar.transpose() * inv11_2 *
                            pilot.g_bar)
                               .cwiseAbs()
                               .maxCoeff();
        CHECK(foc <= 1e-8 * (1.0 + pilot.g_bar.norm()));
    }

    SUBCASE("union over a nested grid never shrinks") {
        GammaSpace space;
        space.gamma1_max = 0.3;
        space.gamma2_min = 0.8;
        space.gamma2_max = 1.6;
        space.weight = pilot.weight;
        space.grid_resolution = 16;
        auto small = make_gamma_grid(space, 2, 777);
        auto large = small;
        GammaSpace wide = space;
        wide.gamma1_max = 0.9;
        for (auto& extra : make_gamma_grid(wide, 2, 778))
            large.push_back(extra);
        const UnionCi ci_small =
            union_ci(model, data, pilot, small, 0.05, true);
        const UnionCi ci_large =
            union_ci(model, data, pilot, large, 0.05, true);
        CHECK(ci_large.lo <= ci_small.lo + 1e-12);
        CHECK(ci_large.hi >= ci_small.hi - 1e-12);
    }

    SUBCASE("union contains the gamma-true interval when gridded") {
        Recentering truth =
            recentering_from_sample(model, data, pilot.theta);
        GammaSpace space;
        space.gamma1_max = 0.2;
        space.gamma2_min = truth.jac_center.norm() * 0.8;
        space.gamma2_max = truth.jac_center.norm() * 1.2;
        space.weight = pilot.weight;
        space.grid_resolution = 8;
        auto grid = make_gamma_grid(space, 2, 55);
        grid.push_back(truth);
        const UnionCi ci = union_ci(model, data, pilot, grid, 0.05);
        const SensitivityRow& last = ci.rows.back();
        CHECK(ci.lo <= last.ci_lo);
        CHECK(ci.hi >= last.ci_hi);
    }

    SUBCASE("errors") {
        CHECK_THROWS_AS(union_ci(model, data, pilot, {}, 0.05),
                        std::invalid_argument);
        LinearIvModel wide(3, 2);
        const DataSet wdata = testutil::random_linear_iv(100, 3, 2, rng);
        const GmmFit wfit = solve_gmm(wide, wdata, Mat::Identity(3, 3));
        const Recentering plug =
            recentering_from_sample(wide, wdata, wfit.theta);
        CHECK_THROWS_AS(union_ci(wide, wdata, wfit, {plug}, 0.05),
                        std::invalid_argument);
    }
}

TEST_CASE("sensitivity table export") {
    std::vector<SensitivityRow> rows = {
        {0, 0.1, 1.0, 0.5, 0.05, 0.4, 0.6}};
    const std::string csv = sensitivity_csv(rows);
    CHECK(csv.find("gamma_point_id,") == 0);
    CHECK(csv.find("0,0.1") != std::string::npos);
}
