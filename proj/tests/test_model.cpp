#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "megmm/model.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace megmm;

namespace {

Row make_row(std::initializer_list<double> vals) {
    Row r(static_cast<Eigen::Index>(vals.size()));
    Eigen::Index i = 0;
    for (double v : vals) r[i++] = v;
    return r;
}

Vec scalar(double v) {
    Vec out(1);
    out << v;
    return out;
}

}  // namespace

TEST_CASE("linear IV moments") {
    LinearIvModel model(2, 1);
    // z=(1,2), y=1, x=0, theta=0 -> residual equals y
    Vec g = model.moments(make_row({1.0, 0.0, 1.0, 2.0}), scalar(0.0));
    CHECK(g[0] == doctest::Approx(1.0));
    CHECK(g[1] == doctest::Approx(2.0));
    // zero residual
    g = model.moments(make_row({3.0, 1.0, 1.0, 2.0}), scalar(3.0));
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 0.0);
}

TEST_CASE("exponential IV moments at zero exponent") {
    ExponentialIvModel model(1, 1);
    const Vec g = model.moments(make_row({1.0, 0.0, 1.0}), scalar(5.0));
    CHECK(g[0] == doctest::Approx(0.0));  // 1 - exp(0)
}

TEST_CASE("linear IV jacobian is -z x'") {
    LinearIvModel model(2, 1);
    const Mat jac = model.jacobian(make_row({0.0, 3.0, 1.0, 2.0}),
                                   scalar(0.7));
    CHECK(jac(0, 0) == doctest::Approx(-3.0));
    CHECK(jac(1, 0) == doctest::Approx(-6.0));
}

TEST_CASE("exponential IV jacobian") {
    ExponentialIvModel model(1, 1);
    const Mat jac = model.jacobian(make_row({0.0, 2.0, 1.0}), scalar(0.0));
    CHECK(jac(0, 0) == doctest::Approx(-2.0));  // -z x exp(0)
}

TEST_CASE("jacobian matches finite differences on both models") {
    Rng rng(7);
    LinearIvModel linear(3, 2);
    ExponentialIvModel expo(3, 2);
    for (int rep = 0; rep < 100; ++rep) {
        Row row(6);
        for (Eigen::Index j = 0; j < 6; ++j) row[j] = rng.normal();
        Vec theta(2);
        theta << rng.normal(), rng.normal();
        for (const MomentModel* model :
             {static_cast<const MomentModel*>(&linear),
              static_cast<const MomentModel*>(&expo)}) {
            const Mat analytic = model->jacobian(row, theta);
            const Mat numeric = oracle::fd_jacobian(*model, row, theta);
            const double scale = std::max(1.0, analytic.cwiseAbs().maxCoeff());
            CHECK((analytic - numeric).cwiseAbs().maxCoeff() / scale <= 1e-6);
        }
    }
}

TEST_CASE("curvature: zero for linear, analytic for exponential") {
    LinearIvModel linear(2, 1);
    const Mat curv =
        linear.curvature(make_row({1.0, 2.0, 0.5, -0.5}), scalar(0.3));
    CHECK(curv.cwiseAbs().maxCoeff() == 0.0);

    ExponentialIvModel expo(1, 1);
    const Mat f = expo.curvature(make_row({0.0, 1.0, 1.0}), scalar(0.0));
    CHECK(f(0, 0) == doctest::Approx(-1.0));  // d/dtheta of -x exp(x theta)
}

TEST_CASE("curvature matches finite differences of the jacobian") {
    Rng rng(11);
    ExponentialIvModel expo(2, 2);
    for (int rep = 0; rep < 100; ++rep) {
        Row row(5);
        for (Eigen::Index j = 0; j < 5; ++j) row[j] = 0.7 * rng.normal();
        Vec theta(2);
        theta << 0.5 * rng.normal(), 0.5 * rng.normal();
        const Mat analytic = expo.curvature(row, theta);
        const Mat numeric = oracle::fd_curvature(expo, row, theta);
        const double scale = std::max(1.0, analytic.cwiseAbs().maxCoeff());
        CHECK((analytic - numeric).cwiseAbs().maxCoeff() / scale <= 1e-5);
    }
}

TEST_CASE("augmented stack ordering and length") {
    LinearIvModel model(2, 1);
    const Vec psi =
        augmented(model, make_row({1.0, 3.0, 1.0, 2.0}), scalar(0.0));
    REQUIRE(psi.size() == 4);  // m (p+1)
    CHECK(psi[0] == doctest::Approx(1.0));
    CHECK(psi[1] == doctest::Approx(2.0));
    CHECK(psi[2] == doctest::Approx(-3.0));
    CHECK(psi[3] == doctest::Approx(-6.0));
}

TEST_CASE("augmented stack with two parameters row-stacks the jacobian") {
    LinearIvModel model(2, 2);
    // x = (1, 0)', z = (1, 1)': jacobian = -z x' has rows (-1, 0), (-1, 0)
    Vec theta(2);
    theta << 0.0, 0.0;
    const Vec psi =
        augmented(model, make_row({0.0, 1.0, 0.0, 1.0, 1.0}), theta);
    REQUIRE(psi.size() == 6);
    CHECK(psi[2] == doctest::Approx(-1.0));
    CHECK(psi[3] == doctest::Approx(0.0));
    CHECK(psi[4] == doctest::Approx(-1.0));
    CHECK(psi[5] == doctest::Approx(0.0));
}

TEST_CASE("stacking consistency: vec component k maps to row-major entry") {
    Rng rng(3);
    LinearIvModel model(3, 2);
    Row row(6);
    for (Eigen::Index j = 0; j < 6; ++j) row[j] = rng.normal();
    Vec theta(2);
    theta << 0.4, -0.2;
    const Mat jac = model.jacobian(row, theta);
    const Vec v = vec_rows(jac);
    for (Eigen::Index k = 0; k < v.size(); ++k)
        CHECK(v[k] == jac(k / jac.cols(), k % jac.cols()));
}

TEST_CASE("linearity contract: jacobian independent of theta, bit for bit") {
    Rng rng(5);
    LinearIvModel model(2, 1);
    Row row(4);
    for (Eigen::Index j = 0; j < 4; ++j) row[j] = rng.normal();
    const Mat a = model.jacobian(row, scalar(-3.0));
    const Mat b = model.jacobian(row, scalar(11.0));
    CHECK(a(0, 0) == b(0, 0));
    CHECK(a(1, 0) == b(1, 0));
}

TEST_CASE("sample means") {
    LinearIvModel model(2, 1);

    SUBCASE("identical rows reduce to the single-row evaluation") {
        Mat rows(3, 4);
        for (int i = 0; i < 3; ++i) rows.row(i) << 1.0, 3.0, 1.0, 2.0;
        const DataSet data(rows);
        const SampleMoments s = sample_means(model, data, scalar(0.0));
        const Vec g = model.moments(data.row(0), scalar(0.0));
        CHECK(s.g_bar.isApprox(g));
        CHECK(s.psi_bar.head(2).isApprox(g));
    }

    SUBCASE("two-row average") {
        // rows engineered so the moment vectors are (1,0) and (0,1)
        Mat rows(2, 4);
        rows.row(0) << 1.0, 0.0, 1.0, 0.0;
        rows.row(1) << 1.0, 0.0, 0.0, 1.0;
        const SampleMoments s =
            sample_means(model, DataSet(rows), scalar(0.0));
        CHECK(s.g_bar[0] == doctest::Approx(0.5));
        CHECK(s.g_bar[1] == doctest::Approx(0.5));
    }

    SUBCASE("five-row dataset matches flat-loop accumulation") {
        Rng rng(17);
        const DataSet data = testutil::random_linear_iv(5, 2, 1, rng);
        const Vec theta = scalar(0.8);
        const SampleMoments s = sample_means(model, data, theta);
        Vec acc = Vec::Zero(2);
        Mat jac_acc = Mat::Zero(2, 1);
        for (Eigen::Index i = 0; i < 5; ++i) {
            acc += model.moments(data.row(i), theta);
            jac_acc += model.jacobian(data.row(i), theta);
        }
        CHECK((s.g_bar - acc / 5.0).cwiseAbs().maxCoeff() == 0.0);
        CHECK((s.jac_bar - jac_acc / 5.0).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("dimension errors") {
    LinearIvModel model(2, 1);
    Vec theta2(2);
    theta2 << 0.0, 0.0;
    CHECK_THROWS_AS(model.moments(make_row({1.0, 0.0, 1.0, 2.0}), theta2),
                    std::invalid_argument);
    CHECK_THROWS_AS(model.moments(make_row({1.0, 0.0, 1.0}), Vec::Zero(1)),
                    std::invalid_argument);
    CHECK_THROWS_AS(DataSet(Mat::Zero(1, 3)), std::invalid_argument);
    CHECK_THROWS_AS(LinearIvModel(1, 2), std::invalid_argument);
}
