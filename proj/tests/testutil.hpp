// Shared helpers for building small datasets in tests.

#pragma once

#include "megmm/model.hpp"
#include "megmm/rng.hpp"

namespace testutil {

using megmm::DataSet;
using megmm::Mat;
using megmm::Rng;
using megmm::Vec;

// Random over-identified linear IV dataset: y = x'theta + direct'z + eps.
inline DataSet random_linear_iv(Eigen::Index n, Eigen::Index m,
                                Eigen::Index p, Rng& rng,
                                double misspec = 0.5) {
    Mat first_stage(m, p);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < p; ++j)
            first_stage(i, j) = 0.5 + 0.5 * rng.uniform01();
    Vec theta(p), direct(m);
    for (Eigen::Index j = 0; j < p; ++j) theta[j] = rng.normal();
    for (Eigen::Index i = 0; i < m; ++i)
        direct[i] = misspec * rng.normal();

    Mat rows(n, 1 + p + m);
    for (Eigen::Index i = 0; i < n; ++i) {
        Vec z(m);
        for (Eigen::Index k = 0; k < m; ++k) z[k] = rng.normal();
        const double common = rng.normal();
        Vec x = first_stage.transpose() * z;
        for (Eigen::Index j = 0; j < p; ++j)
            x[j] += 0.5 * common + 0.5 * rng.normal();
        const double y =
            x.dot(theta) + z.dot(direct) + common + 0.3 * rng.normal();
        rows(i, 0) = y;
        rows.row(i).segment(1, p) = x.transpose();
        rows.row(i).segment(1 + p, m) = z.transpose();
    }
    return DataSet(std::move(rows));
}

// Exact-fit dataset: y = 2 x, instruments correlated with x, no noise.
inline DataSet exact_fit_linear(Eigen::Index n, Eigen::Index m, Rng& rng,
                                double slope = 2.0) {
    Mat rows(n, 2 + m);
    for (Eigen::Index i = 0; i < n; ++i) {
        Vec z(m);
        for (Eigen::Index k = 0; k < m; ++k) z[k] = rng.normal();
        const double x = z.sum() + 0.2 * rng.normal();
        rows(i, 0) = slope * x;
        rows(i, 1) = x;
        rows.row(i).segment(2, m) = z.transpose();
    }
    return DataSet(std::move(rows));
}

// Small exponential IV dataset with exclusion violation.
inline DataSet random_exponential_iv(Eigen::Index n, Eigen::Index m,
                                     Rng& rng, double misspec = 0.3) {
    Mat rows(n, 2 + m);
    for (Eigen::Index i = 0; i < n; ++i) {
        Vec z(m);
        for (Eigen::Index k = 0; k < m; ++k) z[k] = rng.normal();
        const double common = rng.normal();
        const double x = 0.4 * z.sum() / std::sqrt(double(m)) +
                         0.4 * common + 0.3 * rng.normal();
        const double y = std::exp(0.5 * x) + misspec * z[m - 1] +
                         0.5 * common + 0.3 * rng.normal();
        rows(i, 0) = y;
        rows(i, 1) = x;
        rows.row(i).segment(2, m) = z.transpose();
    }
    return DataSet(std::move(rows));
}

// Random symmetric positive definite matrix.
inline Mat random_spd(Eigen::Index d, Rng& rng, double ridge = 0.5) {
    Mat a(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) a(i, j) = rng.normal();
    return a * a.transpose() / double(d) + ridge * Mat::Identity(d, d);
}

}  // namespace testutil
