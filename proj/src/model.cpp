#include "megmm/model.hpp"

namespace megmm {

Vec LinearIvModel::moments(const Row& row, const Vec& theta) const {
    check_theta(theta);
    check_row(row);
    const double resid = outcome(row) - regressors(row).dot(theta);
    return instruments(row) * resid;
}

Mat LinearIvModel::jacobian(const Row& row, const Vec& theta) const {
    check_theta(theta);
    check_row(row);
    return -instruments(row) * regressors(row).transpose();
}

Mat LinearIvModel::curvature(const Row& row, const Vec& theta) const {
    check_theta(theta);
    check_row(row);
    return Mat::Zero(num_moments() * num_params(), num_params());
}

Mat LinearIvModel::instrument_gram(const DataSet& data) const {
    Mat gram = Mat::Zero(num_moments(), num_moments());
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const Vec z = instruments(data.row(i));
        gram.noalias() += z * z.transpose();
    }
    return gram / static_cast<double>(data.size());
}

Vec ExponentialIvModel::moments(const Row& row, const Vec& theta) const {
    check_theta(theta);
    check_row(row);
    const Vec x = row.segment(1, num_params()).transpose();
    const Vec z = row.segment(1 + num_params(), num_moments()).transpose();
    return z * (row[0] - std::exp(x.dot(theta)));
}

Mat ExponentialIvModel::jacobian(const Row& row, const Vec& theta) const {
    check_theta(theta);
    check_row(row);
    const Vec x = row.segment(1, num_params()).transpose();
    const Vec z = row.segment(1 + num_params(), num_moments()).transpose();
    return -std::exp(x.dot(theta)) * z * x.transpose();
}

Mat ExponentialIvModel::curvature(const Row& row, const Vec& theta) const {
    check_theta(theta);
    check_row(row);
    const Eigen::Index m = num_moments();
    const Eigen::Index p = num_params();
    const Vec x = row.segment(1, p).transpose();
    const Vec z = row.segment(1 + p, m).transpose();
    const double e = std::exp(x.dot(theta));
    // d/dtheta_l of vec_rows(-e z x'): entry ((j,k), l) = -z_j x_k x_l e
    Mat out(m * p, p);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index k = 0; k < p; ++k)
            for (Eigen::Index l = 0; l < p; ++l)
                out(j * p + k, l) = -z[j] * x[k] * x[l] * e;
    return out;
}

Vec augmented(const MomentModel& model, const Row& row, const Vec& theta) {
    Vec out(model.augmented_dim());
    out.head(model.num_moments()) = model.moments(row, theta);
    out.tail(model.num_moments() * model.num_params()) =
        vec_rows(model.jacobian(row, theta));
    return out;
}

SampleMoments sample_means(const MomentModel& model, const DataSet& data,
                           const Vec& theta) {
    if (data.size() < 1) throw std::invalid_argument("sample_means: no rows");
    const Eigen::Index m = model.num_moments();
    const Eigen::Index p = model.num_params();

    SampleMoments s;
    s.g_bar = Vec::Zero(m);
    s.jac_bar = Mat::Zero(m, p);
    s.curv_bar = Mat::Zero(m * p, p);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const Row row = data.row(i);
        s.g_bar += model.moments(row, theta);
        s.jac_bar += model.jacobian(row, theta);
        s.curv_bar += model.curvature(row, theta);
    }
    const double n = static_cast<double>(data.size());
    s.g_bar /= n;
    s.jac_bar /= n;
    s.curv_bar /= n;

    s.psi_bar = Vec(model.augmented_dim());
    s.psi_bar.head(m) = s.g_bar;
    s.psi_bar.tail(m * p) = vec_rows(s.jac_bar);
    return s;
}

}  // namespace megmm
