#include "megmm/covariance.hpp"

#include <stdexcept>

namespace megmm {

SigmaBlocks make_sigma_blocks(const Mat& sigma, Eigen::Index m,
                              const Vec& theta_at) {
    const Eigen::Index d = sigma.rows();
    const Eigen::Index mp = d - m;
    SigmaBlocks sb;
    sb.sigma = symmetrize(sigma);
    sb.s11 = sb.sigma.topLeftCorner(m, m);
    sb.s12 = sb.sigma.topRightCorner(m, mp);
    sb.s22 = sb.sigma.bottomRightCorner(mp, mp);
    sb.theta_at = theta_at;

    const auto inv22 = guarded_inverse_sym(sb.s22);
    const auto inv11 = guarded_inverse_sym(sb.s11);
    sb.s11_2 = symmetrize(sb.s11 - sb.s12 * inv22.inverse * sb.s12.transpose());
    sb.s22_1 =
        symmetrize(sb.s22 - sb.s12.transpose() * inv11.inverse * sb.s12);
    sb.pseudo = inv22.pseudo || inv11.pseudo;
    return sb;
}

SigmaBlocks sigma_hat(const MomentModel& model, const DataSet& data,
                      const Vec& theta) {
    if (data.size() < 2)
        throw std::invalid_argument(
            "sigma_hat: centered covariance needs n >= 2");
    const Eigen::Index d = model.augmented_dim();
    Mat second = Mat::Zero(d, d);
    Vec mean = Vec::Zero(d);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
        const Vec psi = augmented(model, data.row(i), theta);
        second.noalias() += psi * psi.transpose();
        mean += psi;
    }
    const double inv_n = 1.0 / static_cast<double>(data.size());
    second *= inv_n;
    mean *= inv_n;
    // centered: the uncentered estimator is inconsistent under
    // misspecification because the augmented mean is nonzero
    Mat sigma = second - mean * mean.transpose();
    return make_sigma_blocks(sigma, model.num_moments(), theta);
}

Mat gmm_combination(const Mat& jac_bar, const Vec& g_bar, const Mat& weight) {
    const Eigen::Index m = jac_bar.rows();
    const Eigen::Index p = jac_bar.cols();
    Mat combo(p, m * (p + 1));
    combo.leftCols(m) = jac_bar.transpose() * weight;
    const Vec gw = weight.transpose() * g_bar;  // (g'W)' as a column
    // g'W (x) I_p under the row-stacking convention: column block j of the
    // Jacobian part is gw[j] * I_p
    Mat right = Mat::Zero(p, m * p);
    for (Eigen::Index j = 0; j < m; ++j)
        right.block(0, j * p, p, p) = gw[j] * Mat::Identity(p, p);
    combo.rightCols(m * p) = right;
    return combo;
}

Mat var_conventional(const Mat& jac_bar, const Mat& weight, const Mat& s11) {
    const Mat gwg = jac_bar.transpose() * weight * jac_bar;
    const auto bread = guarded_inverse_sym(gwg);
    if (bread.pseudo)
        throw NumericalError("var_conventional: singular bread matrix");
    const Mat meat =
        jac_bar.transpose() * weight * s11 * weight.transpose() * jac_bar;
    return symmetrize(bread.inverse * meat * bread.inverse.transpose());
}

Mat var_m_of_lambda(const Mat& combo, const Mat& slope, const Mat& sigma) {
    const Mat h = combo * slope;
    const auto hinv = guarded_inverse(h);
    if (hinv.pseudo)
        throw NumericalError("var_m_of_lambda: singular combination matrix");
    const Mat meat = combo * sigma * combo.transpose();
    return symmetrize(hinv.inverse * meat * hinv.inverse.transpose());
}

Mat var_me_bound(const Mat& slope, const SigmaBlocks& sb, bool linear) {
    Mat info;
    if (linear) {
        const Eigen::Index m = sb.num_moments();
        const Mat jac = slope.topRows(m);
        const auto w = guarded_inverse_sym(sb.s11_2);
        info = jac.transpose() * w.inverse * jac;
    } else {
        const auto siginv = guarded_inverse_sym(sb.sigma);
        info = slope.transpose() * siginv.inverse * slope;
    }
    const auto out = guarded_inverse_sym(info);
    if (out.pseudo && column_rank(slope) < slope.cols())
        throw NumericalError("var_me_bound: rank-deficient augmented slope");
    // degenerate information with a full-rank slope means (near) zero-variance
    // moments; the generalized inverse is the honest bound
    return out.inverse;
}

Mat var_me_bound_decomposed(const Mat& jac_bar, const Mat& curv_bar,
                            const SigmaBlocks& sb) {
    const auto inv11 = guarded_inverse_sym(sb.s11);
    const auto inv22_1 = guarded_inverse_sym(sb.s22_1);
    const Mat fg = curv_bar - sb.s12.transpose() * inv11.inverse * jac_bar;
    const Mat info = jac_bar.transpose() * inv11.inverse * jac_bar +
                     fg.transpose() * inv22_1.inverse * fg;
    const auto out = guarded_inverse_sym(info);
    if (out.pseudo)
        throw NumericalError("var_me_bound_decomposed: singular information");
    return out.inverse;
}

UniformBound uniform_me_bound(const std::vector<Mat>& bounds) {
    if (bounds.empty())
        throw std::invalid_argument("uniform_me_bound: empty candidate set");
    const Eigen::Index p = bounds.front().rows();
    UniformBound out;
    out.sup_variance = Vec::Constant(p, -1.0);
    out.argmax_idx.assign(static_cast<std::size_t>(p), 0);
    for (std::size_t c = 0; c < bounds.size(); ++c) {
        for (Eigen::Index k = 0; k < p; ++k) {
            if (bounds[c](k, k) > out.sup_variance[k]) {
                out.sup_variance[k] = bounds[c](k, k);
                out.argmax_idx[static_cast<std::size_t>(k)] =
                    static_cast<int>(c);
            }
        }
    }
    return out;
}

Vec standard_errors(const Mat& asymptotic_variance, Eigen::Index n) {
    return (asymptotic_variance.diagonal() / static_cast<double>(n))
        .cwiseMax(0.0)
        .cwiseSqrt();
}

}  // namespace megmm
