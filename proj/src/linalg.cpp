#include "megmm/linalg.hpp"

#include <stdexcept>

namespace megmm {

InverseResult guarded_inverse_sym(const Mat& a, double cap) {
    if (a.rows() != a.cols())
        throw std::invalid_argument("guarded_inverse_sym: matrix not square");
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a));
    if (es.info() != Eigen::Success)
        throw std::runtime_error("guarded_inverse_sym: eigensolver failed");
    const Vec& ev = es.eigenvalues();
    const double emax = ev.cwiseAbs().maxCoeff();
    if (emax <= 0.0)
        return {Mat::Zero(a.rows(), a.cols()), true};
    const double floor = emax / cap;

    Vec inv_ev(ev.size());
    bool pseudo = false;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        if (ev[i] <= floor) {
            inv_ev[i] = 0.0;
            pseudo = true;
        } else {
            inv_ev[i] = 1.0 / ev[i];
        }
    }
    Mat inv = es.eigenvectors() * inv_ev.asDiagonal() *
              es.eigenvectors().transpose();
    return {symmetrize(inv), pseudo};
}

InverseResult guarded_inverse(const Mat& a, double cap) {
    if (a.rows() != a.cols())
        throw std::invalid_argument("guarded_inverse: matrix not square");
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vec& sv = svd.singularValues();
    const double smax = sv.size() > 0 ? sv[0] : 0.0;
    if (smax <= 0.0)
        return {Mat::Zero(a.cols(), a.rows()), true};
    const double floor = smax / cap;

    Vec inv_sv(sv.size());
    bool pseudo = false;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv[i] <= floor) {
            inv_sv[i] = 0.0;
            pseudo = true;
        } else {
            inv_sv[i] = 1.0 / sv[i];
        }
    }
    Mat inv = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
    return {inv, pseudo};
}

InverseResult weight_inverse_sym(const Mat& a, double cap) {
    if (a.cwiseAbs().maxCoeff() <= 0.0)
        return {Mat::Identity(a.rows(), a.cols()), true};
    return guarded_inverse_sym(a, cap);
}

Eigen::Index column_rank(const Mat& a, double tol) {
    Eigen::JacobiSVD<Mat> svd(a);
    const Vec& sv = svd.singularValues();
    if (sv.size() == 0 || sv[0] <= 0.0) return 0;
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv[i] > tol * sv[0]) ++rank;
    return rank;
}

bool is_symmetric(const Mat& a, double tol) {
    if (a.rows() != a.cols()) return false;
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

bool is_spd(const Mat& a, double floor_ratio) {
    if (!is_symmetric(a)) return false;
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a),
                                          Eigen::EigenvaluesOnly);
    const Vec& ev = es.eigenvalues();
    const double emax = ev.maxCoeff();
    return emax > 0.0 && ev.minCoeff() > emax * floor_ratio;
}

double min_eigenvalue(const Mat& a) {
    Eigen::SelfAdjointEigenSolver<Mat> es(symmetrize(a),
                                          Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

Vec vec_rows(const Mat& a) {
    Vec out(a.size());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out[k++] = a(i, j);
    return out;
}

Mat unvec_rows(const Vec& v, Eigen::Index rows, Eigen::Index cols) {
    if (v.size() != rows * cols)
        throw std::invalid_argument("unvec_rows: size mismatch");
    Mat out(rows, cols);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) out(i, j) = v[k++];
    return out;
}

}  // namespace megmm
