// Moment-model abstraction: per-observation moment vector, its Jacobian, and
// the Jacobian's derivative, plus the augmented stack [moments; vec_rows(J)].
//
// Models consume whole raw data rows and define their own layout, so the
// estimator modules stay model-agnostic. All evaluators are pure functions of
// (row, theta); models and datasets are immutable after construction and safe
// to share across threads.

#pragma once

#include <memory>
#include <stdexcept>

#include "megmm/linalg.hpp"

namespace megmm {

// Input problems (bad dimensions, malformed data) -> std::invalid_argument.
// Numerical failures (rank deficiency, nonconvergence) -> NumericalError.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class DataSet {
  public:
    DataSet() = default;
    explicit DataSet(Mat rows) : rows_(std::move(rows)) {
        if (rows_.rows() < 2)
            throw std::invalid_argument("DataSet: need at least 2 rows");
    }

    Eigen::Index size() const { return rows_.rows(); }
    Eigen::Index arity() const { return rows_.cols(); }
    auto row(Eigen::Index i) const { return rows_.row(i); }
    const Mat& rows() const { return rows_; }

    // Rows gathered by index (bootstrap resample / subsample).
    DataSet subset(const std::vector<Eigen::Index>& idx) const {
        Mat out(static_cast<Eigen::Index>(idx.size()), rows_.cols());
        for (Eigen::Index i = 0; i < out.rows(); ++i)
            out.row(i) = rows_.row(idx[static_cast<std::size_t>(i)]);
        return DataSet(std::move(out));
    }

  private:
    Mat rows_;
};

using Row = Eigen::RowVectorXd;

class MomentModel {
  public:
    virtual ~MomentModel() = default;

    Eigen::Index num_moments() const { return m_; }
    Eigen::Index num_params() const { return p_; }
    virtual bool is_linear() const = 0;

    // m x 1 moment vector at one observation.
    virtual Vec moments(const Row& row, const Vec& theta) const = 0;
    // m x p derivative of the moments with respect to theta'.
    virtual Mat jacobian(const Row& row, const Vec& theta) const = 0;
    // mp x p derivative of vec_rows(jacobian); exactly zero for linear models.
    virtual Mat curvature(const Row& row, const Vec& theta) const = 0;

    Eigen::Index augmented_dim() const { return m_ * (p_ + 1); }

  protected:
    MomentModel(Eigen::Index m, Eigen::Index p) : m_(m), p_(p) {
        if (p < 1 || m < p)
            throw std::invalid_argument(
                "MomentModel: need num_moments >= num_params >= 1");
    }

    void check_theta(const Vec& theta) const {
        if (theta.size() != p_)
            throw std::invalid_argument("theta length does not match model");
    }

  private:
    Eigen::Index m_;
    Eigen::Index p_;
};

// Linear IV: row layout [y, x_1..x_p, z_1..z_m].
// moments = z (y - x'theta), jacobian = -z x' (theta-free), curvature = 0.
class LinearIvModel : public MomentModel {
  public:
    LinearIvModel(Eigen::Index m, Eigen::Index p) : MomentModel(m, p) {}

    bool is_linear() const override { return true; }
    Vec moments(const Row& row, const Vec& theta) const override;
    Mat jacobian(const Row& row, const Vec& theta) const override;
    Mat curvature(const Row& row, const Vec& theta) const override;

    double outcome(const Row& row) const { return row[0]; }
    Vec regressors(const Row& row) const {
        return row.segment(1, num_params()).transpose();
    }
    Vec instruments(const Row& row) const {
        return row.segment(1 + num_params(), num_moments()).transpose();
    }

    Eigen::Index row_arity() const { return 1 + num_params() + num_moments(); }

    // n^-1 sum z_i z_i'
    Mat instrument_gram(const DataSet& data) const;

  private:
    void check_row(const Row& row) const {
        if (row.size() != row_arity())
            throw std::invalid_argument("LinearIvModel: bad row arity");
    }
};

// Nonlinear exponential IV: moments = z (y - exp(x'theta)); same row layout
// as the linear model.
class ExponentialIvModel : public MomentModel {
  public:
    ExponentialIvModel(Eigen::Index m, Eigen::Index p) : MomentModel(m, p) {}

    bool is_linear() const override { return false; }
    Vec moments(const Row& row, const Vec& theta) const override;
    Mat jacobian(const Row& row, const Vec& theta) const override;
    Mat curvature(const Row& row, const Vec& theta) const override;

  private:
    void check_row(const Row& row) const {
        if (row.size() != 1 + num_params() + num_moments())
            throw std::invalid_argument("ExponentialIvModel: bad row arity");
    }
};

// [moments; vec_rows(jacobian)], length m(p+1).
Vec augmented(const MomentModel& model, const Row& row, const Vec& theta);

struct SampleMoments {
    Vec g_bar;     // m
    Mat jac_bar;   // m x p
    Mat curv_bar;  // mp x p
    Vec psi_bar;   // m(p+1), consistent with the row-stacking convention
};

// Arithmetic means of the evaluators over all observations.
SampleMoments sample_means(const MomentModel& model, const DataSet& data,
                           const Vec& theta);

// [jac_bar; curv_bar]: the m(p+1) x p derivative of the augmented stack.
inline Mat augmented_jacobian(const SampleMoments& s) {
    Mat out(s.jac_bar.rows() + s.curv_bar.rows(), s.jac_bar.cols());
    out << s.jac_bar, s.curv_bar;
    return out;
}

}  // namespace megmm
