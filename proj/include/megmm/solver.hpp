// Newton minimizer with Armijo backtracking for smooth GMM-style criteria,
// with a coarse multistart grid fallback.

#pragma once

#include <functional>
#include <optional>

#include "megmm/linalg.hpp"

namespace megmm {

struct NewtonOptions {
    double foc_tol = 1e-10;  // on the scaled gradient norm
    int max_iter = 200;
    double box_lo = -10.0;  // multistart box, per coordinate
    double box_hi = 10.0;
    int grid_points = 9;  // multistart grid points per coordinate
};

struct CriterionEval {
    double value;
    Vec gradient;
    Mat hessian;
    double scale;  // convergence is ||gradient|| <= foc_tol * (1 + scale)
};

using CriterionFn = std::function<CriterionEval(const Vec&)>;

struct NewtonResult {
    Vec theta;
    double value;
    bool converged;
    int iterations;
};

// Newton from `start`; on failure retries from the best multistart grid
// point. Throws NumericalError when nothing converges.
NewtonResult minimize_newton(const CriterionFn& fn, const Vec& start,
                             const NewtonOptions& opts);

}  // namespace megmm
