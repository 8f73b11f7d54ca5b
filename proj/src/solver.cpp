#include "megmm/solver.hpp"

#include <cmath>
#include <vector>

#include "megmm/model.hpp"

namespace megmm {

namespace {

std::optional<NewtonResult> newton_from(const CriterionFn& fn, Vec theta,
                                        const NewtonOptions& opts) {
    CriterionEval ev = fn(theta);
    for (int it = 0; it < opts.max_iter; ++it) {
        if (ev.gradient.cwiseAbs().maxCoeff() <=
            opts.foc_tol * (1.0 + ev.scale))
            return NewtonResult{theta, ev.value, true, it};

        Mat hess = symmetrize(ev.hessian);
        // keep the step a descent direction: ridge until positive definite
        double ridge = 0.0;
        const double scale = std::max(1.0, hess.cwiseAbs().maxCoeff());
        while (min_eigenvalue(hess) <= 1e-12 * scale) {
            ridge = ridge == 0.0 ? 1e-8 * scale : ridge * 10.0;
            hess.diagonal().array() += ridge;
            if (ridge > 1e8 * scale) return std::nullopt;
        }
        const Vec step = -hess.ldlt().solve(ev.gradient);
        const double slope = ev.gradient.dot(step);
        if (!std::isfinite(slope) || slope >= 0.0) return std::nullopt;

        // Armijo backtracking
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls) {
            const Vec cand = theta + t * step;
            const CriterionEval cand_ev = fn(cand);
            if (std::isfinite(cand_ev.value) &&
                cand_ev.value <= ev.value + 1e-4 * t * slope) {
                theta = cand;
                ev = cand_ev;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if (!moved) return std::nullopt;
    }
    if (ev.gradient.cwiseAbs().maxCoeff() <= opts.foc_tol * (1.0 + ev.scale))
        return NewtonResult{theta, ev.value, true, opts.max_iter};
    return std::nullopt;
}

void grid_recurse(const NewtonOptions& opts, Eigen::Index coord, Vec& point,
                  std::vector<Vec>& out) {
    if (coord == point.size()) {
        out.push_back(point);
        return;
    }
    for (int k = 0; k < opts.grid_points; ++k) {
        point[coord] =
            opts.box_lo + (opts.box_hi - opts.box_lo) *
                              (static_cast<double>(k) /
                               static_cast<double>(opts.grid_points - 1));
        grid_recurse(opts, coord + 1, point, out);
    }
}

bool lex_less(const Vec& a, const Vec& b) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return a[i] < b[i];
    }
    return false;
}

}  // namespace

NewtonResult minimize_newton(const CriterionFn& fn, const Vec& start,
                             const NewtonOptions& opts) {
    if (auto res = newton_from(fn, start, opts)) return *res;

    // coarse multistart; deterministic selection: lowest criterion value,
    // ties broken by lexicographically smallest theta
    std::vector<Vec> grid;
    Vec point = Vec::Zero(start.size());
    grid_recurse(opts, 0, point, grid);

    std::optional<NewtonResult> best;
    for (const Vec& g : grid) {
        auto res = newton_from(fn, g, opts);
        if (!res) continue;
        if (!best || res->value < best->value - 1e-14 ||
            (std::abs(res->value - best->value) <= 1e-14 &&
             lex_less(res->theta, best->theta)))
            best = res;
    }
    if (!best)
        throw NumericalError(
            "minimize_newton: no convergence from start or multistart grid");
    return *best;
}

}  // namespace megmm
