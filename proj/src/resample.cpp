#include "megmm/resample.hpp"

#include <algorithm>
#include <numeric>

namespace megmm {

std::vector<Eigen::Index> resample_indices(Eigen::Index n, Rng& rng) {
    if (n < 1) throw std::invalid_argument("resample_indices: n < 1");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (auto& i : idx)
        i = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
    return idx;
}

std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>>
split_half_indices(Eigen::Index n, Rng& rng) {
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    for (std::size_t i = perm.size() - 1; i > 0; --i)
        std::swap(perm[i], perm[rng.below(i + 1)]);
    const auto cut = static_cast<std::size_t>((n + 1) / 2);
    return {std::vector<Eigen::Index>(perm.begin(), perm.begin() + cut),
            std::vector<Eigen::Index>(perm.begin() + cut, perm.end())};
}

namespace {

// Per-observation augmented stack at theta = 0 for linear models; bootstrap
// means become index gathers instead of model re-evaluations.
struct LinearCache {
    Mat psi0;  // n x m(p+1): [moments(0)', vec_rows(jacobian)']
    Eigen::Index m = 0;
    Eigen::Index p = 0;
};

LinearCache make_linear_cache(const MomentModel& model, const DataSet& data) {
    LinearCache c;
    c.m = model.num_moments();
    c.p = model.num_params();
    c.psi0.resize(data.size(), model.augmented_dim());
    const Vec zero = Vec::Zero(c.p);
    for (Eigen::Index i = 0; i < data.size(); ++i)
        c.psi0.row(i) = augmented(model, data.row(i), zero).transpose();
    return c;
}

struct BootMeans {
    Vec g0;       // mean moments at theta = 0
    Mat jac;      // mean Jacobian
    Vec jac_vec;  // vec_rows(jac)
};

BootMeans gather_means(const LinearCache& c,
                       const std::vector<Eigen::Index>& idx) {
    Vec acc = Vec::Zero(c.psi0.cols());
    for (const Eigen::Index i : idx) acc += c.psi0.row(i).transpose();
    acc /= static_cast<double>(idx.size());
    BootMeans bm;
    bm.g0 = acc.head(c.m);
    bm.jac_vec = acc.tail(c.m * c.p);
    bm.jac = unvec_rows(bm.jac_vec, c.m, c.p);
    return bm;
}

// theta solving combo1 (g0 + jac theta - c1) + combo2 (jac_vec - c2) = 0.
Vec linear_equation_solve(const BootMeans& bm, const Mat& combo1,
                          const Mat& combo2, const Vec& c1, const Vec& c2) {
    const Mat bread = combo1 * bm.jac;
    const auto inv = guarded_inverse(bread);
    if (inv.pseudo)
        throw NumericalError("bootstrap replicate: singular bread");
    return -inv.inverse *
           (combo1 * (bm.g0 - c1) + combo2 * (bm.jac_vec - c2));
}

struct RepDraw {
    Vec theta;
    Vec se;  // empty unless the caller asked for replicate standard errors
};

using ReplicateFn = std::function<std::optional<RepDraw>(int, Rng&)>;

DrawSet run_replicates(DrawKind kind, Eigen::Index p, int count,
                       std::uint64_t seed, int threads,
                       const ReplicateFn& replicate) {
    if (count < 1) throw std::invalid_argument("bootstrap: need B >= 1");
    std::vector<std::optional<RepDraw>> slots(
        static_cast<std::size_t>(count));
    parallel_for(static_cast<std::size_t>(count), threads,
                 [&](std::size_t b) {
                     Rng rng(derive_seed(seed, b));
                     try {
                         slots[b] = replicate(static_cast<int>(b), rng);
                     } catch (const NumericalError&) {
                         slots[b] = std::nullopt;
                     }
                 });

    DrawSet out;
    out.kind = kind;
    out.base_seed = seed;
    out.requested = count;
    out.failures = 0;
    Eigen::Index kept = 0;
    bool with_se = false;
    for (const auto& s : slots)
        if (s) {
            ++kept;
            with_se = with_se || s->se.size() > 0;
        }
    out.draws.resize(kept, p);
    if (with_se) out.draw_se.resize(kept, p);
    out.replicate_ids.reserve(static_cast<std::size_t>(kept));
    Eigen::Index r = 0;
    for (int b = 0; b < count; ++b) {
        const auto& s = slots[static_cast<std::size_t>(b)];
        if (s) {
            out.draws.row(r) = s->theta.transpose();
            if (with_se) out.draw_se.row(r) = s->se.transpose();
            out.replicate_ids.push_back(b);
            ++r;
        } else {
            ++out.failures;
        }
    }
    return out;
}

// Newton-Raphson on the square system combo * recentered_stack(theta) = 0,
// with step halving on the residual norm.
Vec solve_square_system(const MomentModel& model, const DataSet& data,
                        const Mat& combo1, const Mat& combo2, const Vec& c1,
                        const Vec& c2, const Vec& start,
                        const NewtonOptions& opts) {
    Vec theta = start;
    auto residual = [&](const Vec& t) {
        const SampleMoments s = sample_means(model, data, t);
        Vec h = combo1 * (s.g_bar - c1) +
                combo2 * (vec_rows(s.jac_bar) - c2);
        return std::make_pair(h, s);
    };
    auto [h, s] = residual(theta);
    for (int it = 0; it < opts.max_iter; ++it) {
        if (h.cwiseAbs().maxCoeff() <= opts.foc_tol * (1.0 + s.g_bar.norm()))
            return theta;
        Mat combo(combo1.rows(), combo1.cols() + combo2.cols());
        combo << combo1, combo2;
        const Mat jac_h = combo * augmented_jacobian(s);
        const auto inv = guarded_inverse(jac_h);
        if (inv.pseudo)
            throw NumericalError("square system: singular Jacobian");
        const Vec step = -inv.inverse * h;
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 50; ++ls) {
            auto [h2, s2] = residual(theta + t * step);
            if (h2.norm() < h.norm() * (1.0 - 1e-4 * t) + 1e-300) {
                theta += t * step;
                h = h2;
                s = s2;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if (!moved) throw NumericalError("square system: stalled");
    }
    if (h.cwiseAbs().maxCoeff() <= opts.foc_tol * (1.0 + s.g_bar.norm()))
        return theta;
    throw NumericalError("square system: no convergence");
}

}  // namespace

DrawSet hh_bootstrap(const MomentModel& model, const DataSet& data,
                     const WeightSpec& spec, const GmmFit& fit, int b_draws,
                     std::uint64_t seed, const BootstrapOptions& opts) {
    const Eigen::Index n = data.size();
    const Vec g_center = fit.g_bar;
    // weight is re-resolved per replicate for data-dependent kinds, reused
    // as-is for identity / fixed
    const bool fixed_weight = spec.kind == WeightKind::Identity ||
                              spec.kind == WeightKind::Fixed;
    std::optional<LinearCache> cache;
    if (model.is_linear()) cache = make_linear_cache(model, data);
    const Mat zero_combo2 =
        Mat::Zero(model.num_params(), model.num_moments() *
                                          model.num_params());
    const Vec zero_c2 =
        Vec::Zero(model.num_moments() * model.num_params());

    ReplicateFn replicate = [&](int, Rng& rng) -> std::optional<RepDraw> {
        const auto idx = resample_indices(n, rng);
        Mat weight;
        if (fixed_weight) {
            weight = fit.weight;
        } else {
            const DataSet boot = data.subset(idx);
            weight = build_weight(spec, model, boot, opts.gmm).weight;
        }
        if (cache) {
            const BootMeans bm = gather_means(*cache, idx);
            const Mat combo1 = bm.jac.transpose() * weight;
            return RepDraw{linear_equation_solve(bm, combo1, zero_combo2,
                                                 g_center, zero_c2),
                           Vec()};
        }
        const DataSet boot = data.subset(idx);
        CriterionFn fn = [&](const Vec& theta) -> CriterionEval {
            const SampleMoments s = sample_means(model, boot, theta);
            const Vec resid = s.g_bar - g_center;
            CriterionEval ev;
            ev.value = resid.dot(weight * resid);
            ev.gradient = 2.0 * s.jac_bar.transpose() * weight * resid;
            const Mat combo = gmm_combination(s.jac_bar, resid, weight);
            ev.hessian = 2.0 * combo * augmented_jacobian(s);
            ev.scale = resid.norm();
            return ev;
        };
        return RepDraw{minimize_newton(fn, fit.theta, opts.gmm.newton).theta,
                       Vec()};
    };
    return run_replicates(DrawKind::HH, model.num_params(), b_draws, seed,
                          opts.threads, replicate);
}

DrawSet me_bootstrap(const MomentModel& model, const DataSet& data,
                     const GmmFit& fit, int b_draws, std::uint64_t seed,
                     const BootstrapOptions& opts) {
    const Eigen::Index n = data.size();
    const Eigen::Index m = model.num_moments();
    const Eigen::Index mp = m * model.num_params();
    // the weighting depends only on original-sample quantities
    const Mat delta = weight_inverse_sym(fit.sigma.sigma).inverse;
    Recentering centers;
    centers.g_center = fit.g_bar;
    centers.jac_center = vec_rows(fit.jac_bar);

    std::optional<LinearCache> cache;
    Mat delta12;
    if (model.is_linear()) {
        cache = make_linear_cache(model, data);
        delta12 = delta.topRightCorner(m, mp);
    }
    const Mat delta11 = delta.topLeftCorner(m, m);

    ReplicateFn replicate = [&](int, Rng& rng) -> std::optional<RepDraw> {
        const auto idx = resample_indices(n, rng);
        if (cache) {
            const BootMeans bm = gather_means(*cache, idx);
            const Mat combo1 = bm.jac.transpose() * delta11;
            const Mat combo2 = bm.jac.transpose() * delta12;
            return RepDraw{linear_equation_solve(bm, combo1, combo2,
                                                 centers.g_center,
                                                 centers.jac_center),
                           Vec()};
        }
        const DataSet boot = data.subset(idx);
        GmmOptions local = opts.gmm;
        local.start = fit.theta;
        return RepDraw{me_gmm(model, boot, delta, centers, local), Vec()};
    };
    return run_replicates(DrawKind::ME, model.num_params(), b_draws, seed,
                          opts.threads, replicate);
}

DrawSet dr_bootstrap(const MomentModel& model, const DataSet& data,
                     const GmmFit& fit, int b_draws, std::uint64_t seed,
                     const DrOptions& opts) {
    const Eigen::Index n = data.size();
    const Eigen::Index m = model.num_moments();
    const Eigen::Index mp = m * model.num_params();
    // combination matrix from the original-sample GMM first-order condition
    const Mat combo = gmm_combination(fit.jac_bar, fit.g_bar, fit.weight);
    const Mat combo1 = combo.leftCols(m);
    const Mat combo2 = opts.jacobian_correction
                           ? Mat(combo.rightCols(mp))
                           : Mat(Mat::Zero(model.num_params(), mp));
    Recentering centers;
    centers.g_center = fit.g_bar;
    centers.jac_center = vec_rows(fit.jac_bar);

    std::optional<LinearCache> cache;
    if (model.is_linear()) cache = make_linear_cache(model, data);

    ReplicateFn replicate = [&](int, Rng& rng) -> std::optional<RepDraw> {
        const auto idx = resample_indices(n, rng);
        RepDraw draw;
        std::optional<DataSet> boot;
        if (cache) {
            const BootMeans bm = gather_means(*cache, idx);
            draw.theta = linear_equation_solve(bm, combo1, combo2,
                                               centers.g_center,
                                               centers.jac_center);
        } else {
            boot = data.subset(idx);
            draw.theta = solve_square_system(model, *boot, combo1, combo2,
                                             centers.g_center,
                                             centers.jac_center, fit.theta,
                                             opts.gmm.newton);
        }
        if (opts.replicate_se) {
            // replicate-sample misspecification-robust standard error
            if (!boot) boot = data.subset(idx);
            const SampleMoments s = sample_means(model, *boot, draw.theta);
            const SigmaBlocks sb = sigma_hat(model, *boot, draw.theta);
            const Mat rep_combo =
                gmm_combination(s.jac_bar, s.g_bar, fit.weight);
            const Mat var = var_misspec_robust(
                rep_combo, augmented_jacobian(s), sb.sigma);
            draw.se = standard_errors(var, boot->size());
        }
        return draw;
    };
    return run_replicates(DrawKind::DR, model.num_params(), b_draws, seed,
                          opts.threads, replicate);
}

SplitResult split_sample(const MomentModel& model, const DataSet& data,
                         const WeightSpec& spec, int s_splits,
                         std::uint64_t seed, const BootstrapOptions& opts) {
    const Eigen::Index n = data.size();
    if (n < 4) throw std::invalid_argument("split_sample: need n >= 4");
    if (s_splits < 1) throw std::invalid_argument("split_sample: need S >= 1");
    const Eigen::Index n_half = (n + 1) / 2;
    const bool skip_g_center =
        model.is_linear() && spec.kind == WeightKind::ResidualVarInv;

    struct SplitDraw {
        Vec theta;
        Mat variance;
    };
    std::vector<std::optional<SplitDraw>> slots(
        static_cast<std::size_t>(s_splits));

    parallel_for(static_cast<std::size_t>(s_splits), opts.threads,
                 [&](std::size_t s) {
        Rng rng(derive_seed(seed, s));
        for (int attempt = 0; attempt < 10; ++attempt) {
            const auto [half1, half2] = split_half_indices(n, rng);
            try {
                const DataSet d2 = data.subset(half2);
                const ResolvedWeight w2 =
                    build_weight(spec, model, d2, opts.gmm);
                const GmmFit fit2 = solve_gmm(model, d2, w2.weight, opts.gmm);
                Recentering centers =
                    recentering_from_sample(model, d2, fit2.theta);
                centers.source = Recentering::Source::SplitEstimate;
                if (skip_g_center) centers.g_center.setZero();

                const DataSet d1 = data.subset(half1);
                const ResolvedWeight w1 =
                    build_weight(spec, model, d1, opts.gmm);
                const MeFit me =
                    oracle_me(model, d1, w1.weight, centers, opts.gmm);
                slots[s] = SplitDraw{me.theta, me.variance};
                return;
            } catch (const NumericalError&) {
                continue;  // redraw the split
            }
        }
        throw NumericalError(
            "split_sample: rank-deficient half samples after 10 redraws");
    });

    SplitResult out;
    out.draws.kind = DrawKind::SplitSample;
    out.draws.base_seed = seed;
    out.draws.requested = s_splits;
    out.draws.failures = 0;
    const Eigen::Index p = model.num_params();
    out.draws.draws.resize(s_splits, p);
    std::vector<Mat> variances;
    variances.reserve(static_cast<std::size_t>(s_splits));
    for (int s = 0; s < s_splits; ++s) {
        const auto& d = slots[static_cast<std::size_t>(s)];
        out.draws.draws.row(s) = d->theta.transpose();
        variances.push_back(d->variance);
    }

    SplitAggregate agg;
    agg.n_half = n_half;
    agg.mean = out.draws.draws.colwise().mean().transpose();
    agg.sd_mean_rule = draw_sd(out.draws.draws);
    agg.median = draw_quantile(out.draws.draws, 0.5);

    agg.var_median_rule = Mat::Zero(p, p);
    std::vector<double> cell(static_cast<std::size_t>(s_splits));
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index k = 0; k < p; ++k) {
            for (int s = 0; s < s_splits; ++s) {
                const double dev_j = out.draws.draws(s, j) - agg.median[j];
                const double dev_k = out.draws.draws(s, k) - agg.median[k];
                cell[static_cast<std::size_t>(s)] =
                    variances[static_cast<std::size_t>(s)](j, k) /
                        static_cast<double>(n_half) +
                    dev_j * dev_k;
            }
            std::vector<double> sorted = cell;
            std::sort(sorted.begin(), sorted.end());
            const std::size_t mid = sorted.size() / 2;
            agg.var_median_rule(j, k) =
                sorted.size() % 2 == 1
                    ? sorted[mid]
                    : 0.5 * (sorted[mid - 1] + sorted[mid]);
        }
    }
    out.aggregate = agg;
    return out;
}

Vec draw_quantile(const Mat& draws, double q) {
    if (draws.rows() < 1)
        throw std::invalid_argument("draw_quantile: empty draws");
    const Eigen::Index b = draws.rows();
    Vec out(draws.cols());
    std::vector<double> col(static_cast<std::size_t>(b));
    for (Eigen::Index j = 0; j < draws.cols(); ++j) {
        for (Eigen::Index i = 0; i < b; ++i)
            col[static_cast<std::size_t>(i)] = draws(i, j);
        std::sort(col.begin(), col.end());
        // type-7: linear interpolation at (b-1) q
        const double pos = static_cast<double>(b - 1) * q;
        const auto lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        out[j] = lo + 1 < col.size()
                     ? col[lo] + frac * (col[lo + 1] - col[lo])
                     : col[lo];
    }
    return out;
}

std::vector<Interval> percentile_ci(const DrawSet& draws, double alpha) {
    if (draws.size() < 20)
        throw NumericalError("percentile_ci: fewer than 20 surviving draws");
    const Vec lo = draw_quantile(draws.draws, alpha / 2.0);
    const Vec hi = draw_quantile(draws.draws, 1.0 - alpha / 2.0);
    std::vector<Interval> out;
    out.reserve(static_cast<std::size_t>(lo.size()));
    for (Eigen::Index j = 0; j < lo.size(); ++j)
        out.push_back({lo[j], hi[j]});
    return out;
}

std::vector<Interval> percentile_t_ci(const DrawSet& draws,
                                      const Vec& center,
                                      const Vec& center_se, double alpha) {
    if (draws.draw_se.rows() != draws.draws.rows() ||
        draws.draw_se.size() == 0)
        throw std::invalid_argument(
            "percentile_t_ci: draws carry no replicate standard errors");
    if (draws.size() < 20)
        throw NumericalError(
            "percentile_t_ci: fewer than 20 surviving draws");
    Mat t_draws(draws.draws.rows(), draws.draws.cols());
    for (Eigen::Index i = 0; i < draws.draws.rows(); ++i)
        for (Eigen::Index j = 0; j < draws.draws.cols(); ++j)
            t_draws(i, j) =
                (draws.draws(i, j) - center[j]) / draws.draw_se(i, j);
    const Vec t_lo = draw_quantile(t_draws, alpha / 2.0);
    const Vec t_hi = draw_quantile(t_draws, 1.0 - alpha / 2.0);
    std::vector<Interval> out;
    for (Eigen::Index j = 0; j < center.size(); ++j)
        out.push_back({center[j] - t_hi[j] * center_se[j],
                       center[j] - t_lo[j] * center_se[j]});
    return out;
}

std::string draw_set_csv(const DrawSet& draws) {
    std::string out = "replicate,";
    for (Eigen::Index j = 0; j < draws.draws.cols(); ++j)
        out += "theta" + std::to_string(j + 1) + ",";
    out += "converged\n";
    char buf[64];
    Eigen::Index row = 0;
    for (int b = 0; b < draws.requested; ++b) {
        const bool kept =
            row < draws.draws.rows() &&
            draws.replicate_ids[static_cast<std::size_t>(row)] == b;
        out += std::to_string(b) + ",";
        for (Eigen::Index j = 0; j < draws.draws.cols(); ++j) {
            if (kept) {
                std::snprintf(buf, sizeof(buf), "%.17g",
                              draws.draws(row, j));
                out += buf;
            }
            out += ",";
        }
        out += kept ? "1\n" : "0\n";
        if (kept) ++row;
    }
    return out;
}

Vec robust_sd(const DrawSet& draws) {
    const Vec med = draw_quantile(draws.draws, 0.5);
    Mat abs_dev = (draws.draws.rowwise() - med.transpose()).cwiseAbs();
    return 1.4826 * draw_quantile(abs_dev, 0.5);
}

Vec draw_sd(const Mat& draws) {
    const Eigen::Index b = draws.rows();
    if (b < 2) return Vec::Zero(draws.cols());
    const Vec mean = draws.colwise().mean().transpose();
    Vec out(draws.cols());
    for (Eigen::Index j = 0; j < draws.cols(); ++j) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < b; ++i) {
            const double dev = draws(i, j) - mean[j];
            acc += dev * dev;
        }
        out[j] = std::sqrt(acc / static_cast<double>(b - 1));
    }
    return out;
}

}  // namespace megmm
