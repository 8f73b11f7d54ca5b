#include "megmm/montecarlo.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <array>
#include <cmath>

namespace megmm {

std::string estimator_name(Estimator e) {
    switch (e) {
        case Estimator::GmmConventional: return "GMM-conv";
        case Estimator::GmmRobust: return "GMM-robust";
        case Estimator::OracleMe: return "OracleME";
        case Estimator::RssMe: return "RSS-ME";
        case Estimator::Hh: return "HH";
        case Estimator::Dr: return "DR";
    }
    return "unknown";
}

Estimator parse_estimator(const std::string& name) {
    if (name == "GMM-conv") return Estimator::GmmConventional;
    if (name == "GMM-robust") return Estimator::GmmRobust;
    if (name == "OracleME") return Estimator::OracleMe;
    if (name == "RSS-ME") return Estimator::RssMe;
    if (name == "HH") return Estimator::Hh;
    if (name == "DR") return Estimator::Dr;
    throw std::invalid_argument("unknown estimator name: " + name);
}

DataSet gen_linear_iv(const LinearIvDesign& design, Eigen::Index n,
                      Rng& rng) {
    Mat rows(n, 4);  // [y, x, z1, z2]
    const double cross = 0.5;
    const double resid_scale = std::sqrt(1.0 - cross * cross);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double z1 = rng.normal();
        const double z2 = rng.normal();
        const double e1 = rng.normal();
        const double e2 = rng.normal();
        const double eps = e1;
        const double v = cross * e1 + resid_scale * e2;
        const double x = design.pi * z1 + 2.0 * design.pi * z2 + v;
        const double y = design.theta * x + design.delta * z2 + eps;
        rows(i, 0) = y;
        rows(i, 1) = x;
        rows(i, 2) = z1;
        rows(i, 3) = z2;
    }
    return DataSet(std::move(rows));
}

double SimConfig::concentration_to_pi(double target, Eigen::Index n) {
    if (target <= 0.0)
        throw std::invalid_argument("concentration target must be positive");
    // mu^2 = n Pi' E[ZZ'] Pi / var(v) = 5 n pi^2 with Pi = (pi, 2pi)' and
    // unit v variance; solve mu^2 / m = target with m = 2
    return std::sqrt(2.0 * target / (5.0 * static_cast<double>(n)));
}

Vec pseudo_true_linear(const Mat& pi, const Vec& gamma, const Vec& theta,
                       const Mat& weight) {
    const Mat bread = pi.transpose() * weight * pi;
    const auto inv = guarded_inverse_sym(bread);
    if (inv.pseudo)
        throw NumericalError("pseudo_true_linear: singular Pi'W Pi");
    return inv.inverse * (pi.transpose() * weight * (pi * theta + gamma));
}

double pseudo_true_datadependent(const SimConfig& config,
                                 Eigen::Index oracle_n) {
    if (oracle_n > 4000000)
        throw std::invalid_argument(
            "pseudo_true_datadependent: oracle sample too large");
    Rng rng(derive_seed(config.seed, 0x9f0c7e1db5ULL));
    const DataSet data = gen_linear_iv(config.design(), oracle_n, rng);
    LinearIvModel model(2, 1);
    const ResolvedWeight rw = build_weight(config.weight, model, data);
    const GmmFit fit = solve_gmm(model, data, rw.weight);
    return fit.theta[0];
}

Recentering population_recentering(const LinearIvDesign& design,
                                   double pseudo_true) {
    const Vec pi = design.pi_vector();
    Recentering out;
    // E z (y - x theta_w) = Pi (theta - theta_w) + gamma
    out.g_center =
        pi * (design.theta - pseudo_true) + design.direct_effect();
    // E jacobian = -E z x' = -Pi
    out.jac_center = -pi;
    out.source = Recentering::Source::Oracle;
    return out;
}

AnalyticExample analytic_example(double rho) {
    if (rho <= -1.0 || rho >= 1.0)
        throw std::invalid_argument("analytic_example: rho outside (-1, 1)");
    AnalyticExample out;
    out.rho = rho;
    const double denom = 5.0 + 4.0 * rho;
    out.theta_w = (rho + 2.0) / denom;
    out.v_gmm = 2.0 *
                (56.0 * std::pow(rho, 4) + 131.0 * std::pow(rho, 3) +
                 210.0 * rho * rho + 232.0 * rho + 100.0) /
                std::pow(denom, 4);
    out.v_me = 969.0 / 6116.0;
    out.w1 = (1.0 + 2.0 * rho) / denom;
    out.w2 = 2.0 * (rho + 2.0) / denom;
    out.efficiency_gain = 1.0 - out.v_me / out.v_gmm;
    return out;
}

const EstimatorMetrics& SimResult::metric(Estimator e) const {
    for (const auto& m : metrics)
        if (m.kind == e) return m;
    throw std::invalid_argument("SimResult: estimator not present: " +
                                estimator_name(e));
}

namespace {

bool estimator_requested(const SimConfig& c, Estimator e) {
    for (const auto& x : c.estimators)
        if (x == e) return true;
    return false;
}

struct RepOutcome {
    double point = std::numeric_limits<double>::quiet_NaN();
    double lo = 0.0;
    double hi = 0.0;
    double boot_sd = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
};

}  // namespace

SimResult run_mc(const SimConfig& config) {
    if (config.n < 50)
        throw std::invalid_argument("run_mc: n must be at least 50");
    if (config.replications < 1)
        throw std::invalid_argument("run_mc: need at least 1 replication");
    if (config.delta < 0.0)
        throw std::invalid_argument("run_mc: delta must be nonnegative");
    if (config.estimators.empty())
        throw std::invalid_argument("run_mc: empty estimator list");

    const LinearIvDesign design = config.design();
    LinearIvModel model(2, 1);

    // pseudo-true oracle for coverage scoring
    double pseudo_true;
    if (config.weight.data_dependent()) {
        pseudo_true = pseudo_true_datadependent(config);
    } else {
        Mat w_pop;
        switch (config.weight.kind) {
            case WeightKind::Identity:
            case WeightKind::InstrumentGram:
                // population instrument gram is the identity
                w_pop = Mat::Identity(2, 2);
                break;
            case WeightKind::Fixed:
                w_pop = config.weight.fixed;
                break;
            default:
                throw std::invalid_argument("run_mc: unsupported weight");
        }
        Vec theta0(1);
        theta0 << design.theta;
        pseudo_true = pseudo_true_linear(design.pi_vector(),
                                         design.direct_effect(), theta0,
                                         w_pop)[0];
    }
    const Recentering oracle_centers =
        population_recentering(design, pseudo_true);

    boost::math::normal norm01;
    const double z = boost::math::quantile(norm01, 1.0 - config.alpha / 2.0);
    const double n_d = static_cast<double>(config.n);

    const std::vector<Estimator> kinds = {
        Estimator::GmmConventional, Estimator::GmmRobust, Estimator::OracleMe,
        Estimator::RssMe, Estimator::Hh, Estimator::Dr};

    // outcome slots per replication, reduced serially afterwards
    std::vector<std::array<RepOutcome, 6>> slots(
        static_cast<std::size_t>(config.replications));

    parallel_for(
        static_cast<std::size_t>(config.replications), config.threads,
        [&](std::size_t r) {
            const std::uint64_t rep_seed = derive_seed(config.seed, r);
            Rng rng(rep_seed);
            const DataSet data = gen_linear_iv(design, config.n, rng);
            auto& out = slots[r];

            GmmFit fit;
            bool fit_ok = true;
            try {
                const ResolvedWeight rw =
                    build_weight(config.weight, model, data);
                fit = solve_gmm(model, data, rw.weight);
            } catch (const NumericalError&) {
                fit_ok = false;
            }

            auto wald = [&](double point, double avar) {
                const double se = std::sqrt(std::max(0.0, avar) / n_d);
                return RepOutcome{point, point - z * se, point + z * se,
                                  std::numeric_limits<double>::quiet_NaN(),
                                  true};
            };

            if (fit_ok) {
                if (estimator_requested(config, Estimator::GmmConventional))
                    out[0] =
                        wald(fit.theta[0], fit.var_conventional(0, 0));
                if (estimator_requested(config, Estimator::GmmRobust))
                    out[1] = wald(fit.theta[0], fit.var_robust(0, 0));
                if (estimator_requested(config, Estimator::OracleMe)) {
                    try {
                        const MeFit me = oracle_me(model, data, fit.weight,
                                                   oracle_centers);
                        out[2] = wald(me.theta[0], me.variance(0, 0));
                    } catch (const NumericalError&) {
                    }
                }
                if (estimator_requested(config, Estimator::RssMe)) {
                    try {
                        BootstrapOptions ropts;
                        ropts.threads = 1;
                        const SplitResult rss = split_sample(
                            model, data, config.weight, config.s_splits,
                            derive_seed(rep_seed, 1), ropts);
                        const double med = rss.aggregate.median[0];
                        const double se = std::sqrt(
                            std::max(0.0, rss.aggregate.var_median_rule(0, 0)));
                        out[3] = RepOutcome{
                            med, med - z * se, med + z * se,
                            std::numeric_limits<double>::quiet_NaN(), true};
                    } catch (const NumericalError&) {
                    }
                }
                // HH and DR share one index stream per replication
                const std::uint64_t boot_seed = derive_seed(rep_seed, 2);
                BootstrapOptions bopts;
                bopts.threads = 1;
                if (estimator_requested(config, Estimator::Hh)) {
                    try {
                        const DrawSet hh =
                            hh_bootstrap(model, data, config.weight, fit,
                                         config.b_draws, boot_seed, bopts);
                        const auto ci = percentile_ci(hh, config.alpha);
                        out[4] = RepOutcome{fit.theta[0], ci[0].lo, ci[0].hi,
                                            draw_sd(hh.draws)[0], true};
                    } catch (const NumericalError&) {
                    }
                }
                if (estimator_requested(config, Estimator::Dr)) {
                    try {
                        DrOptions dopts;
                        dopts.threads = 1;
                        const DrawSet dr =
                            dr_bootstrap(model, data, fit, config.b_draws,
                                         boot_seed, dopts);
                        const auto ci = percentile_ci(dr, config.alpha);
                        out[5] = RepOutcome{fit.theta[0], ci[0].lo, ci[0].hi,
                                            draw_sd(dr.draws)[0], true};
                    } catch (const NumericalError&) {
                    }
                }
            }
        });

    SimResult result;
    result.pseudo_true = pseudo_true;
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        if (!estimator_requested(config, kinds[k])) continue;
        EstimatorMetrics em;
        em.kind = kinds[k];
        std::vector<double> points, lens, boot_sds;
        int covered = 0;
        for (const auto& rep : slots) {
            const RepOutcome& o = rep[k];
            if (!o.ok) {
                ++em.failures;
                continue;
            }
            points.push_back(o.point);
            lens.push_back(o.hi - o.lo);
            if (pseudo_true >= o.lo && pseudo_true <= o.hi) ++covered;
            if (std::isfinite(o.boot_sd)) boot_sds.push_back(o.boot_sd);
        }
        em.scored = static_cast<int>(points.size());
        if (em.scored > 0) {
            double mean = 0.0;
            for (double v : points) mean += v;
            mean /= static_cast<double>(points.size());
            em.point_mean = mean;
            double var = 0.0;
            for (double v : points) var += (v - mean) * (v - mean);
            em.sd = points.size() > 1
                        ? std::sqrt(var /
                                    static_cast<double>(points.size() - 1))
                        : 0.0;
            if (!boot_sds.empty()) {
                // bootstrap estimators report the average bootstrap SD
                double acc = 0.0;
                for (double v : boot_sds) acc += v;
                em.sd = acc / static_cast<double>(boot_sds.size());
            }
            em.coverage =
                static_cast<double>(covered) / static_cast<double>(em.scored);
            std::sort(lens.begin(), lens.end());
            const std::size_t mid = lens.size() / 2;
            em.len_median = lens.size() % 2 == 1
                                ? lens[mid]
                                : 0.5 * (lens[mid - 1] + lens[mid]);
            double lacc = 0.0;
            for (double v : lens) lacc += v;
            em.len_mean = lacc / static_cast<double>(lens.size());
        }
        result.metrics.push_back(std::move(em));
    }
    return result;
}

}  // namespace megmm
