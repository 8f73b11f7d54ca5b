#include "megmm/fit.hpp"

#include <boost/math/distributions/fisher_f.hpp>

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "json.hpp"

namespace megmm {

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::stringstream ss(text);
    while (std::getline(ss, item, ',')) {
        const auto begin = item.find_first_not_of(" \t");
        if (begin == std::string::npos) continue;
        const auto end = item.find_last_not_of(" \t");
        out.push_back(item.substr(begin, end - begin + 1));
    }
    return out;
}

namespace {

struct Ols {
    Vec coef;
    Vec fitted;
    Vec resid;
    Mat xtx_inv;
};

Ols ols(const Mat& x, const Vec& y) {
    Ols out;
    const Mat xtx = x.transpose() * x;
    const auto inv = guarded_inverse_sym(xtx);
    if (inv.pseudo) throw NumericalError("ols: collinear regressors");
    out.xtx_inv = inv.inverse;
    out.coef = out.xtx_inv * (x.transpose() * y);
    out.fitted = x * out.coef;
    out.resid = y - out.fitted;
    return out;
}

// heteroskedasticity-robust joint test that the trailing `q` coefficients
// vanish; returns the F-form statistic
double robust_wald_f(const Mat& x, const Vec& y, Eigen::Index q,
                     double& pvalue) {
    const Ols fit = ols(x, y);
    Mat meat = Mat::Zero(x.cols(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Vec xi = x.row(i).transpose();
        meat.noalias() += fit.resid[i] * fit.resid[i] * xi * xi.transpose();
    }
    const Mat cov = fit.xtx_inv * meat * fit.xtx_inv;
    const Mat sub = cov.bottomRightCorner(q, q);
    const Vec beta = fit.coef.tail(q);
    const auto inv = guarded_inverse_sym(sub);
    if (inv.pseudo) throw NumericalError("robust_wald_f: degenerate block");
    const double wald = beta.dot(inv.inverse * beta);
    const double f_stat = wald / static_cast<double>(q);
    const double df2 = static_cast<double>(x.rows() - x.cols());
    boost::math::fisher_f dist(static_cast<double>(q), df2);
    pvalue = boost::math::cdf(boost::math::complement(dist, f_stat));
    return f_stat;
}

WeightSpec parse_fit_weight(const std::string& token, Eigen::Index m) {
    if (token.rfind("fixed:", 0) == 0) {
        const CsvTable table = read_csv(token.substr(6));
        if (table.values.rows() != m || table.values.cols() != m)
            throw std::invalid_argument(
                "fixed weight matrix must be " + std::to_string(m) + "x" +
                std::to_string(m));
        return WeightSpec::fixed_matrix(table.values);
    }
    if (token == "identity") return WeightSpec::identity();
    if (token == "zz") return WeightSpec::instrument_gram();
    if (token == "s11") return WeightSpec::moment_var_inv();
    if (token == "s112") return WeightSpec::residual_var_inv();
    throw std::invalid_argument(
        "unknown weight '" + token +
        "' (expected identity|zz|s11|s112|fixed:<path>)");
}

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool wants(const FitRequest& req, const std::string& token) {
    return std::find(req.estimators.begin(), req.estimators.end(), token) !=
           req.estimators.end();
}

}  // namespace

FitReport run_fit(const FitRequest& request) {
    if (request.outcome.empty() || request.endogenous.empty() ||
        request.instruments.empty())
        throw std::invalid_argument(
            "fit: outcome, endogenous, and instrument columns are required");
    for (const std::string& token : request.estimators)
        if (token != "gmm" && token != "rss" && token != "meboot" &&
            token != "dr" && token != "hh")
            throw std::invalid_argument("fit: unknown estimator '" + token +
                                        "'");

    // role lists must be disjoint
    std::vector<std::string> all_roles = {request.outcome};
    for (const auto* roles :
         {&request.endogenous, &request.instruments, &request.controls})
        all_roles.insert(all_roles.end(), roles->begin(), roles->end());
    std::set<std::string> unique_roles(all_roles.begin(), all_roles.end());
    if (unique_roles.size() != all_roles.size())
        throw std::invalid_argument("fit: column roles must be disjoint");

    const CsvTable table = read_csv(request.csv_path);
    const Eigen::Index n = table.values.rows();
    if (n < 4) throw std::invalid_argument("fit: too few complete rows");

    const auto p =
        static_cast<Eigen::Index>(request.endogenous.size() +
                                  request.controls.size());
    const auto m =
        static_cast<Eigen::Index>(request.instruments.size() +
                                  request.controls.size());
    if (m < p)
        throw std::invalid_argument(
            "fit: order condition fails (instruments + controls < "
            "endogenous + controls)");

    // model rows: [y, endogenous.., controls.., instruments.., controls..]
    Mat rows(n, 1 + p + m);
    rows.col(0) = table.values.col(table.column(request.outcome));
    Eigen::Index at = 1;
    for (const auto& name : request.endogenous)
        rows.col(at++) = table.values.col(table.column(name));
    for (const auto& name : request.controls)
        rows.col(at++) = table.values.col(table.column(name));
    for (const auto& name : request.instruments)
        rows.col(at++) = table.values.col(table.column(name));
    for (const auto& name : request.controls)
        rows.col(at++) = table.values.col(table.column(name));

    const DataSet data(std::move(rows));
    LinearIvModel model(m, p);

    FitReport report;
    report.param_names = request.endogenous;
    report.param_names.insert(report.param_names.end(),
                              request.controls.begin(),
                              request.controls.end());

    BootstrapOptions bopts;
    bopts.threads = request.threads;
    const std::uint64_t rss_seed = derive_seed(request.seed, 101);
    const std::uint64_t boot_seed = derive_seed(request.seed, 202);

    bool pseudo_used = false;
    for (const std::string& token : request.weights) {
        const WeightSpec spec = parse_fit_weight(token, m);
        const ResolvedWeight rw = build_weight(spec, model, data);
        const GmmFit fit = solve_gmm(model, data, rw.weight);
        pseudo_used = pseudo_used || fit.sigma.pseudo ||
                      (rw.pilot && rw.pilot->sigma.pseudo);

        FitPanel panel;
        panel.weight_name = token;
        panel.point = fit.theta;
        panel.conv_se = standard_errors(fit.var_conventional, n);
        panel.robust_se = standard_errors(fit.var_robust, n);
        panel.me_bound_se = standard_errors(fit.var_me_bound, n);
        panel.j_stat = fit.j_stat;
        panel.j_pvalue = fit.j_pvalue;
        panel.j_defined = fit.j_defined;

        if (wants(request, "rss")) {
            const SplitResult rss = split_sample(
                model, data, spec, request.s_splits, rss_seed, bopts);
            panel.rss_median = rss.aggregate.median;
            panel.rss_se = rss.aggregate.var_median_rule.diagonal()
                               .cwiseMax(0.0)
                               .cwiseSqrt();
        }
        if (wants(request, "meboot")) {
            const DrawSet me = me_bootstrap(model, data, fit,
                                            request.b_draws, boot_seed,
                                            bopts);
            panel.me_boot_sd = draw_sd(me.draws);
        }
        if (wants(request, "dr")) {
            DrOptions dopts;
            dopts.threads = request.threads;
            const DrawSet dr = dr_bootstrap(model, data, fit,
                                            request.b_draws, boot_seed,
                                            dopts);
            panel.dr_ci = percentile_ci(dr, request.alpha);
        }
        if (wants(request, "hh")) {
            const DrawSet hh = hh_bootstrap(model, data, spec, fit,
                                            request.b_draws, boot_seed,
                                            bopts);
            panel.hh_ci = percentile_ci(hh, request.alpha);
        }
        report.panels.push_back(std::move(panel));
    }

    // diagnostics: first-stage F for the excluded instruments and a RESET
    // test on powers of the first-stage fitted value; both regressions add
    // an intercept internally
    FitDiagnostics diag;
    diag.n_used = n;
    diag.n_dropped = table.dropped;
    diag.num_moments = m;
    diag.num_params = p;

    const auto n_iv = static_cast<Eigen::Index>(request.instruments.size());
    const auto n_ctl = static_cast<Eigen::Index>(request.controls.size());
    const Vec endog1 = data.rows().col(1);
    Mat first_stage(n, 1 + n_iv + n_ctl);
    first_stage.col(0).setOnes();
    for (Eigen::Index k = 0; k < n_iv; ++k)
        first_stage.col(1 + k) = data.rows().col(1 + p + k);
    for (Eigen::Index k = 0; k < n_ctl; ++k)
        first_stage.col(1 + n_iv + k) = data.rows().col(1 + p + n_iv + k);
    const Ols unrestricted = ols(first_stage, endog1);
    Mat restricted(n, 1 + n_ctl);
    restricted.col(0).setOnes();
    for (Eigen::Index k = 0; k < n_ctl; ++k)
        restricted.col(1 + k) = data.rows().col(1 + p + n_iv + k);
    const Ols small = ols(restricted, endog1);
    const double rss_u = unrestricted.resid.squaredNorm();
    const double rss_r = small.resid.squaredNorm();
    const double df2 =
        static_cast<double>(n - first_stage.cols());
    diag.first_stage_f =
        ((rss_r - rss_u) / static_cast<double>(n_iv)) / (rss_u / df2);

    const Vec y = data.rows().col(0);
    Mat reset(n, 1 + p + 3);
    reset.col(0).setOnes();
    for (Eigen::Index k = 0; k < p; ++k)
        reset.col(1 + k) = data.rows().col(1 + k);
    reset.col(1 + p) = unrestricted.fitted.array().square();
    reset.col(2 + p) = unrestricted.fitted.array().cube();
    reset.col(3 + p) = unrestricted.fitted.array().square().square();
    diag.reset_f = robust_wald_f(reset, y, 3, diag.reset_pvalue);
    diag.pseudo_inverse_used = pseudo_used;

    report.diagnostics = diag;
    return report;
}

namespace {

std::string format_markdown(const FitReport& report) {
    std::string out;
    out += "| quantity |";
    for (const auto& panel : report.panels)
        out += " W=" + panel.weight_name + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < report.panels.size(); ++i) out += "---|";
    out += "\n";

    const auto p = static_cast<Eigen::Index>(report.param_names.size());
    auto row = [&](const std::string& label, auto getter) {
        for (Eigen::Index k = 0; k < p; ++k) {
            out += "| " + label + " (" + report.param_names[k] + ") |";
            for (const auto& panel : report.panels) {
                const auto cell = getter(panel, k);
                out += cell.empty() ? " - |" : " " + cell + " |";
            }
            out += "\n";
        }
    };

    row("GMM point", [](const FitPanel& pn, Eigen::Index k) {
        return fmt6(pn.point[k]);
    });
    row("Conventional SE", [](const FitPanel& pn, Eigen::Index k) {
        return fmt6(pn.conv_se[k]);
    });
    row("Misspec-robust SE", [](const FitPanel& pn, Eigen::Index k) {
        return fmt6(pn.robust_se[k]);
    });
    row("ME efficiency bound", [](const FitPanel& pn, Eigen::Index k) {
        return fmt6(pn.me_bound_se[k]);
    });
    row("RSS ME median", [](const FitPanel& pn, Eigen::Index k) {
        return pn.rss_median ? fmt6((*pn.rss_median)[k]) : std::string();
    });
    row("RSS ME SE", [](const FitPanel& pn, Eigen::Index k) {
        return pn.rss_se ? fmt6((*pn.rss_se)[k]) : std::string();
    });
    row("ME-GMM boot SD", [](const FitPanel& pn, Eigen::Index k) {
        return pn.me_boot_sd ? fmt6((*pn.me_boot_sd)[k]) : std::string();
    });
    row("DR percentile CI", [](const FitPanel& pn, Eigen::Index k) {
        return pn.dr_ci ? "[" + fmt6((*pn.dr_ci)[k].lo) + ", " +
                              fmt6((*pn.dr_ci)[k].hi) + "]"
                        : std::string();
    });
    row("HH percentile CI", [](const FitPanel& pn, Eigen::Index k) {
        return pn.hh_ci ? "[" + fmt6((*pn.hh_ci)[k].lo) + ", " +
                              fmt6((*pn.hh_ci)[k].hi) + "]"
                        : std::string();
    });

    out += "| J statistic |";
    for (const auto& panel : report.panels)
        out += " " + fmt6(panel.j_stat) + " |";
    out += "\n| J p-value |";
    for (const auto& panel : report.panels)
        out += panel.j_defined
                   ? " " + fmt6(panel.j_pvalue) + " |"
                   : std::string(" just-identified |");
    out += "\n\n";

    const auto& d = report.diagnostics;
    out += "First-stage F: " + fmt6(d.first_stage_f) + "\n";
    out += "RESET F (p-value): " + fmt6(d.reset_f) + " (" +
           fmt6(d.reset_pvalue) + ")\n";
    out += "Rows used: " + std::to_string(d.n_used) +
           ", dropped (missing cells): " + std::to_string(d.n_dropped) +
           "\n";
    out += "Moments: " + std::to_string(d.num_moments) +
           ", parameters: " + std::to_string(d.num_params) + "\n";
    if (d.pseudo_inverse_used)
        out += "warning: an ill-conditioned covariance block was "
               "pseudo-inverted\n";
    return out;
}

std::string format_csv(const FitReport& report) {
    std::string out = "weight,quantity,param,value\n";
    auto emit = [&](const std::string& w, const std::string& q,
                    const std::string& param, double v) {
        out += w + "," + q + "," + param + "," + fmt17(v) + "\n";
    };
    const auto p = static_cast<Eigen::Index>(report.param_names.size());
    for (const auto& panel : report.panels) {
        for (Eigen::Index k = 0; k < p; ++k) {
            const std::string& name = report.param_names[k];
            emit(panel.weight_name, "point", name, panel.point[k]);
            emit(panel.weight_name, "conv_se", name, panel.conv_se[k]);
            emit(panel.weight_name, "robust_se", name, panel.robust_se[k]);
            emit(panel.weight_name, "me_bound_se", name,
                 panel.me_bound_se[k]);
            if (panel.rss_median)
                emit(panel.weight_name, "rss_median", name,
                     (*panel.rss_median)[k]);
            if (panel.rss_se)
                emit(panel.weight_name, "rss_se", name, (*panel.rss_se)[k]);
            if (panel.me_boot_sd)
                emit(panel.weight_name, "me_boot_sd", name,
                     (*panel.me_boot_sd)[k]);
            if (panel.dr_ci) {
                emit(panel.weight_name, "dr_ci_lo", name,
                     (*panel.dr_ci)[k].lo);
                emit(panel.weight_name, "dr_ci_hi", name,
                     (*panel.dr_ci)[k].hi);
            }
            if (panel.hh_ci) {
                emit(panel.weight_name, "hh_ci_lo", name,
                     (*panel.hh_ci)[k].lo);
                emit(panel.weight_name, "hh_ci_hi", name,
                     (*panel.hh_ci)[k].hi);
            }
        }
        emit(panel.weight_name, "j_stat", "", panel.j_stat);
        if (panel.j_defined)
            emit(panel.weight_name, "j_pvalue", "", panel.j_pvalue);
    }
    const auto& d = report.diagnostics;
    emit("", "first_stage_f", "", d.first_stage_f);
    emit("", "reset_f", "", d.reset_f);
    emit("", "reset_pvalue", "", d.reset_pvalue);
    emit("", "n_used", "", static_cast<double>(d.n_used));
    emit("", "n_dropped", "", static_cast<double>(d.n_dropped));
    return out;
}

std::string format_json(const FitReport& report) {
    nlohmann::ordered_json j;
    j["params"] = report.param_names;
    std::vector<nlohmann::ordered_json> panels;
    for (const auto& panel : report.panels) {
        nlohmann::ordered_json pj;
        pj["weight"] = panel.weight_name;
        auto to_vec = [](const Vec& v) {
            return std::vector<double>(v.data(), v.data() + v.size());
        };
        pj["point"] = to_vec(panel.point);
        pj["conv_se"] = to_vec(panel.conv_se);
        pj["robust_se"] = to_vec(panel.robust_se);
        pj["me_bound_se"] = to_vec(panel.me_bound_se);
        pj["j_stat"] = panel.j_stat;
        if (panel.j_defined) pj["j_pvalue"] = panel.j_pvalue;
        if (panel.rss_median) pj["rss_median"] = to_vec(*panel.rss_median);
        if (panel.rss_se) pj["rss_se"] = to_vec(*panel.rss_se);
        if (panel.me_boot_sd) pj["me_boot_sd"] = to_vec(*panel.me_boot_sd);
        auto ci_json = [](const std::vector<Interval>& cis) {
            std::vector<std::vector<double>> out;
            for (const auto& ci : cis) out.push_back({ci.lo, ci.hi});
            return out;
        };
        if (panel.dr_ci) pj["dr_ci"] = ci_json(*panel.dr_ci);
        if (panel.hh_ci) pj["hh_ci"] = ci_json(*panel.hh_ci);
        panels.push_back(std::move(pj));
    }
    j["panels"] = panels;
    const auto& d = report.diagnostics;
    j["diagnostics"] = {{"first_stage_f", d.first_stage_f},
                        {"reset_f", d.reset_f},
                        {"reset_pvalue", d.reset_pvalue},
                        {"n_used", d.n_used},
                        {"n_dropped", d.n_dropped},
                        {"num_moments", d.num_moments},
                        {"num_params", d.num_params},
                        {"pseudo_inverse_used", d.pseudo_inverse_used}};
    return j.dump(2) + "\n";
}

}  // namespace

std::string format_fit(const FitReport& report, FitFormat format) {
    switch (format) {
        case FitFormat::Markdown: return format_markdown(report);
        case FitFormat::Csv: return format_csv(report);
        case FitFormat::Json: return format_json(report);
    }
    throw std::invalid_argument("format_fit: unknown format");
}

}  // namespace megmm
