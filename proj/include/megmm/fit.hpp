// CSV-driven estimation front end: assemble a linear IV model from named
// columns (exogenous controls enter both the regressor and instrument
// blocks), run the requested estimators per weight spec, and report panels
// in the empirical-table layout with first-stage, overidentification, and
// specification diagnostics.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "megmm/csv.hpp"
#include "megmm/resample.hpp"

namespace megmm {

enum class FitFormat { Csv, Markdown, Json };

struct FitRequest {
    std::string csv_path;
    std::string outcome;
    std::vector<std::string> endogenous;
    std::vector<std::string> instruments;
    std::vector<std::string> controls;
    // weight tokens: identity | zz | s11 | s112 | fixed:<csv path>
    std::vector<std::string> weights = {"identity"};
    // estimator tokens: gmm | rss | meboot | dr | hh
    std::vector<std::string> estimators = {"gmm", "rss", "meboot", "dr"};
    int b_draws = 500;
    int s_splits = 50;
    double alpha = 0.05;
    std::uint64_t seed = 12345;
    int threads = 0;
    FitFormat format = FitFormat::Markdown;
};

struct FitPanel {
    std::string weight_name;
    Vec point;
    Vec conv_se;
    Vec robust_se;
    Vec me_bound_se;  // identical across panels for linear models
    double j_stat = 0.0;
    double j_pvalue = std::numeric_limits<double>::quiet_NaN();
    bool j_defined = false;
    std::optional<Vec> rss_median;
    std::optional<Vec> rss_se;
    std::optional<Vec> me_boot_sd;
    std::optional<std::vector<Interval>> dr_ci;
    std::optional<std::vector<Interval>> hh_ci;
};

struct FitDiagnostics {
    double first_stage_f = std::numeric_limits<double>::quiet_NaN();
    double reset_f = std::numeric_limits<double>::quiet_NaN();
    double reset_pvalue = std::numeric_limits<double>::quiet_NaN();
    Eigen::Index n_used = 0;
    Eigen::Index n_dropped = 0;
    Eigen::Index num_moments = 0;
    Eigen::Index num_params = 0;
    // a covariance inversion hit the condition cap and fell back to the
    // generalized inverse
    bool pseudo_inverse_used = false;
};

struct FitReport {
    std::vector<std::string> param_names;  // endogenous then controls
    std::vector<FitPanel> panels;
    FitDiagnostics diagnostics;
};

FitReport run_fit(const FitRequest& request);

std::string format_fit(const FitReport& report, FitFormat format);

// Parse "a,b,c" into tokens (used by the command line for column lists).
std::vector<std::string> split_list(const std::string& text);

}  // namespace megmm
