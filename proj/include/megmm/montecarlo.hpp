// Simulation designs, analytic oracles for pseudo-true values and variances,
// and the replication driver producing SD / coverage / CI-length tables.

#pragma once

#include <optional>
#include <string>

#include "megmm/resample.hpp"

namespace megmm {

enum class Estimator { GmmConventional, GmmRobust, OracleMe, RssMe, Hh, Dr };

std::string estimator_name(Estimator e);
Estimator parse_estimator(const std::string& name);

// Linear IV design with two instruments:
//   y = theta x + delta z2 + eps,  x = pi z1 + 2 pi z2 + v,
//   z ~ N(0, I2), (eps, v) ~ N(0, [1, .5; .5, 1]).
// delta > 0 violates the exclusion restriction through z2.
struct LinearIvDesign {
    double theta = 1.0;
    double delta = 0.0;
    double pi = 1.0;

    Vec pi_vector() const {
        Vec out(2);
        out << pi, 2.0 * pi;
        return out;
    }
    Vec direct_effect() const {
        Vec out(2);
        out << 0.0, delta;
        return out;
    }
};

// The closed-form example design: theta = 0, unit first stage, delta = 1.
inline LinearIvDesign analytic_design() { return {0.0, 1.0, 1.0}; }

DataSet gen_linear_iv(const LinearIvDesign& design, Eigen::Index n, Rng& rng);

struct SimConfig {
    Eigen::Index n = 1000;
    double delta = 0.0;
    double concentration = 50.0;  // target mu^2 / m at the calibration size
    // the first-stage coefficient is calibrated once at this sample size and
    // held fixed as n varies, so identification strengthens with n
    Eigen::Index calibration_n = 200;
    WeightSpec weight;
    std::vector<Estimator> estimators;
    int replications = 500;
    int b_draws = 500;   // bootstrap replicates per Monte Carlo draw
    int s_splits = 50;   // sample-split repetitions
    std::uint64_t seed = 0;
    double alpha = 0.05;
    int threads = 0;

    LinearIvDesign design() const {
        return {1.0, delta,
                concentration_to_pi(concentration, calibration_n)};
    }

    static double concentration_to_pi(double target, Eigen::Index n);
};

// Population minimizer of the weighted moment norm for the linear design
// with unit instrument covariance: (Pi'W Pi)^-1 Pi'W (Pi theta + gamma).
Vec pseudo_true_linear(const Mat& pi, const Vec& gamma, const Vec& theta,
                       const Mat& weight);

// Plug-in pseudo-true value: resolve the weight and fit on one large
// generated sample. Used for coverage scoring with data-dependent weights,
// where no closed form exists.
double pseudo_true_datadependent(const SimConfig& config,
                                 Eigen::Index oracle_n = 1000000);

// Population recentering for the design at the pseudo-true value.
Recentering population_recentering(const LinearIvDesign& design,
                                   double pseudo_true);

// Closed forms for the example design under weight [1 rho; rho 1].
struct AnalyticExample {
    double rho;
    double theta_w;
    double v_gmm;
    double v_me;
    double w1;  // decomposition weight on the first instrument
    double w2;
    double efficiency_gain;  // 1 - v_me / v_gmm
};

AnalyticExample analytic_example(double rho);

struct EstimatorMetrics {
    Estimator kind;
    double point_mean = 0.0;
    double sd = 0.0;  // MC std of points; average bootstrap SD for HH / DR
    double coverage = 0.0;
    double len_median = 0.0;
    double len_mean = 0.0;
    int failures = 0;
    int scored = 0;
};

struct SimResult {
    double pseudo_true = 0.0;
    std::vector<EstimatorMetrics> metrics;

    const EstimatorMetrics& metric(Estimator e) const;
};

// Run one design cell: per replication, generate data, fit each requested
// estimator and its interval, score against the pseudo-true oracle.
// Deterministic given the config (including seed) at any thread count.
SimResult run_mc(const SimConfig& config);

}  // namespace megmm
