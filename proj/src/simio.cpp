#include "megmm/simio.hpp"

#include <algorithm>
#include <cstdio>

#include "json.hpp"

namespace megmm {

namespace {

using nlohmann::json;

[[noreturn]] void field_error(const std::string& field,
                              const std::string& what) {
    throw std::invalid_argument("config: field '" + field + "' " + what);
}

template <typename T>
std::vector<T> scalar_or_array(const json& j, const std::string& field) {
    std::vector<T> out;
    if (j.is_array()) {
        for (const auto& v : j) out.push_back(v.get<T>());
    } else {
        out.push_back(j.get<T>());
    }
    if (out.empty()) field_error(field, "must be a nonempty array or scalar");
    return out;
}

std::string fmt(double v, const char* spec = "%.6g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

}  // namespace

WeightSpec parse_weight_token(const std::string& token) {
    if (token == "identity") return WeightSpec::identity();
    if (token == "zz") return WeightSpec::instrument_gram();
    if (token == "s11") return WeightSpec::moment_var_inv();
    if (token == "s112") return WeightSpec::residual_var_inv();
    throw std::invalid_argument("unknown weight token '" + token +
                                "' (expected identity|zz|s11|s112)");
}

SimGrid parse_sim_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") +
                                    e.what());
    }

    SimGrid grid;
    try {
        if (!j.contains("n")) field_error("n", "is required");
        for (const auto n : scalar_or_array<long long>(j.at("n"), "n")) {
            if (n < 50) field_error("n", "must be at least 50");
            grid.ns.push_back(static_cast<Eigen::Index>(n));
        }
        if (!j.contains("delta")) field_error("delta", "is required");
        grid.deltas = scalar_or_array<double>(j.at("delta"), "delta");
        for (const double d : grid.deltas)
            if (d < 0.0) field_error("delta", "must be nonnegative");

        grid.base.concentration = j.value("concentration", 50.0);
        if (grid.base.concentration <= 0.0)
            field_error("concentration", "must be positive");

        if (!j.contains("weight")) field_error("weight", "is required");
        const auto& jw = j.at("weight");
        if (jw.is_string()) {
            grid.base.weight = parse_weight_token(jw.get<std::string>());
        } else if (jw.is_object()) {
            const std::string kind = jw.value("kind", "");
            if (kind == "fixed") {
                if (!jw.contains("matrix"))
                    field_error("weight.matrix", "is required for fixed");
                const auto rows = jw.at("matrix");
                const auto r = static_cast<Eigen::Index>(rows.size());
                Mat w(r, r);
                for (Eigen::Index i = 0; i < r; ++i) {
                    const auto& row = rows.at(static_cast<std::size_t>(i));
                    if (static_cast<Eigen::Index>(row.size()) != r)
                        field_error("weight.matrix", "must be square");
                    for (Eigen::Index c = 0; c < r; ++c)
                        w(i, c) = row.at(static_cast<std::size_t>(c))
                                      .get<double>();
                }
                grid.base.weight = WeightSpec::fixed_matrix(std::move(w));
            } else {
                grid.base.weight = parse_weight_token(kind);
                if (jw.contains("preliminary"))
                    grid.base.weight.preliminary =
                        std::make_shared<WeightSpec>(parse_weight_token(
                            jw.at("preliminary").get<std::string>()));
            }
        } else {
            field_error("weight", "must be a string or object");
        }

        if (!j.contains("estimators") || !j.at("estimators").is_array() ||
            j.at("estimators").empty())
            field_error("estimators", "must be a nonempty array");
        for (const auto& e : j.at("estimators"))
            grid.base.estimators.push_back(
                parse_estimator(e.get<std::string>()));

        grid.base.replications = j.value("replications", 500);
        if (grid.base.replications < 100)
            field_error("replications",
                        "must be at least 100 for reported tables");
        grid.base.b_draws = j.value("B", 500);
        if (grid.base.b_draws < 1) field_error("B", "must be positive");
        grid.base.s_splits = j.value("S", 50);
        if (grid.base.s_splits < 1) field_error("S", "must be positive");
        grid.base.seed = j.value("seed", std::uint64_t{12345});
        grid.base.alpha = j.value("alpha", 0.05);
        if (grid.base.alpha <= 0.0 || grid.base.alpha >= 1.0)
            field_error("alpha", "must lie in (0, 1)");
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    return grid;
}

GridResult run_grid(const SimGrid& grid) {
    GridResult out;
    const bool single = grid.ns.size() == 1 && grid.deltas.size() == 1;
    std::size_t cell_index = 0;
    for (const auto n : grid.ns) {
        for (const double delta : grid.deltas) {
            SimConfig config = grid.base;
            config.n = n;
            config.delta = delta;
            config.seed = single ? grid.base.seed
                                 : derive_seed(grid.base.seed, cell_index);
            ++cell_index;
            out.cells.push_back({n, delta, run_mc(config)});
        }
    }

    // normalization: GMM point SD at the smallest-n correctly specified cell
    const Eigen::Index n_min =
        *std::min_element(grid.ns.begin(), grid.ns.end());
    for (const auto& cell : out.cells) {
        if (cell.n != n_min || cell.delta != 0.0) continue;
        for (const auto& m : cell.result.metrics) {
            if (m.kind == Estimator::GmmConventional ||
                m.kind == Estimator::GmmRobust) {
                out.normalization = m.sd;
                break;
            }
        }
        break;
    }
    return out;
}

std::string grid_csv(const SimGrid& grid, const GridResult& result) {
    (void)grid;
    std::string out =
        "n,delta,estimator,sd,sd_normalized,coverage,len_median,len_mean,"
        "failures,scored,pseudo_true\n";
    char buf[512];
    for (const auto& cell : result.cells) {
        for (const auto& m : cell.result.metrics) {
            const double sd_norm =
                result.normalization ? m.sd / *result.normalization
                                     : std::numeric_limits<double>::quiet_NaN();
            std::snprintf(
                buf, sizeof(buf),
                "%lld,%.17g,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%d,%.17g\n",
                static_cast<long long>(cell.n), cell.delta,
                estimator_name(m.kind).c_str(), m.sd, sd_norm, m.coverage,
                m.len_median, m.len_mean, m.failures, m.scored,
                cell.result.pseudo_true);
            out += buf;
        }
    }
    return out;
}

std::string grid_table(const SimGrid& grid, const GridResult& result) {
    std::string out;
    out += "Monte Carlo results (weight = " +
           weight_kind_name(grid.base.weight.kind) + ")\n";
    if (result.normalization)
        out += "SD normalized by the benchmark GMM SD (" +
               fmt(*result.normalization) + ")\n";
    else
        out += "SD unnormalized (no delta = 0 benchmark cell present)\n";

    constexpr int name_w = 12;
    constexpr int col_w = 9;
    auto pad = [](const std::string& s, int w) {
        return s.size() >= static_cast<std::size_t>(w)
                   ? s
                   : s + std::string(static_cast<std::size_t>(w) - s.size(),
                                     ' ');
    };
    auto num = [&](double v) { return pad(fmt(v, "%.4g"), col_w); };

    for (const auto n : grid.ns) {
        out += "\nn = " + std::to_string(static_cast<long long>(n)) + "\n";
        out += pad("Estimator", name_w);
        for (const double d : grid.deltas) {
            out += "| " + pad("delta=" + fmt(d), 4 * col_w);
        }
        out += "\n" + pad("", name_w);
        for (std::size_t k = 0; k < grid.deltas.size(); ++k) {
            out += "| " + pad("SD", col_w) + pad("Cov", col_w) +
                   pad("MedLen", col_w) + pad("MeanLen", col_w);
        }
        out += "\n";
        for (const Estimator e : grid.base.estimators) {
            out += pad(estimator_name(e), name_w);
            for (const double d : grid.deltas) {
                const GridCell* cell = nullptr;
                for (const auto& c : result.cells)
                    if (c.n == n && c.delta == d) cell = &c;
                out += "| ";
                if (cell == nullptr) {
                    out += pad("-", 4 * col_w);
                    continue;
                }
                const auto& m = cell->result.metric(e);
                const double sd = result.normalization
                                      ? m.sd / *result.normalization
                                      : m.sd;
                out += num(sd) + num(m.coverage) + num(m.len_median) +
                       num(m.len_mean);
            }
            out += "\n";
        }
    }
    return out;
}

std::string grid_metadata(const SimGrid& grid, const GridResult& result) {
    nlohmann::ordered_json meta;
    meta["seed"] = grid.base.seed;
    meta["replications"] = grid.base.replications;
    meta["B"] = grid.base.b_draws;
    meta["S"] = grid.base.s_splits;
    meta["alpha"] = grid.base.alpha;
    meta["concentration"] = grid.base.concentration;
    meta["weight"] = weight_kind_name(grid.base.weight.kind);
    meta["n"] = std::vector<long long>(grid.ns.begin(), grid.ns.end());
    meta["delta"] = grid.deltas;
    std::vector<std::string> est;
    est.reserve(grid.base.estimators.size());
    for (const auto e : grid.base.estimators)
        est.push_back(estimator_name(e));
    meta["estimators"] = est;
    if (result.normalization)
        meta["normalization"] = *result.normalization;
    else
        meta["normalization"] = nullptr;
    std::vector<nlohmann::ordered_json> cells;
    for (const auto& c : result.cells) {
        nlohmann::ordered_json jc;
        jc["n"] = static_cast<long long>(c.n);
        jc["delta"] = c.delta;
        jc["pseudo_true"] = c.result.pseudo_true;
        cells.push_back(std::move(jc));
    }
    meta["cells"] = cells;
    return meta.dump(2) + "\n";
}

}  // namespace megmm
