// Simulation config ingestion (JSON) and result emission (CSV, aligned text
// table, metadata). A config describes a grid of (n, delta) design cells
// sharing the remaining settings; the correctly-specified cell at the
// smallest n, when present, provides the SD normalization constant.

#pragma once

#include <optional>

#include "megmm/montecarlo.hpp"

namespace megmm {

struct SimGrid {
    std::vector<Eigen::Index> ns;
    std::vector<double> deltas;
    SimConfig base;  // shared settings; n / delta filled per cell
};

// Parse the JSON document; schema violations raise std::invalid_argument
// naming the offending field.
SimGrid parse_sim_config(const std::string& json_text);

// "identity", "zz", "s11", "s112" (fixed matrices are handled by callers).
WeightSpec parse_weight_token(const std::string& token);

struct GridCell {
    Eigen::Index n;
    double delta;
    SimResult result;
};

struct GridResult {
    std::vector<GridCell> cells;
    // GMM point SD of the (smallest n, delta = 0) benchmark cell
    std::optional<double> normalization;
};

GridResult run_grid(const SimGrid& grid);

// Long-format CSV: one row per (cell, estimator).
std::string grid_csv(const SimGrid& grid, const GridResult& result);

// Aligned text table: estimator rows, (SD, Cov, MedLen, MeanLen) column
// blocks per delta, one panel per n.
std::string grid_table(const SimGrid& grid, const GridResult& result);

// JSON metadata: seed lineage, scale settings, normalization constant.
std::string grid_metadata(const SimGrid& grid, const GridResult& result);

}  // namespace megmm
