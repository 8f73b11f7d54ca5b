// Minimal CSV layer: comma-separated, required header row, '.' decimal.
// Rows containing empty or NA cells are dropped with a count.

#pragma once

#include <string>
#include <vector>

#include "megmm/linalg.hpp"

namespace megmm {

struct CsvTable {
    std::vector<std::string> header;
    Mat values;            // numeric cells, rows after drops
    Eigen::Index dropped;  // rows removed because of missing values

    Eigen::Index column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

// Full double precision; header first. Round-trips through read_csv.
void write_csv(const std::string& path,
               const std::vector<std::string>& header, const Mat& values);

std::string format_csv(const std::vector<std::string>& header,
                       const Mat& values);

}  // namespace megmm
