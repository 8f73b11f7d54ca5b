#include "megmm/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace megmm {

Eigen::Index CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<Eigen::Index>(i);
    throw std::invalid_argument("csv: no column named '" + name + "'");
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" ||
           cell == "nan" || cell == ".";
}

bool parse_double(const std::string& cell, double& out) {
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    const auto res = std::from_chars(first, last, out);
    return res.ec == std::errc{} && res.ptr == last;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("csv: cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line))
        throw std::invalid_argument("csv: empty file '" + path + "'");
    CsvTable table;
    for (const auto& h : split_line(line)) table.header.push_back(trim(h));
    if (table.header.empty())
        throw std::invalid_argument("csv: missing header row");

    const std::size_t width = table.header.size();
    std::vector<double> values;
    Eigen::Index kept = 0;
    table.dropped = 0;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        const auto cells = split_line(line);
        if (cells.size() != width)
            throw std::invalid_argument(
                "csv: row " + std::to_string(lineno) + " has " +
                std::to_string(cells.size()) + " cells, expected " +
                std::to_string(width));
        bool missing = false;
        std::vector<double> row(width);
        for (std::size_t j = 0; j < width; ++j) {
            const std::string cell = trim(cells[j]);
            if (is_missing(cell)) {
                missing = true;
                break;
            }
            if (!parse_double(cell, row[j]))
                throw std::invalid_argument(
                    "csv: row " + std::to_string(lineno) +
                    ": cannot parse '" + cell + "'");
        }
        if (missing) {
            ++table.dropped;
            continue;
        }
        values.insert(values.end(), row.begin(), row.end());
        ++kept;
    }

    table.values.resize(kept, static_cast<Eigen::Index>(width));
    for (Eigen::Index i = 0; i < kept; ++i)
        for (Eigen::Index j = 0; j < table.values.cols(); ++j)
            table.values(i, j) =
                values[static_cast<std::size_t>(i) * width +
                       static_cast<std::size_t>(j)];
    return table;
}

std::string format_csv(const std::vector<std::string>& header,
                       const Mat& values) {
    std::string out;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j > 0) out += ',';
        out += header[j];
    }
    out += '\n';
    char buf[64];
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        for (Eigen::Index j = 0; j < values.cols(); ++j) {
            if (j > 0) out += ',';
            std::snprintf(buf, sizeof(buf), "%.17g", values(i, j));
            out += buf;
        }
        out += '\n';
    }
    return out;
}

void write_csv(const std::string& path,
               const std::vector<std::string>& header, const Mat& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("csv: cannot write '" + path + "'");
    out << format_csv(header, values);
}

}  // namespace megmm
