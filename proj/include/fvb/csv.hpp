#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace fvb {

struct Table {
    std::vector<std::string> columns;
    Eigen::MatrixXd values;  // rows x columns

    int column_index(const std::string& name) const;  // -1 when absent
};

// Parse a delimiter separated file with one header row and numeric cells.
// Rejects empty input, ragged rows, and non finite cells with SchemaError.
Table read_table(const std::string& path, char delim = ',');
Table parse_table(const std::string& text, char delim = ',');

void write_table(const std::string& path, const Table& table, char delim = ',');
std::string format_table(const Table& table, char delim = ',');

// Shortest-round-trip formatting for doubles, the same everywhere so output
// files are byte stable.
std::string format_double(double x);

}  // namespace fvb
