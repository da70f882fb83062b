#include "fvb/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fvb/error.hpp"

namespace fvb {

int Table::column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == name) return static_cast<int>(i);
    }
    return -1;
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(delim, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double parse_cell(const std::string& raw, std::size_t row, const std::string& col) {
    std::string s = strip(raw);
    double v;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw SchemaError("cell at row " + std::to_string(row) + ", column '" + col +
                          "' is not numeric: '" + s + "'");
    }
    if (!std::isfinite(v)) {
        throw SchemaError("cell at row " + std::to_string(row) + ", column '" + col +
                          "' is not finite");
    }
    return v;
}

}  // namespace

Table parse_table(const std::string& text, char delim) {
    std::istringstream in(text);
    std::string line;
    Table t;
    std::vector<std::vector<double>> rows;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (strip(line).empty()) continue;
        auto cells = split_line(line, delim);
        if (!have_header) {
            for (auto& c : cells) t.columns.push_back(strip(c));
            have_header = true;
            continue;
        }
        if (cells.size() != t.columns.size()) {
            throw SchemaError("row " + std::to_string(line_no) + " has " +
                              std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(t.columns.size()));
        }
        std::vector<double> row(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            row[j] = parse_cell(cells[j], rows.size() + 1, t.columns[j]);
        }
        rows.push_back(std::move(row));
    }
    if (!have_header) throw SchemaError("table is empty: no header row");
    if (rows.empty()) throw SchemaError("table has a header but no data rows");
    t.values.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(t.columns.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return t;
}

Table read_table(const std::string& path, char delim) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_table(buf.str(), delim);
    } catch (const SchemaError& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

std::string format_double(double x) {
    if (x == 0.0) return std::signbit(x) ? "-0" : "0";
    if (x == static_cast<double>(static_cast<long long>(x)) &&
        std::fabs(x) < 1e15) {
        // integral values print without an exponent or trailing zeros
        return std::to_string(static_cast<long long>(x));
    }
    char buf[40];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;
    return std::string(buf, ptr);
}

std::string format_table(const Table& table, char delim) {
    std::ostringstream out;
    for (std::size_t j = 0; j < table.columns.size(); ++j) {
        if (j) out << delim;
        out << table.columns[j];
    }
    out << '\n';
    for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
        for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
            if (j) out << delim;
            out << format_double(table.values(i, j));
        }
        out << '\n';
    }
    return out.str();
}

void write_table(const std::string& path, const Table& table, char delim) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << format_table(table, delim);
    if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace fvb
