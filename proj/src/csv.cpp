#include "imiwae/csv.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "imiwae/errors.hpp"

namespace imiwae {

namespace {

std::vector<std::string> split_csv_line(const std::string& line, size_t row_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c == '\r') {
            // tolerate CRLF
        } else {
            cur.push_back(c);
        }
    }
    if (in_quotes)
        throw ParseError("unterminated quote at row " + std::to_string(row_no));
    fields.push_back(cur);
    return fields;
}

bool is_missing(const std::string& cell, const CsvOptions& opts) {
    if (cell.empty()) return true;
    return std::find(opts.missing_tokens.begin(), opts.missing_tokens.end(), cell) !=
           opts.missing_tokens.end();
}

bool parse_number(const std::string& cell, double& out) {
    const char* begin = cell.c_str();
    char* end = nullptr;
    errno = 0;
    out = std::strtod(begin, &end);
    if (end == begin || errno == ERANGE) return false;
    while (*end == ' ' || *end == '\t') ++end;
    return *end == '\0';
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

}  // namespace

CsvLoadResult parse_csv(const std::string& text, const CsvOptions& opts) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    size_t row_no = 0;
    while (std::getline(in, line)) {
        ++row_no;
        if (line.empty() || line == "\r") continue;
        rows.push_back(split_csv_line(line, row_no));
    }
    if (rows.empty()) throw ParseError("empty CSV input");

    const size_t p = rows[0].size();
    for (size_t i = 0; i < rows.size(); ++i)
        if (rows[i].size() != p)
            throw ParseError("ragged row " + std::to_string(i + 1) + ": expected " +
                             std::to_string(p) + " fields, got " + std::to_string(rows[i].size()));

    // Header detection: first row counts as header if any cell is neither
    // numeric nor a missing token.
    std::vector<std::string> header;
    size_t first_data = 0;
    {
        bool all_numeric = true;
        for (const auto& cell : rows[0]) {
            double v;
            std::string c = trim(cell);
            if (!is_missing(c, opts) && !parse_number(c, v)) {
                all_numeric = false;
                break;
            }
        }
        if (!all_numeric) {
            for (const auto& cell : rows[0]) header.push_back(trim(cell));
            first_data = 1;
            if (rows.size() == 1) throw ParseError("CSV has a header but no data rows");
        }
    }

    const size_t n = rows.size() - first_data;
    DataTable table;
    table.column_names = header;
    table.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    table.mask.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < p; ++j) {
            std::string cell = trim(rows[i + first_data][j]);
            if (is_missing(cell, opts)) {
                table.values(i, j) = std::numeric_limits<double>::quiet_NaN();
                table.mask(i, j) = 0;
                continue;
            }
            double v;
            if (!parse_number(cell, v))
                throw ParseError("non-numeric cell '" + cell + "' at row " +
                                 std::to_string(i + first_data + 1) + ", column " +
                                 std::to_string(j + 1));
            table.values(i, j) = v;
            table.mask(i, j) = 1;
        }
    }

    CsvLoadResult res;
    res.dropped_fully_missing = table.count_fully_missing();
    res.table = res.dropped_fully_missing > 0 ? table.drop_fully_missing() : std::move(table);
    return res;
}

CsvLoadResult load_csv(const std::string& path, const CsvOptions& opts) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str(), opts);
}

std::string format_csv(const DataTable& table, const CsvOptions& opts) {
    const std::string missing =
        opts.missing_tokens.empty() ? std::string("NaN") : opts.missing_tokens.front();
    std::ostringstream out;
    out.precision(17);
    if (!table.column_names.empty()) {
        for (Eigen::Index j = 0; j < table.cols(); ++j) {
            if (j) out << ',';
            const std::string& name = table.column_names[j];
            if (name.find_first_of(",\"\n") != std::string::npos) {
                out << '"';
                for (char c : name) {
                    if (c == '"') out << "\"\"";
                    else out << c;
                }
                out << '"';
            } else {
                out << name;
            }
        }
        out << '\n';
    }
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
        for (Eigen::Index j = 0; j < table.cols(); ++j) {
            if (j) out << ',';
            if (table.mask(i, j) == 1)
                out << table.values(i, j);
            else
                out << missing;
        }
        out << '\n';
    }
    return out.str();
}

void write_csv(const std::string& path, const DataTable& table, const CsvOptions& opts) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open file for writing: " + path);
    f << format_csv(table, opts);
}

}  // namespace imiwae
