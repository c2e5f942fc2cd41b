#pragma once

#include <string>
#include <vector>

#include "imiwae/data_table.hpp"

namespace imiwae {

struct CsvOptions {
    // Cells equal to any of these count as missing; the empty string is
    // always treated as missing.
    std::vector<std::string> missing_tokens = {"NaN", "nan", "NA"};
};

struct CsvLoadResult {
    DataTable table;
    Eigen::Index dropped_fully_missing = 0;
};

// Rectangular CSV with '.' decimal separator and RFC-4180 quoting. A leading
// row whose cells are not all numeric/missing is taken as the header. Fully
// missing rows are dropped and counted. Throws ParseError with row/column on
// ragged rows, non-numeric cells, or an empty file.
CsvLoadResult load_csv(const std::string& path, const CsvOptions& opts = {});
CsvLoadResult parse_csv(const std::string& text, const CsvOptions& opts = {});

// Masked cells are written as the first missing token (default "NaN").
void write_csv(const std::string& path, const DataTable& table, const CsvOptions& opts = {});
std::string format_csv(const DataTable& table, const CsvOptions& opts = {});

}  // namespace imiwae
