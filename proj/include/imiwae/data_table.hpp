#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace imiwae {

// n x p value matrix paired with an n x p observation mask (1 = observed).
struct DataTable {
    Eigen::MatrixXd values;
    Eigen::MatrixXi mask;
    std::vector<std::string> column_names;  // may be empty

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }

    static DataTable fully_observed(Eigen::MatrixXd vals);

    // Checks mask entries in {0,1}, matching shapes, and finiteness of every
    // observed value.
    void validate() const;

    bool row_fully_missing(Eigen::Index i) const;
    Eigen::Index count_fully_missing() const;

    // Copy without the fully missing rows (Algorithm-style training filter).
    DataTable drop_fully_missing() const;

    // Values with masked cells replaced by zero; never reads masked cells.
    Eigen::MatrixXd zero_filled() const;

    double missing_rate() const;   // fraction of mask == 0
    double observed_rate() const;  // 1 - missing_rate
};

// Per-column statistics on observed entries only (population convention).
struct ColumnStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd std_dev;
};

struct StandardizeResult {
    DataTable table;
    ColumnStats stats;
};

// Observed entries of each column get mean 0 and unit variance. Masked cells
// receive the same affine transform (NaNs propagate untouched). Throws
// DomainError naming the column when a column is constant or has fewer than
// two observed entries.
StandardizeResult standardize(const DataTable& table);

DataTable destandardize(const DataTable& table, const ColumnStats& stats);
Eigen::MatrixXd destandardize_values(const Eigen::MatrixXd& values, const ColumnStats& stats);
Eigen::MatrixXd standardize_values(const Eigen::MatrixXd& values, const ColumnStats& stats);

}  // namespace imiwae
