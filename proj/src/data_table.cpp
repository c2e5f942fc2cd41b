#include "imiwae/data_table.hpp"

#include <cmath>

#include "imiwae/errors.hpp"

namespace imiwae {

DataTable DataTable::fully_observed(Eigen::MatrixXd vals) {
    DataTable t;
    t.mask = Eigen::MatrixXi::Ones(vals.rows(), vals.cols());
    t.values = std::move(vals);
    return t;
}

void DataTable::validate() const {
    if (values.rows() != mask.rows() || values.cols() != mask.cols())
        throw ShapeError("DataTable: values and mask shapes disagree");
    for (Eigen::Index i = 0; i < rows(); ++i) {
        for (Eigen::Index j = 0; j < cols(); ++j) {
            int m = mask(i, j);
            if (m != 0 && m != 1)
                throw DomainError("DataTable: mask entry not in {0,1} at (" + std::to_string(i) +
                                  "," + std::to_string(j) + ")");
            if (m == 1 && !std::isfinite(values(i, j)))
                throw DomainError("DataTable: non-finite observed value at (" + std::to_string(i) +
                                  "," + std::to_string(j) + ")");
        }
    }
}

bool DataTable::row_fully_missing(Eigen::Index i) const { return mask.row(i).sum() == 0; }

Eigen::Index DataTable::count_fully_missing() const {
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < rows(); ++i)
        if (row_fully_missing(i)) ++n;
    return n;
}

DataTable DataTable::drop_fully_missing() const {
    DataTable out;
    out.column_names = column_names;
    Eigen::Index kept = rows() - count_fully_missing();
    out.values.resize(kept, cols());
    out.mask.resize(kept, cols());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < rows(); ++i) {
        if (row_fully_missing(i)) continue;
        out.values.row(k) = values.row(i);
        out.mask.row(k) = mask.row(i);
        ++k;
    }
    return out;
}

Eigen::MatrixXd DataTable::zero_filled() const {
    Eigen::MatrixXd out(rows(), cols());
    for (Eigen::Index i = 0; i < rows(); ++i)
        for (Eigen::Index j = 0; j < cols(); ++j) out(i, j) = mask(i, j) == 1 ? values(i, j) : 0.0;
    return out;
}

double DataTable::missing_rate() const {
    if (rows() == 0 || cols() == 0) return 0.0;
    double total = static_cast<double>(rows() * cols());
    return (total - static_cast<double>(mask.sum())) / total;
}

double DataTable::observed_rate() const { return 1.0 - missing_rate(); }

StandardizeResult standardize(const DataTable& table) {
    const Eigen::Index n = table.rows();
    const Eigen::Index p = table.cols();
    ColumnStats stats;
    stats.mean.resize(p);
    stats.std_dev.resize(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        double sum = 0.0, sumsq = 0.0;
        Eigen::Index cnt = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (table.mask(i, j) != 1) continue;
            double v = table.values(i, j);
            sum += v;
            sumsq += v * v;
            ++cnt;
        }
        std::string colname = table.column_names.empty()
                                  ? "column " + std::to_string(j)
                                  : "column '" + table.column_names[j] + "'";
        if (cnt < 2) throw DomainError("standardize: " + colname + " has fewer than 2 observed entries");
        double mean = sum / static_cast<double>(cnt);
        double var = sumsq / static_cast<double>(cnt) - mean * mean;
        if (var <= 0.0) throw DomainError("standardize: " + colname + " is constant");
        stats.mean[j] = mean;
        stats.std_dev[j] = std::sqrt(var);
    }
    StandardizeResult res;
    res.stats = stats;
    res.table = table;
    for (Eigen::Index j = 0; j < p; ++j)
        res.table.values.col(j) = (table.values.col(j).array() - stats.mean[j]) / stats.std_dev[j];
    return res;
}

Eigen::MatrixXd standardize_values(const Eigen::MatrixXd& values, const ColumnStats& stats) {
    Eigen::MatrixXd out = values;
    for (Eigen::Index j = 0; j < values.cols(); ++j)
        out.col(j) = (values.col(j).array() - stats.mean[j]) / stats.std_dev[j];
    return out;
}

Eigen::MatrixXd destandardize_values(const Eigen::MatrixXd& values, const ColumnStats& stats) {
    Eigen::MatrixXd out = values;
    for (Eigen::Index j = 0; j < values.cols(); ++j)
        out.col(j) = values.col(j).array() * stats.std_dev[j] + stats.mean[j];
    return out;
}

DataTable destandardize(const DataTable& table, const ColumnStats& stats) {
    DataTable out = table;
    out.values = destandardize_values(table.values, stats);
    return out;
}

}  // namespace imiwae
