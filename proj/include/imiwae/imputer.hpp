#pragma once

#include <cstdint>
#include <string>

#include "imiwae/data_table.hpp"
#include "imiwae/model.hpp"

namespace imiwae {

enum class ImputeMode { mnar, mar };

std::string to_string(ImputeMode m);
ImputeMode impute_mode_from_string(const std::string& s);

struct ImputeConfig {
    int B = 10000;  // importance samples per row
    ImputeMode mode = ImputeMode::mnar;
    uint64_t seed = 0;
    // Rows are processed in sample chunks of at most this many columns of
    // missingness-net input, to bound memory at large B and p.
    int max_chunk = 4096;

    void validate() const;
};

struct ImputedTable {
    DataTable table;                 // observed cells bit-identical to the input
    Eigen::VectorXd ess;             // effective sample size per row
    Eigen::MatrixXi original_mask;
};

// Self-normalized importance sampling with proposal q(z|.) q(z~|.) p(x_m|z).
// mnar keeps the p(r|xbar, z~) factor in the weights, mar drops it (the
// ignorable-missingness estimator E[x_m | x_r]). Rows are seeded by content,
// so row order does not change per-row outputs.
ImputedTable impute(const ModelParams& params, const DataTable& table, const ImputeConfig& config);

// Synthetic data from the learned model: z ~ N(0, I), x ~ N(f(z), gamma I).
DataTable generate(const ModelParams& params, Eigen::Index n, uint64_t seed);

// Column means of observed entries imputed into missing cells; the classical
// baseline the model is compared against.
DataTable impute_column_mean(const DataTable& table);

}  // namespace imiwae
