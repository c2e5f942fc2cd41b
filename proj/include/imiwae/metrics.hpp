#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace imiwae {

// sqrt of the mean squared error over positions where original_mask == 0.
// Throws DomainError if no position is missing.
double imputation_rmse(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& imputed,
                       const Eigen::MatrixXi& original_mask);

// Median pairwise Euclidean distance of the pooled sample (rows = points).
double mmd_median_bandwidth(const Eigen::MatrixXd& pooled);

// Unbiased U-statistic estimator of squared MMD with the RBF kernel
// k(a,b) = exp(-|a-b|^2 / (2 h^2)), h = pooled median pairwise distance.
double mmd_squared(const Eigen::MatrixXd& sample_a, const Eigen::MatrixXd& sample_b);
double mmd_squared_with_bandwidth(const Eigen::MatrixXd& sample_a,
                                  const Eigen::MatrixXd& sample_b, double bandwidth);

struct MeanCi {
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

// Point estimate = mean; CI = 2.5/97.5 empirical percentiles over
// row-resampled means (percentile bootstrap).
MeanCi mean_estimate_with_ci(const Eigen::VectorXd& values, int bootstrap_reps, uint64_t seed);

}  // namespace imiwae
