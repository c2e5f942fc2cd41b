#include "imiwae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "imiwae/errors.hpp"
#include "imiwae/rng.hpp"

namespace imiwae {

double imputation_rmse(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& imputed,
                       const Eigen::MatrixXi& original_mask) {
    if (truth.rows() != imputed.rows() || truth.cols() != imputed.cols() ||
        truth.rows() != original_mask.rows() || truth.cols() != original_mask.cols())
        throw ShapeError("imputation_rmse: shapes disagree");
    double acc = 0.0;
    Eigen::Index cnt = 0;
    for (Eigen::Index i = 0; i < truth.rows(); ++i) {
        for (Eigen::Index j = 0; j < truth.cols(); ++j) {
            if (original_mask(i, j) != 0) continue;
            double d = truth(i, j) - imputed(i, j);
            acc += d * d;
            ++cnt;
        }
    }
    if (cnt == 0) throw DomainError("imputation_rmse: no missing entries to score");
    return std::sqrt(acc / static_cast<double>(cnt));
}

double mmd_median_bandwidth(const Eigen::MatrixXd& pooled) {
    const Eigen::Index n = pooled.rows();
    if (n < 2) throw DomainError("mmd bandwidth: need at least 2 pooled points");
    std::vector<double> dist;
    dist.reserve(static_cast<size_t>(n) * (n - 1) / 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j)
            dist.push_back((pooled.row(i) - pooled.row(j)).norm());
    size_t mid = dist.size() / 2;
    std::nth_element(dist.begin(), dist.begin() + mid, dist.end());
    double med = dist[mid];
    if (dist.size() % 2 == 0) {
        double lower = *std::max_element(dist.begin(), dist.begin() + mid);
        med = 0.5 * (med + lower);
    }
    if (med <= 0.0) throw DomainError("mmd bandwidth: pooled sample is degenerate");
    return med;
}

double mmd_squared_with_bandwidth(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                  double bandwidth) {
    const Eigen::Index m = a.rows();
    const Eigen::Index n = b.rows();
    if (m < 2 || n < 2) throw DomainError("mmd_squared: need at least 2 points per sample");
    if (a.cols() != b.cols()) throw ShapeError("mmd_squared: dimension mismatch");
    if (bandwidth <= 0.0) throw DomainError("mmd_squared: bandwidth must be > 0");
    const double inv = -1.0 / (2.0 * bandwidth * bandwidth);

    // Squared distances via the Gram expansion; one pass per term.
    auto kernel_sum_offdiag = [&](const Eigen::MatrixXd& x) {
        Eigen::VectorXd sq = x.rowwise().squaredNorm();
        double acc = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index j = i + 1; j < x.rows(); ++j)
                acc += std::exp(inv * (sq[i] + sq[j] - 2.0 * x.row(i).dot(x.row(j))));
        return 2.0 * acc;
    };
    auto kernel_sum_cross = [&](const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
        Eigen::VectorXd sx = x.rowwise().squaredNorm();
        Eigen::VectorXd sy = y.rowwise().squaredNorm();
        double acc = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index j = 0; j < y.rows(); ++j)
                acc += std::exp(inv * (sx[i] + sy[j] - 2.0 * x.row(i).dot(y.row(j))));
        return acc;
    };

    double term_aa = kernel_sum_offdiag(a) / static_cast<double>(m * (m - 1));
    double term_bb = kernel_sum_offdiag(b) / static_cast<double>(n * (n - 1));
    double term_ab = kernel_sum_cross(a, b) / static_cast<double>(m * n);
    return term_aa + term_bb - 2.0 * term_ab;
}

double mmd_squared(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.cols() != b.cols()) throw ShapeError("mmd_squared: dimension mismatch");
    Eigen::MatrixXd pooled(a.rows() + b.rows(), a.cols());
    pooled.topRows(a.rows()) = a;
    pooled.bottomRows(b.rows()) = b;
    return mmd_squared_with_bandwidth(a, b, mmd_median_bandwidth(pooled));
}

MeanCi mean_estimate_with_ci(const Eigen::VectorXd& values, int bootstrap_reps, uint64_t seed) {
    const Eigen::Index n = values.size();
    if (n == 0) throw DomainError("mean_estimate_with_ci: empty column");
    if (bootstrap_reps < 100)
        throw DomainError("mean_estimate_with_ci: bootstrap_reps must be >= 100");

    MeanCi out;
    out.estimate = values.mean();

    SeededRng rng(seed, 0x50);
    std::vector<double> means(bootstrap_reps);
    for (int r = 0; r < bootstrap_reps; ++r) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
            acc += values[static_cast<Eigen::Index>(rng.next_below(static_cast<uint64_t>(n)))];
        means[r] = acc / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    auto percentile = [&](double q) {
        double pos = q * (bootstrap_reps - 1);
        size_t lo = static_cast<size_t>(pos);
        size_t hi = std::min(lo + 1, means.size() - 1);
        double frac = pos - static_cast<double>(lo);
        return means[lo] * (1.0 - frac) + means[hi] * frac;
    };
    out.lo = percentile(0.025);
    out.hi = percentile(0.975);
    return out;
}

}  // namespace imiwae
