#include "imiwae/cross_validation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "imiwae/errors.hpp"
#include "imiwae/imputer.hpp"
#include "imiwae/metrics.hpp"

namespace imiwae {

namespace {

constexpr uint64_t kFoldStream = 0x70;
constexpr uint64_t kMaskStream = 0x71;

}  // namespace

void CvConfig::validate(int p) const {
    if (candidates.empty()) throw SpecError("CvConfig: candidate list is empty");
    for (int c : candidates) {
        if (c < 1) throw SpecError("CvConfig: kappa1 candidates must be >= 1");
        if (c > p)
            throw SpecError("CvConfig: candidate kappa1 = " + std::to_string(c) +
                            " exceeds p = " + std::to_string(p));
    }
    if (folds < 2) throw SpecError("CvConfig: folds must be >= 2");
    if (!(mask_fraction > 0.0 && mask_fraction <= 0.5))
        throw SpecError("CvConfig: mask_fraction must lie in (0, 0.5]");
}

CvReport cross_validate_kappa1(const DataTable& table, const CvConfig& config) {
    const int p = static_cast<int>(table.cols());
    config.validate(p);
    const Eigen::Index n = table.rows();
    if (n < config.folds) throw SpecError("CvConfig: fewer rows than folds");

    // Shuffled round-robin fold assignment: every row in exactly one fold.
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    SeededRng fold_rng = SeededRng(config.seed).substream(kFoldStream);
    fold_rng.shuffle(order);
    std::vector<int> fold_of(n);
    for (Eigen::Index i = 0; i < n; ++i) fold_of[order[i]] = static_cast<int>(i % config.folds);

    CvReport report;
    report.candidates = config.candidates;
    report.folds = config.folds;
    report.rmse.assign(config.candidates.size(), std::vector<double>(config.folds, 0.0));

    for (int f = 0; f < config.folds; ++f) {
        std::vector<Eigen::Index> train_rows, val_rows;
        for (Eigen::Index i = 0; i < n; ++i)
            (fold_of[i] == f ? val_rows : train_rows).push_back(i);

        DataTable train_table;
        train_table.values.resize(static_cast<Eigen::Index>(train_rows.size()), p);
        train_table.mask.resize(static_cast<Eigen::Index>(train_rows.size()), p);
        for (size_t i = 0; i < train_rows.size(); ++i) {
            train_table.values.row(i) = table.values.row(train_rows[i]);
            train_table.mask.row(i) = table.mask.row(train_rows[i]);
        }
        train_table = train_table.drop_fully_missing();

        // Synthetic MCAR mask over observed validation entries.
        DataTable val_table;
        val_table.values.resize(static_cast<Eigen::Index>(val_rows.size()), p);
        val_table.mask.resize(static_cast<Eigen::Index>(val_rows.size()), p);
        for (size_t i = 0; i < val_rows.size(); ++i) {
            val_table.values.row(i) = table.values.row(val_rows[i]);
            val_table.mask.row(i) = table.mask.row(val_rows[i]);
        }
        Eigen::MatrixXi synthetic = Eigen::MatrixXi::Zero(val_table.rows(), p);
        SeededRng mask_rng = SeededRng(config.seed).substream(kMaskStream).substream(f);
        for (Eigen::Index i = 0; i < val_table.rows(); ++i)
            for (int j = 0; j < p; ++j)
                if (val_table.mask(i, j) == 1 && mask_rng.uniform() < config.mask_fraction)
                    synthetic(i, j) = 1;

        DataTable val_masked = val_table;
        for (Eigen::Index i = 0; i < val_table.rows(); ++i)
            for (int j = 0; j < p; ++j)
                if (synthetic(i, j) == 1) val_masked.mask(i, j) = 0;

        for (size_t c = 0; c < config.candidates.size(); ++c) {
            ModelConfig mc = config.model;
            mc.p = p;
            mc.kappa1 = config.candidates[c];
            TrainConfig tc = config.train;
            tc.seed = SeededRng(config.seed).substream(1000 + f).substream(c).stream();

            TrainResult trained = train(train_table, mc, tc);

            ImputeConfig ic;
            ic.B = config.impute_B;
            ic.mode = ImputeMode::mar;  // synthetically masked entries are ignorable
            ic.seed = tc.seed;
            ImputedTable imputed = impute(trained.params, val_masked, ic);

            // Score only the synthetically masked entries (ground truth known).
            Eigen::MatrixXi score_mask = Eigen::MatrixXi::Ones(val_table.rows(), p);
            for (Eigen::Index i = 0; i < val_table.rows(); ++i)
                for (int j = 0; j < p; ++j)
                    if (synthetic(i, j) == 1) score_mask(i, j) = 0;
            report.rmse[c][f] =
                imputation_rmse(val_table.values, imputed.table.values, score_mask);
        }
    }

    report.mean_rmse.resize(config.candidates.size());
    for (size_t c = 0; c < config.candidates.size(); ++c)
        report.mean_rmse[c] =
            std::accumulate(report.rmse[c].begin(), report.rmse[c].end(), 0.0) / config.folds;

    size_t best = std::min_element(report.mean_rmse.begin(), report.mean_rmse.end()) -
                  report.mean_rmse.begin();
    report.selected_kappa1 = config.candidates[best];

    // Elbow alternative: the smallest candidate within 5% of the best score
    // (candidates scanned in ascending kappa1 order).
    std::vector<size_t> idx(config.candidates.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return config.candidates[a] < config.candidates[b]; });
    double lo = report.mean_rmse[best];
    double hi = *std::max_element(report.mean_rmse.begin(), report.mean_rmse.end());
    double cutoff = lo + 0.05 * std::max(hi - lo, 1e-12);
    report.selected_kappa1_elbow = report.selected_kappa1;
    for (size_t i : idx) {
        if (report.mean_rmse[i] <= cutoff) {
            report.selected_kappa1_elbow = config.candidates[i];
            break;
        }
    }
    return report;
}

}  // namespace imiwae
