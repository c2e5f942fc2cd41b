#pragma once

#include <cstdint>
#include <vector>

#include "imiwae/data_table.hpp"
#include "imiwae/model.hpp"
#include "imiwae/trainer.hpp"

namespace imiwae {

struct CvConfig {
    std::vector<int> candidates;  // kappa1 values to score
    int folds = 5;
    double mask_fraction = 0.2;   // fraction of observed validation entries masked MCAR
    uint64_t seed = 0;
    ModelConfig model;            // kappa1 is overridden per candidate
    TrainConfig train;
    int impute_B = 1000;

    void validate(int p) const;
};

struct CvReport {
    std::vector<int> candidates;
    int folds = 0;
    // rmse[c][f] = validation RMSE of candidate c on fold f (synthetic
    // MCAR-masked entries only, mar-mode imputation)
    std::vector<std::vector<double>> rmse;
    std::vector<double> mean_rmse;
    int selected_kappa1 = 0;        // mean-RMSE minimizer
    int selected_kappa1_elbow = 0;  // within-5%-of-best alternative selector
};

CvReport cross_validate_kappa1(const DataTable& table_with_missing, const CvConfig& config);

}  // namespace imiwae
