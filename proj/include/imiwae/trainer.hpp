#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "imiwae/data_table.hpp"
#include "imiwae/model.hpp"

namespace imiwae {

struct TrainConfig {
    int batch_size = 16;
    double learning_rate = 0.001;
    int max_epochs = 10000;
    uint64_t seed = 0;
    std::string optimizer = "adam";  // or "sgd"
    // Windowed relative-improvement stopping rule; 0 disables early stopping.
    int convergence_window = 200;
    double convergence_tol = 1e-4;
    // Epoch cadence for retaining a last-good parameter snapshot.
    int checkpoint_every = 50;
    bool verbose = false;

    void validate() const;
};

struct TrainTrace {
    std::vector<double> epoch_neg_lhat;   // per-epoch mean of -L_hat_K
    std::vector<double> epoch_wall_seconds;
    std::vector<double> epoch_param_norm;
    long total_steps = 0;
    int epochs_run = 0;
    bool early_stopped = false;
};

struct TrainResult {
    ModelParams params;
    TrainTrace trace;
    bool aborted = false;
    std::string diagnostic;
};

// true iff the relative improvement of the windowed mean objective over the
// previous window is strictly below tol. Needs 2*window completed epochs.
bool early_stop(const std::vector<double>& trace, int window, double tol);

// The randomly initialized parameters train() starts from (exposed so
// untrained baselines share the exact initialization).
ModelParams initial_params(const ModelConfig& model_config, const TrainConfig& train_config);

// Algorithm: shuffle rows each epoch, take ceil(n/b) minibatches, maximize
// sum_i L_hat_K with Adam on the negated objective. Deterministic given the
// seed. On a non-finite objective the last good snapshot is returned with
// aborted = true and a diagnostic.
TrainResult train(const DataTable& table, const ModelConfig& model_config,
                  const TrainConfig& train_config);

// Same, starting from given parameters (used by ablations needing shared init).
TrainResult train_from(ModelParams params, const DataTable& table,
                       const TrainConfig& train_config);

}  // namespace imiwae
