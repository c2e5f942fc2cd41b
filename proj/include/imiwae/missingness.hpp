#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imiwae/data_table.hpp"

namespace imiwae {

enum class Mechanism { latent, threshold, blockwise, self_censoring };
enum class Linearity { linear, nonlinear };

std::string to_string(Mechanism m);
std::string to_string(Linearity l);
Mechanism mechanism_from_string(const std::string& s);
Linearity linearity_from_string(const std::string& s);

// Declarative description of one synthetic MNAR mechanism.
struct MissingnessSpec {
    Mechanism mechanism = Mechanism::latent;
    Linearity linearity = Linearity::linear;
    // When true, X_j may enter its own logit (the robustness setting where
    // g acts on all of X).
    bool self_censoring_allowed = false;
    int latent_dim = 1;      // dimension of the ground-truth Z~ (latent mechanism)
    int group_size = 1;      // blockwise; columns are grouped contiguously
    std::vector<std::vector<int>> groups;  // optional explicit partition of {0..p-1}
    double target_lo = 0.30;
    double target_hi = 0.40;
    int hidden_width = 8;    // nonlinear h/g hidden width
    uint64_t seed = 0;

    void validate(int p) const;
    std::vector<std::vector<int>> resolved_groups(int p) const;
};

// Constant added to every mechanism logit; the missing-rate calibration knob.
struct LogitOffset {
    double value = 0.0;
};

// Per row: draw z~ ~ N(0, I), then R_j ~ Bernoulli(sigmoid(h_j(X_{-j}, z~) + offset)).
DataTable apply_latent_mechanism(const DataTable& table, const MissingnessSpec& spec,
                                 LogitOffset offset = {});

// Per row: one shared U ~ Uniform(0,1); R_j = 1 iff U > sigmoid(g_j(X_{-j}) + offset).
// With self_censoring_allowed, g_j sees all of X.
DataTable apply_threshold_mechanism(const DataTable& table, const MissingnessSpec& spec,
                                    LogitOffset offset = {});

// Threshold construction with one indicator per column group, driven by the
// variables outside the group.
DataTable apply_blockwise(const DataTable& table, const MissingnessSpec& spec,
                          LogitOffset offset = {});

// First ceil(p/2) columns stay observed; each remaining column is missing
// exactly where its value strictly exceeds the column mean.
DataTable apply_self_censoring(const DataTable& table);

// Bisection on the offset until the missing rate over surviving rows (rows
// that are not fully missing) lands in [target_lo, target_hi]; the rate is
// estimated with a fixed calibration noise stream. Throws CalibrationError
// if 60 bisection steps cannot reach the interval.
LogitOffset calibrate_offset(const DataTable& table, const MissingnessSpec& spec);

// Calibrate (where applicable) and apply.
DataTable apply_mechanism(const DataTable& table, const MissingnessSpec& spec);

// Missing rate over rows that are not fully missing (the training population).
double surviving_missing_rate(const DataTable& table);

// Per-cell missingness probabilities of the realized mechanism (the Bernoulli
// means sigma(logit + offset)); the latent form conditions on the drawn z~.
// Not defined for self_censoring.
Eigen::MatrixXd missingness_probabilities(const DataTable& table, const MissingnessSpec& spec,
                                          LogitOffset offset = {});

}  // namespace imiwae
