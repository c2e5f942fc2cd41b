#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imiwae/adam.hpp"
#include "imiwae/missingness.hpp"
#include "imiwae/mlp.hpp"
#include "imiwae/rng.hpp"

namespace imiwae {

// Encoder scale floor and observation-variance floor.
constexpr double kSigmaFloor = 1e-6;
constexpr double kGammaFloor = 1e-4;

struct ModelConfig {
    int p = 0;
    int kappa1 = 1;          // data latent dimension
    int kappa2 = 1;          // missingness latent dimension; 0 disables z~
    int hidden = 128;        // H
    int hidden_layers = 2;   // hidden layers in data encoder/decoder
    int miss_hidden = 128;   // hidden width of the nonlinear missingness net
    Linearity miss_linearity = Linearity::linear;
    bool no_self_censoring = true;  // false gives the self-censoring ablation
    int K = 20;              // importance samples in the objective
    double gamma_init = 0.25;
    bool mask_channel = false;  // append the mask to the encoder input
    std::string data_decoder = "gaussian";

    void validate() const;
    int encoder_input_dim() const { return mask_channel ? 2 * p : p; }
    std::vector<int> encoder_dims(int out) const;
    std::vector<int> decoder_dims() const;
    std::vector<int> missingness_dims() const;
};

struct ModelGrads;

// theta = {dec_mu_x, raw_gamma}, psi = {miss}, phi = {enc_mu_z, enc_s_z},
// lambda = {enc_mu_zt, enc_s_zt}.
struct ModelParams {
    ModelConfig config;
    Mlp enc_mu_z, enc_s_z;
    Mlp enc_mu_zt, enc_s_zt;  // unused when kappa2 == 0
    Mlp dec_mu_x;
    Mlp miss;                 // shared net (p + kappa2) -> p, remask trick per j
    double raw_gamma = 0.0;   // gamma = kGammaFloor + softplus(raw_gamma)

    static ModelParams init(const ModelConfig& config, SeededRng& rng);

    double gamma() const;
    void set_gamma(double gamma);
    bool all_finite() const;
    Eigen::Index param_count() const;

    std::vector<ParamBlock> param_blocks();
    std::vector<GradBlock> grad_blocks(const ModelGrads& grads) const;
};

struct ModelGrads {
    MlpGrad enc_mu_z, enc_s_z, enc_mu_zt, enc_s_zt, dec_mu_x, miss;
    double d_raw_gamma = 0.0;

    static ModelGrads zeros_like(const ModelParams& params);
    void set_zero();
};

struct Encoding {
    Eigen::VectorXd mu_z, sigma_z;    // kappa1
    Eigen::VectorXd mu_zt, sigma_zt;  // kappa2 (size 0 when disabled)
};

// Input is the zero-filled row (mask appended when configured). Scales are
// softplus-transformed and floored, so they are strictly positive.
Encoding encode(const ModelParams& params, const Eigen::VectorXd& x_zero_filled,
                const Eigen::VectorXi* mask = nullptr);

Eigen::VectorXd decode_data(const ModelParams& params, const Eigen::VectorXd& z);

// pi_j = sigmoid(f_r((xbar with slot j zeroed when no_self_censoring), z~)[j]);
// one weight-shared net evaluated p times.
Eigen::VectorXd decode_missingness(const ModelParams& params, const Eigen::VectorXd& xbar,
                                   const Eigen::VectorXd& zt);

// Noise for one row or a whole minibatch: column i*K + k belongs to row i,
// importance sample k. Draw order per (row, k): eps_z, eps_zt, eps_x.
struct NoisePack {
    Eigen::MatrixXd eps_z;   // kappa1 x (rows*K)
    Eigen::MatrixXd eps_zt;  // kappa2 x (rows*K)
    Eigen::MatrixXd eps_x;   // p x (rows*K)

    static NoisePack draw(const ModelConfig& config, int rows, int K, SeededRng& rng);
};

struct ImportanceSample {
    Eigen::VectorXd z, zt, xhat, xbar;
    double log_w = 0.0;
    double ll_x = 0.0, ll_r = 0.0, lp_z = 0.0, lp_zt = 0.0, lq_z = 0.0, lq_zt = 0.0;
};

struct ImportanceBatch {
    std::vector<ImportanceSample> samples;
};

// The raw material of both the objective and SNIS imputation. Throws
// NumericError with a component breakdown if any log-weight is non-finite.
ImportanceBatch importance_weights(const ModelParams& params, const Eigen::VectorXd& x_row,
                                   const Eigen::VectorXi& mask, SeededRng& rng, int K);

// L_hat_K = logsumexp(log w) - log K for one row.
double objective_lhat_k(const ImportanceBatch& batch);

// Training-path objective over a zero-filled minibatch (columns = rows of the
// table). Returns per-row L_hat_K. When grads is non-null, accumulates the
// gradient of sum_i coef[i] * L_hat_i.
Eigen::VectorXd batch_lhat(const ModelParams& params, const Eigen::MatrixXd& x_tilde,
                           const Eigen::MatrixXi& mask, const NoisePack& noise,
                           ModelGrads* grads = nullptr, const Eigen::VectorXd* coef = nullptr);

// Internal row-level forward shared with the imputer: per-sample tensors and
// log-weight components for one row and K = eps columns.
struct RowForward {
    Eigen::MatrixXd z, zt, mu_x, xhat, xbar;
    Eigen::VectorXd ll_x, ll_r, lp_z, lp_zt, lq_z, lq_zt, log_w;
    Encoding enc;
};
void row_forward(const ModelParams& params, const Eigen::VectorXd& x_tilde,
                 const Eigen::VectorXi& mask, const Eigen::MatrixXd& eps_z,
                 const Eigen::MatrixXd& eps_zt, const Eigen::MatrixXd& eps_x, RowForward& out);

}  // namespace imiwae
