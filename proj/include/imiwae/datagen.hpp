#pragma once

#include <array>
#include <cstdint>

#include "imiwae/data_table.hpp"
#include "imiwae/mlp.hpp"

namespace imiwae {

// Nonlinear latent-factor data: X_j = f_j(Z) + eps_j with Z ~ N(0, I_q1),
// f_j a one-hidden-layer tanh map with seeded uniform(-1,1) coefficients,
// and eps_j ~ N(0, noise_std^2).
struct LatentFactorSpec {
    Eigen::Index n = 0;
    int p = 0;
    int q1 = 1;
    double noise_std = 0.1;
    int hidden_width = 8;
    uint64_t seed = 0;

    void validate() const;
};

DataTable gen_latent_factor_data(const LatentFactorSpec& spec);

// The per-column maps themselves, for tests that need X - f(Z).
std::vector<Mlp> latent_factor_maps(const LatentFactorSpec& spec);

// 3-dimensional Gaussian mixture indexed by missingness pattern:
// R ~ multinomial(pattern_probs), X | R = r ~ N(Sigma0 h(r), Sigma0).
// Patterns are indexed little-endian: idx = r1 + 2 r2 + 4 r3.
struct GaussianMixtureSpec {
    std::array<double, 8> pattern_probs{};
    std::array<Eigen::Vector3d, 8> h{};
    Eigen::Matrix3d sigma0 = Eigen::Matrix3d::Identity();
    Eigen::Index n = 0;
    uint64_t seed = 0;

    // The published constants; the listed probabilities sum to 1.001 and are
    // renormalized here (recorded in run reports).
    static GaussianMixtureSpec reference(Eigen::Index n, uint64_t seed);

    void validate() const;
};

// Rows with pattern (0,0,0) are kept in the table (mask all zero); training
// filters them out so mechanism statistics stay unbiased.
DataTable gen_gaussian_mixture(const GaussianMixtureSpec& spec);

// Closed-form mixture mean: sum_r p(r) * Sigma0 h(r).
Eigen::Vector3d gaussian_mixture_mean(const GaussianMixtureSpec& spec);
// Closed-form E[X_j | R_j observed], the complete-case limit for column j.
double gaussian_mixture_complete_case_mean(const GaussianMixtureSpec& spec, int j);

int pattern_index(const Eigen::VectorXi& r);                // little-endian
Eigen::VectorXi pattern_bits(int index, int p);

}  // namespace imiwae
