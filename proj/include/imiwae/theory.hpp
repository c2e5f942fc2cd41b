#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "imiwae/rng.hpp"

namespace imiwae::theory {

// Positive weight laws with closed-form moments, the substrate the bound and
// bias/variance statements are checked on.
struct WeightLaw {
    enum class Family { lognormal, two_point, constant };
    Family family = Family::lognormal;
    // lognormal: log w ~ N(mu0, sigma^2); two_point: P(w=a)=q, P(w=b)=1-q;
    // constant: w = c.
    double mu0 = 0.0, sigma = 0.5;
    double a = 1.0, b = 2.0, q = 0.5;
    double c = 1.0;

    static WeightLaw lognormal(double mu0, double sigma);
    static WeightLaw two_point(double a, double b, double q);
    static WeightLaw constant(double c);

    double mean() const;              // mu = E[w]
    double log_mean() const;          // log mu
    double central_moment2() const;   // mu_2
    double central_moment3() const;   // mu_3
    double sample(SeededRng& rng) const;
    std::string describe() const;
};

// Monte Carlo L_K = E[log(mean of K i.i.d. w)] over a grid of K values with
// common random numbers: larger-K estimates reuse the smaller-K draws, so
// monotonicity is checked on shared paths.
struct MonotoneReport {
    std::vector<int> Ks;
    std::vector<double> L;       // estimate per K
    std::vector<double> se;      // standard error per K
    double log_mean = 0.0;
    bool nondecreasing_within_2se = false;
    bool bounded_by_log_mean = false;
    bool pass = false;
};
MonotoneReport check_monotone_bounds(const WeightLaw& law, const std::vector<int>& Ks,
                                     int outer_reps, uint64_t seed);

// Empirical bias and variance of L_hat_K against the leading-order terms
// -mu2/(2 K mu^2) and mu2/(K mu^2).
struct BiasVarianceEntry {
    int K = 0;
    double k_bias = 0.0, k_bias_predicted = 0.0;
    double k_var = 0.0, k_var_predicted = 0.0;
    double bias_rel_err = 0.0, var_rel_err = 0.0;
};
struct BiasVarianceReport {
    std::vector<BiasVarianceEntry> entries;
    double tolerance = 0.10;
    bool pass = false;
};
BiasVarianceReport check_bias_variance(const WeightLaw& law, const std::vector<int>& Ks,
                                       long reps_per_k, uint64_t seed, double tolerance = 0.10);

// Empirical P(|L_hat_K - log mu| >= epsilon) along a K grid; checks the decay
// toward zero and consistency with the Chebyshev-style O(1/K) envelope.
struct ConvergenceReport {
    std::vector<int> K_grid;
    std::vector<double> exceed_prob;
    std::vector<double> chebyshev_bound;  // min(1, mu2/(K mu^2 eps^2))
    double epsilon = 0.0;
    bool nonincreasing = false;
    bool within_chebyshev_factor10 = false;
    double final_prob = 1.0;
    bool pass = false;
};
ConvergenceReport check_convergence_probability(const WeightLaw& law,
                                                const std::vector<int>& K_grid, double epsilon,
                                                long trials, uint64_t seed);

// Discrete missingness mechanism on p <= 3 variables: one conditional pattern
// distribution per discrete x level. Patterns are indexed little-endian over
// (r_1..r_p).
struct DiscreteMechanism {
    int p = 1;
    Eigen::MatrixXd table;  // rows = x levels, cols = 2^p pattern probabilities

    void validate() const;
};

// The constructive indicator decoder: thresholds are cumulative sums of the
// pattern probabilities in binary-number order, f_j(x, u) reads bit j of the
// pattern whose u-interval contains u.
struct Lemma1Result {
    Eigen::VectorXd truth;
    Eigen::VectorXd reconstructed_exact;  // piecewise-constant integration
    Eigen::VectorXd reconstructed_grid;   // midpoint-grid cross-check
    double max_err_exact = 0.0;
    double max_err_grid = 0.0;
};
Lemma1Result lemma1_oracle(const DiscreteMechanism& mech, int x_level, int u_grid_size);

// Decoder bit f_j(x, u) itself, exposed for direct tests of the construction.
int lemma1_decoder_bit(const DiscreteMechanism& mech, int x_level, int j, double u);

}  // namespace imiwae::theory
