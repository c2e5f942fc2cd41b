#include "imiwae/theory.hpp"

#include <algorithm>
#include <cmath>

#include "imiwae/errors.hpp"

namespace imiwae::theory {

WeightLaw WeightLaw::lognormal(double mu0, double sigma) {
    WeightLaw law;
    law.family = Family::lognormal;
    law.mu0 = mu0;
    law.sigma = sigma;
    if (sigma <= 0.0) throw DomainError("WeightLaw: lognormal sigma must be > 0");
    return law;
}

WeightLaw WeightLaw::two_point(double a, double b, double q) {
    WeightLaw law;
    law.family = Family::two_point;
    law.a = a;
    law.b = b;
    law.q = q;
    if (a <= 0.0 || b <= 0.0) throw DomainError("WeightLaw: two-point support must be positive");
    if (q < 0.0 || q > 1.0) throw DomainError("WeightLaw: two-point q must be in [0,1]");
    return law;
}

WeightLaw WeightLaw::constant(double c) {
    WeightLaw law;
    law.family = Family::constant;
    law.c = c;
    if (c <= 0.0) throw DomainError("WeightLaw: constant must be positive");
    return law;
}

double WeightLaw::mean() const {
    switch (family) {
        case Family::lognormal: return std::exp(mu0 + 0.5 * sigma * sigma);
        case Family::two_point: return q * a + (1.0 - q) * b;
        case Family::constant: return c;
    }
    return 0.0;
}

double WeightLaw::log_mean() const { return std::log(mean()); }

double WeightLaw::central_moment2() const {
    switch (family) {
        case Family::lognormal: {
            double s2 = sigma * sigma;
            return (std::exp(s2) - 1.0) * std::exp(2.0 * mu0 + s2);
        }
        case Family::two_point: {
            double m = mean();
            return q * (a - m) * (a - m) + (1.0 - q) * (b - m) * (b - m);
        }
        case Family::constant: return 0.0;
    }
    return 0.0;
}

double WeightLaw::central_moment3() const {
    switch (family) {
        case Family::lognormal: {
            // raw moments m_k = exp(k mu0 + k^2 sigma^2 / 2)
            auto raw = [&](int k) {
                return std::exp(k * mu0 + 0.5 * k * k * sigma * sigma);
            };
            double m1 = raw(1), m2 = raw(2), m3 = raw(3);
            return m3 - 3.0 * m2 * m1 + 2.0 * m1 * m1 * m1;
        }
        case Family::two_point: {
            double m = mean();
            return q * std::pow(a - m, 3) + (1.0 - q) * std::pow(b - m, 3);
        }
        case Family::constant: return 0.0;
    }
    return 0.0;
}

double WeightLaw::sample(SeededRng& rng) const {
    switch (family) {
        case Family::lognormal: return std::exp(mu0 + sigma * rng.normal());
        case Family::two_point: return rng.uniform() < q ? a : b;
        case Family::constant: return c;
    }
    return 0.0;
}

std::string WeightLaw::describe() const {
    switch (family) {
        case Family::lognormal:
            return "lognormal(" + std::to_string(mu0) + ", " + std::to_string(sigma) + ")";
        case Family::two_point:
            return "two_point(" + std::to_string(a) + ", " + std::to_string(b) + ", " +
                   std::to_string(q) + ")";
        case Family::constant: return "constant(" + std::to_string(c) + ")";
    }
    return "?";
}

MonotoneReport check_monotone_bounds(const WeightLaw& law, const std::vector<int>& Ks,
                                     int outer_reps, uint64_t seed) {
    if (Ks.empty() || !std::is_sorted(Ks.begin(), Ks.end()))
        throw DomainError("check_monotone_bounds: K list must be ascending");
    if (Ks.front() < 1) throw DomainError("check_monotone_bounds: K must be >= 1");
    if (outer_reps < 2) throw DomainError("check_monotone_bounds: outer_reps too small");

    const int k_max = Ks.back();
    const size_t nk = Ks.size();
    std::vector<double> sum(nk, 0.0), sumsq(nk, 0.0);

    SeededRng rng(seed, 0x60);
    for (int rep = 0; rep < outer_reps; ++rep) {
        // Common random numbers: the K-sample estimate reuses the first K of
        // one shared draw sequence.
        double acc = 0.0;
        size_t next = 0;
        for (int k = 1; k <= k_max; ++k) {
            acc += law.sample(rng);
            if (next < nk && Ks[next] == k) {
                double lhat = std::log(acc / static_cast<double>(k));
                sum[next] += lhat;
                sumsq[next] += lhat * lhat;
                ++next;
            }
        }
    }

    MonotoneReport rep;
    rep.Ks = Ks;
    rep.log_mean = law.log_mean();
    rep.L.resize(nk);
    rep.se.resize(nk);
    for (size_t i = 0; i < nk; ++i) {
        double mean = sum[i] / outer_reps;
        double var = std::max(0.0, sumsq[i] / outer_reps - mean * mean);
        rep.L[i] = mean;
        rep.se[i] = std::sqrt(var / outer_reps);
    }
    rep.nondecreasing_within_2se = true;
    for (size_t i = 0; i + 1 < nk; ++i) {
        double pooled = std::sqrt(rep.se[i] * rep.se[i] + rep.se[i + 1] * rep.se[i + 1]);
        if (rep.L[i + 1] < rep.L[i] - 2.0 * pooled) rep.nondecreasing_within_2se = false;
    }
    rep.bounded_by_log_mean = true;
    for (size_t i = 0; i < nk; ++i)
        if (rep.L[i] > rep.log_mean + 2.0 * rep.se[i]) rep.bounded_by_log_mean = false;
    rep.pass = rep.nondecreasing_within_2se && rep.bounded_by_log_mean;
    return rep;
}

BiasVarianceReport check_bias_variance(const WeightLaw& law, const std::vector<int>& Ks,
                                       long reps_per_k, uint64_t seed, double tolerance) {
    if (reps_per_k < 100) throw DomainError("check_bias_variance: reps_per_k too small");
    const double mu = law.mean();
    const double mu2 = law.central_moment2();
    const double log_mu = law.log_mean();
    const double cv2 = mu2 / (mu * mu);  // squared coefficient of variation

    BiasVarianceReport rep;
    rep.tolerance = tolerance;
    rep.pass = true;
    SeededRng rng(seed, 0x61);
    for (int K : Ks) {
        double sum = 0.0, sumsq = 0.0, sum_cv = 0.0;
        for (long r = 0; r < reps_per_k; ++r) {
            double acc = 0.0;
            for (int k = 0; k < K; ++k) acc += law.sample(rng);
            double y = acc / static_cast<double>(K);
            double lhat = std::log(y);
            sum += lhat;
            sumsq += lhat * lhat;
            // control variate with known zero mean: (Y_K - mu)/mu carries the
            // O(1/sqrt(K)) fluctuation of lhat but none of its bias
            sum_cv += lhat - (y - mu) / mu;
        }
        double mean = sum / static_cast<double>(reps_per_k);
        double mean_cv = sum_cv / static_cast<double>(reps_per_k);
        double var = std::max(0.0, sumsq / static_cast<double>(reps_per_k) - mean * mean);

        BiasVarianceEntry e;
        e.K = K;
        e.k_bias = K * (mean_cv - log_mu);
        e.k_bias_predicted = -0.5 * cv2;
        e.k_var = K * var;
        e.k_var_predicted = cv2;
        e.bias_rel_err =
            std::abs(e.k_bias - e.k_bias_predicted) / std::max(std::abs(e.k_bias_predicted), 1e-12);
        e.var_rel_err =
            std::abs(e.k_var - e.k_var_predicted) / std::max(std::abs(e.k_var_predicted), 1e-12);
        if (law.family == WeightLaw::Family::constant) {
            // degenerate law: predictions are exactly zero, check absolutes
            e.bias_rel_err = std::abs(e.k_bias);
            e.var_rel_err = std::abs(e.k_var);
        }
        if (e.bias_rel_err > tolerance || e.var_rel_err > tolerance) rep.pass = false;
        rep.entries.push_back(e);
    }
    return rep;
}

ConvergenceReport check_convergence_probability(const WeightLaw& law,
                                                const std::vector<int>& K_grid, double epsilon,
                                                long trials, uint64_t seed) {
    if (epsilon <= 0.0) throw DomainError("check_convergence_probability: epsilon must be > 0");
    if (trials < 100) throw DomainError("check_convergence_probability: trials too small");
    const double log_mu = law.log_mean();
    const double cv2 = law.central_moment2() / (law.mean() * law.mean());

    ConvergenceReport rep;
    rep.K_grid = K_grid;
    rep.epsilon = epsilon;
    SeededRng rng(seed, 0x62);
    for (int K : K_grid) {
        long exceed = 0;
        for (long t = 0; t < trials; ++t) {
            double acc = 0.0;
            for (int k = 0; k < K; ++k) acc += law.sample(rng);
            double lhat = std::log(acc / static_cast<double>(K));
            if (std::abs(lhat - log_mu) >= epsilon) ++exceed;
        }
        rep.exceed_prob.push_back(static_cast<double>(exceed) / static_cast<double>(trials));
        rep.chebyshev_bound.push_back(std::min(1.0, cv2 / (K * epsilon * epsilon)));
    }
    rep.nonincreasing = true;
    for (size_t i = 0; i + 1 < rep.exceed_prob.size(); ++i) {
        double p = rep.exceed_prob[i];
        double se = std::sqrt(std::max(p * (1.0 - p), 1.0 / trials) / trials);
        if (rep.exceed_prob[i + 1] > p + 3.0 * se) rep.nonincreasing = false;
    }
    rep.within_chebyshev_factor10 = true;
    for (size_t i = 0; i < rep.exceed_prob.size(); ++i)
        if (rep.exceed_prob[i] > 10.0 * rep.chebyshev_bound[i])
            rep.within_chebyshev_factor10 = false;
    rep.final_prob = rep.exceed_prob.empty() ? 1.0 : rep.exceed_prob.back();
    rep.pass = rep.nonincreasing && rep.within_chebyshev_factor10;
    return rep;
}

void DiscreteMechanism::validate() const {
    if (p < 1 || p > 3) throw DomainError("DiscreteMechanism: p must be in {1,2,3}");
    const Eigen::Index patterns = Eigen::Index(1) << p;
    if (table.cols() != patterns)
        throw DomainError("DiscreteMechanism: table must have 2^p columns");
    if (table.rows() < 1) throw DomainError("DiscreteMechanism: table needs at least one x level");
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
        double total = 0.0;
        for (Eigen::Index r = 0; r < patterns; ++r) {
            if (table(i, r) < 0.0)
                throw DomainError("DiscreteMechanism: negative probability at x level " +
                                  std::to_string(i));
            total += table(i, r);
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw DomainError("DiscreteMechanism: row " + std::to_string(i) +
                              " does not sum to 1");
    }
}

namespace {

// cum[i] = sum of pattern probabilities with index <= i (binary-number order).
std::vector<double> cumulative(const DiscreteMechanism& mech, int x_level) {
    const int patterns = 1 << mech.p;
    std::vector<double> cum(patterns);
    double acc = 0.0;
    for (int i = 0; i < patterns; ++i) {
        acc += mech.table(x_level, i);
        cum[i] = acc;
    }
    return cum;
}

int pattern_at(const std::vector<double>& cum, double u) {
    auto it = std::lower_bound(cum.begin(), cum.end(), u);
    if (it == cum.end()) return static_cast<int>(cum.size()) - 1;
    return static_cast<int>(it - cum.begin());
}

}  // namespace

int lemma1_decoder_bit(const DiscreteMechanism& mech, int x_level, int j, double u) {
    if (x_level < 0 || x_level >= mech.table.rows())
        throw DomainError("lemma1_decoder_bit: x level out of range");
    if (j < 0 || j >= mech.p) throw DomainError("lemma1_decoder_bit: j out of range");
    std::vector<double> cum = cumulative(mech, x_level);
    return (pattern_at(cum, u) >> j) & 1;
}

Lemma1Result lemma1_oracle(const DiscreteMechanism& mech, int x_level, int u_grid_size) {
    mech.validate();
    if (x_level < 0 || x_level >= mech.table.rows())
        throw DomainError("lemma1_oracle: x level out of range");
    if (u_grid_size < 1000) throw DomainError("lemma1_oracle: u_grid_size must be >= 1000");

    const int patterns = 1 << mech.p;
    std::vector<double> cum = cumulative(mech, x_level);

    Lemma1Result res;
    res.truth = mech.table.row(x_level).transpose();

    // Product of Bernoulli(f_j(x,u)) pmfs at pattern r, evaluated through the
    // decoder bits (each factor is f^r_j (1-f)^(1-r_j) with f in {0,1}).
    auto integrand = [&](double u, int r) {
        double prod = 1.0;
        int decoded = pattern_at(cum, u);
        for (int j = 0; j < mech.p; ++j) {
            int f = (decoded >> j) & 1;
            int rj = (r >> j) & 1;
            prod *= rj == 1 ? static_cast<double>(f) : static_cast<double>(1 - f);
        }
        return prod;
    };

    // Exact piecewise integration: the integrand is constant on each interval
    // between consecutive cumulative thresholds.
    res.reconstructed_exact = Eigen::VectorXd::Zero(patterns);
    double lo = 0.0;
    for (int i = 0; i < patterns; ++i) {
        double hi = cum[i];
        double len = hi - lo;
        if (len > 0.0) {
            double mid = 0.5 * (lo + hi);
            for (int r = 0; r < patterns; ++r)
                res.reconstructed_exact[r] += len * integrand(mid, r);
        }
        lo = hi;
    }

    // Midpoint-grid cross-check.
    res.reconstructed_grid = Eigen::VectorXd::Zero(patterns);
    const double inv_g = 1.0 / static_cast<double>(u_grid_size);
    for (int t = 0; t < u_grid_size; ++t) {
        double u = (t + 0.5) * inv_g;
        int decoded = pattern_at(cum, u);
        res.reconstructed_grid[decoded] += inv_g;
    }

    res.max_err_exact = (res.reconstructed_exact - res.truth).cwiseAbs().maxCoeff();
    res.max_err_grid = (res.reconstructed_grid - res.truth).cwiseAbs().maxCoeff();
    return res;
}

}  // namespace imiwae::theory
