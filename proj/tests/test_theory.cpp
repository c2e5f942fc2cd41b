#include <doctest.h>

#include <cmath>

#include "imiwae/errors.hpp"
#include "imiwae/theory.hpp"

using namespace imiwae;
using namespace imiwae::theory;

TEST_CASE("weight law closed-form moments") {
    WeightLaw ln = WeightLaw::lognormal(0.0, 0.5);
    CHECK(ln.mean() == doctest::Approx(std::exp(0.125)).epsilon(1e-12));
    CHECK(ln.log_mean() == doctest::Approx(0.125).epsilon(1e-12));
    // mu2 / mu^2 = e^{sigma^2} - 1
    double cv2 = ln.central_moment2() / (ln.mean() * ln.mean());
    CHECK(cv2 == doctest::Approx(std::exp(0.25) - 1.0).epsilon(1e-12));

    WeightLaw tp = WeightLaw::two_point(1.0, 3.0, 0.25);
    CHECK(tp.mean() == doctest::Approx(2.5));
    CHECK(tp.central_moment2() == doctest::Approx(0.25 * 2.25 + 0.75 * 0.25));

    WeightLaw c = WeightLaw::constant(2.0);
    CHECK(c.mean() == 2.0);
    CHECK(c.central_moment2() == 0.0);
}

TEST_CASE("lognormal sample moments agree with the closed form") {
    WeightLaw law = WeightLaw::lognormal(0.0, 0.5);
    SeededRng rng(1, 0);
    const int n = 200000;
    double sum = 0.0, sumsq = 0.0, sumlog = 0.0;
    for (int i = 0; i < n; ++i) {
        double w = law.sample(rng);
        sum += w;
        sumsq += w * w;
        sumlog += std::log(w);
    }
    double mean = sum / n;
    CHECK(std::abs(mean - law.mean()) < 0.01);
    CHECK(std::abs(sumlog / n) < 0.01);  // E[log w] = 0
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(var - law.central_moment2()) < 0.02);
}

TEST_CASE("constant law: L_K = log c exactly for every K") {
    WeightLaw law = WeightLaw::constant(2.0);
    MonotoneReport rep = check_monotone_bounds(law, {1, 2, 5, 20}, 2000, 3);
    for (double L : rep.L) CHECK(L == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(rep.pass);
}

TEST_CASE("lognormal bounds rise from 0 toward log mu = 0.125") {
    WeightLaw law = WeightLaw::lognormal(0.0, 0.5);
    MonotoneReport rep = check_monotone_bounds(law, {1, 2, 5, 20, 100}, 20000, 5);
    CHECK(rep.pass);
    CHECK(rep.log_mean == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(std::abs(rep.L.front()) < 0.01);        // L_1 = E[log w] = 0
    CHECK(rep.L.back() > 0.10);                   // approaching 0.125
    CHECK(rep.L.back() < 0.125 + 2 * rep.se.back());
}

TEST_CASE("bias and variance leading orders on the lognormal law") {
    WeightLaw law = WeightLaw::lognormal(0.0, 0.5);
    BiasVarianceReport rep = check_bias_variance(law, {100, 300}, 200000, 7);
    const double target = -(std::exp(0.25) - 1.0) / 2.0;  // about -0.1420
    CHECK(rep.entries[0].k_bias_predicted == doctest::Approx(target).epsilon(1e-12));
    CHECK(rep.entries[0].k_var_predicted == doctest::Approx(-2.0 * target).epsilon(1e-12));
    for (const auto& e : rep.entries) {
        CHECK(std::abs(e.k_bias - e.k_bias_predicted) < 0.10 * std::abs(e.k_bias_predicted) * 2);
        CHECK(std::abs(e.k_var - e.k_var_predicted) < 0.10 * e.k_var_predicted * 2);
    }
}

TEST_CASE("constant law has exactly zero bias and variance") {
    WeightLaw law = WeightLaw::constant(1.5);
    BiasVarianceReport rep = check_bias_variance(law, {100}, 1000, 9);
    CHECK(rep.pass);
    CHECK(std::abs(rep.entries[0].k_bias) < 1e-10);
    CHECK(std::abs(rep.entries[0].k_var) < 1e-10);
}

TEST_CASE("exceedance probability decays along the K grid") {
    WeightLaw law = WeightLaw::lognormal(0.0, 0.5);
    ConvergenceReport rep = check_convergence_probability(law, {10, 100, 1000}, 0.05, 20000, 11);
    CHECK(rep.nonincreasing);
    CHECK(rep.exceed_prob.front() > rep.exceed_prob.back());
    CHECK(rep.within_chebyshev_factor10);
    // constant law never exceeds
    ConvergenceReport c =
        check_convergence_probability(WeightLaw::constant(3.0), {10, 100}, 0.05, 1000, 12);
    CHECK(c.exceed_prob[0] == 0.0);
    CHECK(c.exceed_prob[1] == 0.0);
}

TEST_CASE("lemma1 single threshold at p = 1") {
    DiscreteMechanism mech;
    mech.p = 1;
    mech.table.resize(1, 2);
    mech.table << 0.3, 0.7;  // P(R=0) = 0.3
    // decoder bit: 1{u > 0.3}
    CHECK(lemma1_decoder_bit(mech, 0, 0, 0.2) == 0);
    CHECK(lemma1_decoder_bit(mech, 0, 0, 0.31) == 1);
    Lemma1Result res = lemma1_oracle(mech, 0, 1000);
    CHECK(res.max_err_exact < 1e-15);
    CHECK(res.max_err_grid < 2.0 / 1000.0);
}

TEST_CASE("lemma1 exact reconstruction at p = 2") {
    DiscreteMechanism mech;
    mech.p = 2;
    mech.table.resize(1, 4);
    mech.table << 0.1, 0.2, 0.3, 0.4;
    Lemma1Result res = lemma1_oracle(mech, 0, 2000);
    for (int r = 0; r < 4; ++r)
        CHECK(res.reconstructed_exact[r] ==
              doctest::Approx(mech.table(0, r)).epsilon(1e-14));
    CHECK(res.max_err_exact < 1e-13);
    CHECK(res.max_err_grid < 2.0 / 2000.0);
}

TEST_CASE("lemma1 brute-force u-interval enumeration matches at p = 2") {
    // the four intervals are (0,.1], (.1,.3], (.3,.6], (.6,1]; pattern bits
    // little-endian: index 1 = (r1=1,r2=0), index 2 = (r1=0,r2=1)
    DiscreteMechanism mech;
    mech.p = 2;
    mech.table.resize(1, 4);
    mech.table << 0.1, 0.2, 0.3, 0.4;
    CHECK(lemma1_decoder_bit(mech, 0, 0, 0.05) == 0);
    CHECK(lemma1_decoder_bit(mech, 0, 1, 0.05) == 0);
    CHECK(lemma1_decoder_bit(mech, 0, 0, 0.2) == 1);
    CHECK(lemma1_decoder_bit(mech, 0, 1, 0.2) == 0);
    CHECK(lemma1_decoder_bit(mech, 0, 0, 0.5) == 0);
    CHECK(lemma1_decoder_bit(mech, 0, 1, 0.5) == 1);
    CHECK(lemma1_decoder_bit(mech, 0, 0, 0.9) == 1);
    CHECK(lemma1_decoder_bit(mech, 0, 1, 0.9) == 1);
}

TEST_CASE("lemma1 reconstructs 100 random mechanisms exactly") {
    SeededRng rng(13, 0);
    for (int trial = 0; trial < 100; ++trial) {
        int p = 1 + static_cast<int>(rng.next_below(3));
        int patterns = 1 << p;
        DiscreteMechanism mech;
        mech.p = p;
        mech.table.resize(1, patterns);
        double total = 0.0;
        for (int r = 0; r < patterns; ++r) {
            mech.table(0, r) = -std::log(rng.uniform());
            total += mech.table(0, r);
        }
        mech.table.row(0) /= total;
        Lemma1Result res = lemma1_oracle(mech, 0, 1000);
        CHECK(res.max_err_exact < 1e-12);
    }
}

TEST_CASE("lemma1 handles zero-probability patterns and multiple x levels") {
    DiscreteMechanism mech;
    mech.p = 2;
    mech.table.resize(2, 4);
    mech.table << 0.5, 0.0, 0.5, 0.0, 0.25, 0.25, 0.25, 0.25;
    Lemma1Result res0 = lemma1_oracle(mech, 0, 1000);
    CHECK(res0.max_err_exact < 1e-15);
    Lemma1Result res1 = lemma1_oracle(mech, 1, 1000);
    CHECK(res1.max_err_exact < 1e-15);
}

TEST_CASE("invalid mechanism tables are rejected") {
    DiscreteMechanism mech;
    mech.p = 2;
    mech.table.resize(1, 4);
    mech.table << 0.5, 0.5, 0.5, -0.5;
    CHECK_THROWS_AS(mech.validate(), DomainError);
    mech.table << 0.5, 0.5, 0.5, 0.5;
    CHECK_THROWS_AS(mech.validate(), DomainError);
    mech.p = 4;
    CHECK_THROWS_AS(mech.validate(), DomainError);
}

TEST_CASE("law validation") {
    CHECK_THROWS_AS(WeightLaw::lognormal(0.0, 0.0), DomainError);
    CHECK_THROWS_AS(WeightLaw::two_point(-1.0, 2.0, 0.5), DomainError);
    CHECK_THROWS_AS(WeightLaw::constant(0.0), DomainError);
}
