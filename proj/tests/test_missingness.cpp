#include <doctest.h>

#include <cmath>

#include "imiwae/datagen.hpp"
#include "imiwae/errors.hpp"
#include "imiwae/missingness.hpp"

using namespace imiwae;

namespace {

DataTable toy_table(Eigen::Index n, int p, uint64_t seed) {
    LatentFactorSpec spec;
    spec.n = n;
    spec.p = p;
    spec.q1 = 3;
    spec.seed = seed;
    return gen_latent_factor_data(spec);
}

}  // namespace

TEST_CASE("saturated offsets drive the mask to all ones") {
    DataTable t = toy_table(500, 3, 1);
    MissingnessSpec latent;
    latent.mechanism = Mechanism::latent;
    latent.seed = 2;
    DataTable all_obs = apply_latent_mechanism(t, latent, LogitOffset{80.0});
    CHECK(all_obs.mask.minCoeff() == 1);

    MissingnessSpec thr;
    thr.mechanism = Mechanism::threshold;
    thr.seed = 2;
    DataTable obs2 = apply_threshold_mechanism(t, thr, LogitOffset{-80.0});
    CHECK(obs2.mask.minCoeff() == 1);
}

TEST_CASE("structural no-self-censoring: column j cannot influence R_j") {
    DataTable t = toy_table(2000, 3, 3);
    for (Linearity lin : {Linearity::linear, Linearity::nonlinear}) {
        for (Mechanism mech : {Mechanism::latent, Mechanism::threshold}) {
            MissingnessSpec spec;
            spec.mechanism = mech;
            spec.linearity = lin;
            spec.seed = 17;
            auto apply = [&](const DataTable& table) {
                return mech == Mechanism::latent
                           ? apply_latent_mechanism(table, spec, LogitOffset{0.0})
                           : apply_threshold_mechanism(table, spec, LogitOffset{0.0});
            };
            DataTable masked = apply(t);
            for (int j = 0; j < 3; ++j) {
                DataTable perturbed = t;
                perturbed.values.col(j).array() += 3.7;  // any change to column j
                DataTable masked2 = apply(perturbed);
                CHECK(masked.mask.col(j) == masked2.mask.col(j));
            }
        }
    }
}

TEST_CASE("with self-censoring allowed the own column does influence R_j") {
    DataTable t = toy_table(2000, 3, 3);
    MissingnessSpec spec;
    spec.mechanism = Mechanism::threshold;
    spec.self_censoring_allowed = true;
    spec.seed = 17;
    DataTable masked = apply_threshold_mechanism(t, spec, LogitOffset{0.0});
    DataTable perturbed = t;
    perturbed.values.col(0).array() += 3.7;
    DataTable masked2 = apply_threshold_mechanism(perturbed, spec, LogitOffset{0.0});
    CHECK(masked.mask.col(0) != masked2.mask.col(0));
}

TEST_CASE("threshold marginals are Bernoulli(sigma(g + offset))") {
    DataTable t = toy_table(100000, 3, 5);
    MissingnessSpec spec;
    spec.mechanism = Mechanism::threshold;
    spec.seed = 23;
    for (double off : {0.0, 0.8}) {
        Eigen::MatrixXd prob = missingness_probabilities(t, spec, LogitOffset{off});
        DataTable masked = apply_threshold_mechanism(t, spec, LogitOffset{off});
        for (int j = 0; j < 3; ++j) {
            double analytic = prob.col(j).mean();
            double empirical =
                1.0 - static_cast<double>(masked.mask.col(j).sum()) / masked.rows();
            CHECK(std::abs(empirical - analytic) < 0.01);
        }
    }
}

TEST_CASE("near-symmetric mechanism calibrates to rate 1/2 with a small offset") {
    // with many columns the fully-missing exclusion is negligible, so the
    // calibrated surviving rate sits at the cell-level rate and the offset
    // stays near zero for a mechanism whose logits straddle zero
    DataTable t = toy_table(20000, 10, 5);
    MissingnessSpec spec;
    spec.mechanism = Mechanism::latent;
    spec.seed = 23;
    spec.target_lo = 0.49;
    spec.target_hi = 0.51;
    LogitOffset off = calibrate_offset(t, spec);
    DataTable masked = apply_latent_mechanism(t, spec, off);
    double rate = surviving_missing_rate(masked);
    CHECK(rate >= 0.49);
    CHECK(rate <= 0.51);
    CHECK(std::abs(off.value) < 0.5);
}

TEST_CASE("latent mechanism calibrates into the target band") {
    DataTable t = toy_table(20000, 3, 6);
    MissingnessSpec spec;
    spec.mechanism = Mechanism::latent;
    spec.seed = 29;
    spec.target_lo = 0.30;
    spec.target_hi = 0.40;
    DataTable masked = apply_mechanism(t, spec);
    double rate = surviving_missing_rate(masked);
    CHECK(rate >= 0.30);
    CHECK(rate <= 0.40);
}

TEST_CASE("infeasible target raises a calibration error") {
    DataTable t = toy_table(50, 3, 7);
    MissingnessSpec spec;
    spec.mechanism = Mechanism::threshold;
    spec.seed = 31;
    spec.target_lo = 0.999;
    spec.target_hi = 0.9999;
    CHECK_THROWS_AS(calibrate_offset(t, spec), CalibrationError);
}

TEST_CASE("calibration rate moves monotonically with the offset") {
    DataTable t = toy_table(5000, 3, 8);
    MissingnessSpec latent;
    latent.mechanism = Mechanism::latent;
    latent.seed = 37;
    double prev = 2.0;
    for (double off : {-4.0, -2.0, 0.0, 2.0, 4.0}) {
        double rate = surviving_missing_rate(apply_latent_mechanism(t, latent, LogitOffset{off}));
        CHECK(rate <= prev + 1e-12);  // observation rate rises with the offset
        prev = rate;
    }
    MissingnessSpec thr;
    thr.mechanism = Mechanism::threshold;
    thr.seed = 37;
    prev = -1.0;
    for (double off : {-4.0, -2.0, 0.0, 2.0, 4.0}) {
        double rate = surviving_missing_rate(apply_threshold_mechanism(t, thr, LogitOffset{off}));
        CHECK(rate >= prev - 1e-12);  // threshold form: missingness rises instead
        prev = rate;
    }
}

TEST_CASE("blockwise masks are constant within groups") {
    DataTable t = toy_table(300, 100, 9);
    MissingnessSpec spec;
    spec.mechanism = Mechanism::blockwise;
    spec.group_size = 25;
    spec.seed = 41;
    DataTable masked = apply_blockwise(t, spec, LogitOffset{0.0});
    for (Eigen::Index i = 0; i < masked.rows(); ++i) {
        for (int g = 0; g < 4; ++g) {
            int v = masked.mask(i, g * 25);
            for (int j = 0; j < 25; ++j) CHECK(masked.mask(i, g * 25 + j) == v);
        }
    }
    // exactly 4 distinct groups
    CHECK(spec.resolved_groups(100).size() == 4);
}

TEST_CASE("blockwise with singleton groups equals the threshold mechanism") {
    DataTable t = toy_table(800, 4, 10);
    MissingnessSpec block;
    block.mechanism = Mechanism::blockwise;
    block.group_size = 1;
    block.seed = 43;
    MissingnessSpec thr;
    thr.mechanism = Mechanism::threshold;
    thr.seed = 43;
    DataTable a = apply_blockwise(t, block, LogitOffset{0.3});
    DataTable b = apply_threshold_mechanism(t, thr, LogitOffset{0.3});
    CHECK(a.mask == b.mask);
}

TEST_CASE("blockwise calibrates to a 50% missing rate") {
    DataTable t = toy_table(4000, 30, 11);
    MissingnessSpec spec;
    spec.mechanism = Mechanism::blockwise;
    spec.group_size = 5;
    spec.seed = 47;
    spec.target_lo = 0.45;
    spec.target_hi = 0.55;
    DataTable masked = apply_mechanism(t, spec);
    double rate = surviving_missing_rate(masked);
    CHECK(rate >= 0.45);
    CHECK(rate <= 0.55);
}

TEST_CASE("group validation rejects unknown and duplicated columns") {
    MissingnessSpec spec;
    spec.mechanism = Mechanism::blockwise;
    spec.groups = {{0, 1}, {2, 5}};
    CHECK_THROWS_AS(spec.validate(4), SpecError);
    spec.groups = {{0, 1}, {1, 2, 3}};
    CHECK_THROWS_AS(spec.validate(4), SpecError);
    spec.groups = {{0, 1}, {2}};
    CHECK_THROWS_AS(spec.validate(4), SpecError);  // column 3 uncovered
    spec.groups = {{0, 1}, {2, 3}};
    CHECK_NOTHROW(spec.validate(4));
}

TEST_CASE("self-censoring masks strictly above the column mean") {
    DataTable t;
    t.values.resize(3, 2);
    t.values << 5.0, 1.0, 5.0, 2.0, 5.0, 3.0;
    t.mask = Eigen::MatrixXi::Ones(3, 2);
    DataTable masked = apply_self_censoring(t);
    // first ceil(p/2) columns stay observed
    CHECK(masked.mask.col(0).minCoeff() == 1);
    // column mean 2: values (1,2,3) -> mask (1,1,0)
    CHECK(masked.mask(0, 1) == 1);
    CHECK(masked.mask(1, 1) == 1);
    CHECK(masked.mask(2, 1) == 0);
}

TEST_CASE("a constant column is never censored") {
    DataTable t;
    t.values.resize(4, 2);
    t.values << 1.0, 7.0, 2.0, 7.0, 3.0, 7.0, 4.0, 7.0;
    t.mask = Eigen::MatrixXi::Ones(4, 2);
    DataTable masked = apply_self_censoring(t);
    CHECK(masked.mask.col(1).minCoeff() == 1);
}

TEST_CASE("censored fraction of a symmetric column is about one half") {
    SeededRng rng(53, 0);
    DataTable t;
    t.values.resize(20000, 2);
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
        t.values(i, 0) = rng.normal();
        t.values(i, 1) = rng.normal();
    }
    t.mask = Eigen::MatrixXi::Ones(t.rows(), 2);
    DataTable masked = apply_self_censoring(t);
    double censored =
        1.0 - static_cast<double>(masked.mask.col(1).sum()) / static_cast<double>(masked.rows());
    CHECK(std::abs(censored - 0.5) < 0.02);
}

TEST_CASE("invalid target intervals are rejected") {
    MissingnessSpec spec;
    spec.mechanism = Mechanism::latent;
    spec.target_lo = 0.4;
    spec.target_hi = 0.4;
    CHECK_THROWS_AS(spec.validate(3), SpecError);
    spec.target_lo = 0.0;
    spec.target_hi = 0.4;
    CHECK_THROWS_AS(spec.validate(3), SpecError);
}
