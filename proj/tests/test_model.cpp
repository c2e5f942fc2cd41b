#include <doctest.h>

#include <cmath>

#include "imiwae/errors.hpp"
#include "imiwae/model.hpp"
#include "imiwae/numerics.hpp"

using namespace imiwae;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.p = 3;
    cfg.kappa1 = 2;
    cfg.kappa2 = 1;
    cfg.hidden = 8;
    cfg.hidden_layers = 2;
    cfg.miss_hidden = 8;
    cfg.miss_linearity = Linearity::nonlinear;
    cfg.K = 3;
    return cfg;
}

ModelParams random_params(const ModelConfig& cfg, uint64_t seed) {
    SeededRng rng(seed, 0);
    return ModelParams::init(cfg, rng);
}

// Makes both encoders emit exactly the prior: mu = 0, sigma = 1.
void set_encoder_to_prior(ModelParams& pm) {
    for (Mlp* net : {&pm.enc_mu_z, &pm.enc_mu_zt}) {
        for (auto& w : net->weights) w.setZero();
        for (auto& b : net->biases) b.setZero();
    }
    for (Mlp* net : {&pm.enc_s_z, &pm.enc_s_zt}) {
        for (auto& w : net->weights) w.setZero();
        for (auto& b : net->biases) b.setZero();
        net->biases.back().setConstant(softplus_inverse(1.0 - kSigmaFloor));
    }
}

}  // namespace

TEST_CASE("logsumexp is stable across a 700+ spread") {
    Eigen::VectorXd v(3);
    v << 0.0, -800.0, 50.0;
    double r = logsumexp(v);
    CHECK(std::isfinite(r));
    CHECK(r == doctest::Approx(50.0 + std::log(1.0 + std::exp(-50.0))).epsilon(1e-12));
    Eigen::VectorXd w(2);
    w << -1e6, -1e6 + 1.0;
    CHECK(std::isfinite(logsumexp(w)));
}

TEST_CASE("zero-parameter encoder gives mu = 0 and sigma = softplus(0)") {
    ModelConfig cfg = small_config();
    ModelParams pm = random_params(cfg, 1);
    for (Mlp* net : {&pm.enc_mu_z, &pm.enc_s_z, &pm.enc_mu_zt, &pm.enc_s_zt}) {
        for (auto& w : net->weights) w.setZero();
        for (auto& b : net->biases) b.setZero();
    }
    Encoding enc = encode(pm, Eigen::VectorXd::Zero(3));
    CHECK(enc.mu_z.cwiseAbs().maxCoeff() == 0.0);
    CHECK(enc.sigma_z[0] == doctest::Approx(kSigmaFloor + std::log(2.0)).epsilon(1e-12));
    // kappa2 = 1 gives exactly one (mu, sigma) pair for z~
    CHECK(enc.mu_zt.size() == 1);
    CHECK(enc.sigma_zt.size() == 1);
    CHECK((enc.sigma_z.array() > 0.0).all());
}

TEST_CASE("rows identical on observed entries and mask encode identically") {
    ModelConfig cfg = small_config();
    ModelParams pm = random_params(cfg, 2);
    Eigen::VectorXd a(3), b(3);
    a << 1.0, 0.0, -2.0;  // zero-filled views agree
    b << 1.0, 0.0, -2.0;
    Encoding ea = encode(pm, a);
    Encoding eb = encode(pm, b);
    CHECK(ea.mu_z == eb.mu_z);
    CHECK(ea.sigma_z == eb.sigma_z);
}

TEST_CASE("zero decoder net maps every z to zero") {
    ModelConfig cfg = small_config();
    ModelParams pm = random_params(cfg, 3);
    for (auto& w : pm.dec_mu_x.weights) w.setZero();
    for (auto& b : pm.dec_mu_x.biases) b.setZero();
    CHECK(decode_data(pm, Eigen::VectorXd::Ones(2)) == Eigen::VectorXd::Zero(3));
}

TEST_CASE("data log-density at the decoder mean is -(p/2) log(2 pi gamma)") {
    ModelConfig cfg = small_config();
    ModelParams pm = random_params(cfg, 4);
    for (auto& w : pm.dec_mu_x.weights) w.setZero();
    for (auto& b : pm.dec_mu_x.biases) b.setZero();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3);  // equals mu_x everywhere
    Eigen::VectorXi mask = Eigen::VectorXi::Ones(3);
    SeededRng rng(5, 0);
    ImportanceBatch batch = importance_weights(pm, x, mask, rng, 4);
    double expect = -1.5 * std::log(2.0 * M_PI * pm.gamma());
    for (const auto& s : batch.samples) CHECK(s.ll_x == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("zero-parameter missingness net gives pi = 1/2") {
    ModelConfig cfg = small_config();
    ModelParams pm = random_params(cfg, 6);
    for (auto& w : pm.miss.weights) w.setZero();
    for (auto& b : pm.miss.biases) b.setZero();
    Eigen::VectorXd pi = decode_missingness(pm, Eigen::VectorXd::Ones(3), Eigen::VectorXd::Ones(1));
    for (int j = 0; j < 3; ++j) CHECK(pi[j] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("remask kills the dependence of pi_j on xbar_j") {
    ModelConfig cfg = small_config();
    ModelParams pm = random_params(cfg, 7);
    SeededRng rng(8, 0);
    Eigen::VectorXd zt = rng.normal_vector(1);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd xbar = rng.normal_vector(3);
        Eigen::VectorXd pi = decode_missingness(pm, xbar, zt);
        for (int j = 0; j < 3; ++j) {
            Eigen::VectorXd moved = xbar;
            moved[j] += 1.0 + rng.uniform();
            Eigen::VectorXd pi2 = decode_missingness(pm, moved, zt);
            CHECK(pi2[j] == pi[j]);  // exactly, not approximately
        }
    }
}

TEST_CASE("self-censoring ablation restores the dependence") {
    ModelConfig cfg = small_config();
    cfg.no_self_censoring = false;
    cfg.miss_linearity = Linearity::linear;
    ModelParams pm = random_params(cfg, 9);
    Eigen::VectorXd xbar = Eigen::VectorXd::Ones(3);
    Eigen::VectorXd zt = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd pi = decode_missingness(pm, xbar, zt);
    Eigen::VectorXd moved = xbar;
    moved[0] += 1.0;
    Eigen::VectorXd pi2 = decode_missingness(pm, moved, zt);
    CHECK(pi2[0] != pi[0]);
}

TEST_CASE("fully observed rows carry xbar = x for every sample") {
    ModelConfig cfg = small_config();
    ModelParams pm = random_params(cfg, 10);
    SeededRng rng(11, 0);
    Eigen::VectorXd x = rng.normal_vector(3);
    Eigen::VectorXi mask = Eigen::VectorXi::Ones(3);
    ImportanceBatch batch = importance_weights(pm, x, mask, rng, 5);
    for (const auto& s : batch.samples) CHECK((s.xbar - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("prior-matched encoders cancel the q terms against the priors") {
    ModelConfig cfg = small_config();
    ModelParams pm = random_params(cfg, 12);
    set_encoder_to_prior(pm);
    SeededRng rng(13, 0);
    Eigen::VectorXd x = rng.normal_vector(3);
    Eigen::VectorXi mask(3);
    mask << 1, 0, 1;
    ImportanceBatch batch = importance_weights(pm, x, mask, rng, 8);
    for (const auto& s : batch.samples) {
        CHECK(std::abs(s.lp_z - s.lq_z) < 1e-10);
        CHECK(std::abs(s.lp_zt - s.lq_zt) < 1e-10);
        CHECK(std::abs(s.log_w - (s.ll_x + s.ll_r)) < 1e-10);
    }
}

TEST_CASE("objective on constant weights is log c, and K = 1 is the single term") {
    ImportanceBatch batch;
    batch.samples.resize(4);
    for (auto& s : batch.samples) s.log_w = std::log(2.5);
    CHECK(objective_lhat_k(batch) == doctest::Approx(std::log(2.5)).epsilon(1e-12));

    ImportanceBatch single;
    single.samples.resize(1);
    single.samples[0].log_w = -3.25;
    CHECK(objective_lhat_k(single) == doctest::Approx(-3.25).epsilon(1e-15));

    ImportanceBatch pair;  // weights (1, e) with K = 2 -> log((1+e)/2)
    pair.samples.resize(2);
    pair.samples[0].log_w = 0.0;
    pair.samples[1].log_w = 1.0;
    CHECK(objective_lhat_k(pair) ==
          doctest::Approx(std::log((1.0 + std::exp(1.0)) / 2.0)).epsilon(1e-12));
}

TEST_CASE("default config uses K = 20 importance samples") {
    ModelConfig cfg;
    CHECK(cfg.K == 20);
    CHECK(cfg.kappa2 == 1);
    CHECK(cfg.hidden == 128);
    CHECK(cfg.gamma_init == 0.25);
}

TEST_CASE("batched objective equals the per-row path on shared noise") {
    ModelConfig cfg = small_config();
    ModelParams pm = random_params(cfg, 14);
    SeededRng rng_a(15, 3), rng_b(15, 3);
    Eigen::VectorXd x = rng_a.normal_vector(3);
    rng_b.normal_vector(3);  // keep the streams aligned
    Eigen::VectorXi mask(3);
    mask << 1, 0, 1;
    ImportanceBatch batch = importance_weights(pm, x, mask, rng_a, cfg.K);

    Eigen::VectorXd x_tilde(3);
    for (int j = 0; j < 3; ++j) x_tilde[j] = mask[j] == 1 ? x[j] : 0.0;
    NoisePack noise = NoisePack::draw(cfg, 1, cfg.K, rng_b);
    Eigen::MatrixXi m(3, 1);
    m.col(0) = mask;
    Eigen::VectorXd lhat = batch_lhat(pm, x_tilde, m, noise);
    CHECK(lhat[0] == doctest::Approx(objective_lhat_k(batch)).epsilon(1e-12));
}

TEST_CASE("log weights stay finite under extreme decoder outputs") {
    ModelConfig cfg = small_config();
    ModelParams pm = random_params(cfg, 16);
    pm.dec_mu_x.biases.back().setConstant(1e3);  // massive data mismatch
    SeededRng rng(17, 0);
    Eigen::VectorXd x = rng.normal_vector(3);
    Eigen::VectorXi mask(3);
    mask << 1, 1, 0;
    ImportanceBatch batch = importance_weights(pm, x, mask, rng, 6);
    for (const auto& s : batch.samples) CHECK(std::isfinite(s.log_w));
    CHECK(std::isfinite(objective_lhat_k(batch)));
}

TEST_CASE("kappa2 = 0 disables the z~ paths") {
    ModelConfig cfg = small_config();
    cfg.kappa2 = 0;
    ModelParams pm = random_params(cfg, 18);
    SeededRng rng(19, 0);
    Eigen::VectorXd x = rng.normal_vector(3);
    Eigen::VectorXi mask(3);
    mask << 1, 0, 1;
    ImportanceBatch batch = importance_weights(pm, x, mask, rng, 4);
    for (const auto& s : batch.samples) {
        CHECK(s.lp_zt == 0.0);
        CHECK(s.lq_zt == 0.0);
        CHECK(s.zt.size() == 0);
        CHECK(std::isfinite(s.log_w));
    }
}

TEST_CASE("model gradients match central finite differences") {
    ModelConfig cfg = small_config();
    ModelParams pm = random_params(cfg, 20);
    SeededRng data_rng(21, 0);
    const int b = 2;
    Eigen::MatrixXd x_tilde(3, b);
    data_rng.fill_normal(x_tilde);
    Eigen::MatrixXi mask(3, b);
    mask << 1, 1, 0, 1, 1, 0;
    for (int i = 0; i < b; ++i)
        for (int j = 0; j < 3; ++j)
            if (mask(j, i) == 0) x_tilde(j, i) = 0.0;

    SeededRng noise_rng(22, 0);
    NoisePack noise = NoisePack::draw(cfg, b, cfg.K, noise_rng);
    Eigen::VectorXd coef = Eigen::VectorXd::Ones(b);

    ModelGrads grads = ModelGrads::zeros_like(pm);
    batch_lhat(pm, x_tilde, mask, noise, &grads, &coef);
    std::vector<GradBlock> gblocks = pm.grad_blocks(grads);

    ModelParams probe = pm;
    std::vector<ParamBlock> pblocks = probe.param_blocks();
    auto objective = [&]() { return batch_lhat(probe, x_tilde, mask, noise).sum(); };

    const double step = 1e-5;
    SeededRng pick(23, 0);
    int checked = 0;
    while (checked < 120) {
        size_t bi = pick.next_below(pblocks.size());
        Eigen::Index off = static_cast<Eigen::Index>(pick.next_below(pblocks[bi].size));
        double saved = pblocks[bi].data[off];
        pblocks[bi].data[off] = saved + step;
        double up = objective();
        pblocks[bi].data[off] = saved - step;
        double down = objective();
        pblocks[bi].data[off] = saved;
        double fd = (up - down) / (2.0 * step);
        double analytic = gblocks[bi].data[off];
        double denom = std::max(std::abs(fd), 1e-6);
        INFO(pblocks[bi].name << "[" << off << "] fd=" << fd << " analytic=" << analytic);
        CHECK(std::abs(analytic - fd) / denom < 1e-3);
        ++checked;
    }
}

TEST_CASE("gamma receives a nonzero gradient on a random batch") {
    ModelConfig cfg = small_config();
    ModelParams pm = random_params(cfg, 24);
    SeededRng rng(25, 0);
    Eigen::MatrixXd x_tilde(3, 4);
    rng.fill_normal(x_tilde);
    Eigen::MatrixXi mask = Eigen::MatrixXi::Ones(3, 4);
    mask(1, 2) = 0;
    x_tilde(1, 2) = 0.0;
    NoisePack noise = NoisePack::draw(cfg, 4, cfg.K, rng);
    Eigen::VectorXd coef = Eigen::VectorXd::Ones(4);
    ModelGrads grads = ModelGrads::zeros_like(pm);
    batch_lhat(pm, x_tilde, mask, noise, &grads, &coef);
    CHECK(grads.d_raw_gamma != 0.0);

    // finite-difference cross-check on raw gamma
    ModelParams probe = pm;
    const double step = 1e-6;
    probe.raw_gamma = pm.raw_gamma + step;
    double up = batch_lhat(probe, x_tilde, mask, noise).sum();
    probe.raw_gamma = pm.raw_gamma - step;
    double down = batch_lhat(probe, x_tilde, mask, noise).sum();
    double fd = (up - down) / (2.0 * step);
    CHECK(grads.d_raw_gamma == doctest::Approx(fd).epsilon(1e-4));
}

TEST_CASE("monte carlo L_K is nondecreasing in K on a frozen model") {
    ModelConfig cfg = small_config();
    cfg.K = 100;
    ModelParams pm = random_params(cfg, 26);
    Eigen::VectorXd x(3);
    x << 0.7, 0.0, -0.4;
    Eigen::VectorXi mask(3);
    mask << 1, 0, 1;

    const std::vector<int> Ks = {1, 2, 5, 20, 100};
    const int reps = 10000;
    std::vector<double> sum(Ks.size(), 0.0), sumsq(Ks.size(), 0.0);
    SeededRng rng(27, 0);
    for (int rep = 0; rep < reps; ++rep) {
        ImportanceBatch batch = importance_weights(pm, x, mask, rng, cfg.K);
        // common random numbers: prefixes of one draw sequence
        double max_lw = -std::numeric_limits<double>::infinity();
        double acc = 0.0;
        size_t next = 0;
        for (int k = 1; k <= cfg.K; ++k) {
            double lw = batch.samples[k - 1].log_w;
            if (lw > max_lw) {
                acc *= std::exp(max_lw - lw);
                max_lw = lw;
            }
            acc += std::exp(lw - max_lw);
            if (next < Ks.size() && Ks[next] == k) {
                double lhat = max_lw + std::log(acc / k);
                sum[next] += lhat;
                sumsq[next] += lhat * lhat;
                ++next;
            }
        }
    }
    std::vector<double> mean(Ks.size()), se(Ks.size());
    for (size_t i = 0; i < Ks.size(); ++i) {
        mean[i] = sum[i] / reps;
        double var = std::max(0.0, sumsq[i] / reps - mean[i] * mean[i]);
        se[i] = std::sqrt(var / reps);
    }
    for (size_t i = 0; i + 1 < Ks.size(); ++i) {
        double pooled = std::sqrt(se[i] * se[i] + se[i + 1] * se[i + 1]);
        CHECK(mean[i + 1] >= mean[i] - 2.0 * pooled);
    }
    // strictly increasing somewhere (K = 1 to K = 100 must open a real gap)
    CHECK(mean.back() > mean.front());
}

TEST_CASE("config validation rejects bad dimensions") {
    ModelConfig cfg = small_config();
    cfg.kappa1 = 0;
    CHECK_THROWS_AS(cfg.validate(), SpecError);
    cfg = small_config();
    cfg.K = 0;
    CHECK_THROWS_AS(cfg.validate(), SpecError);
    cfg = small_config();
    cfg.gamma_init = 0.0;
    CHECK_THROWS_AS(cfg.validate(), SpecError);
}

TEST_CASE("importance weights validate inputs") {
    ModelConfig cfg = small_config();
    ModelParams pm = random_params(cfg, 28);
    SeededRng rng(29, 0);
    Eigen::VectorXd x = rng.normal_vector(4);
    Eigen::VectorXi mask = Eigen::VectorXi::Ones(4);
    CHECK_THROWS_AS(importance_weights(pm, x, mask, rng, 3), ShapeError);
    Eigen::VectorXd ok = rng.normal_vector(3);
    Eigen::VectorXi m3 = Eigen::VectorXi::Ones(3);
    CHECK_THROWS_AS(importance_weights(pm, ok, m3, rng, 0), SpecError);
}
