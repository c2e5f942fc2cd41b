#include "imiwae/model.hpp"

#include <cmath>
#include <sstream>

#include "imiwae/errors.hpp"
#include "imiwae/numerics.hpp"

namespace imiwae {

namespace {

Eigen::MatrixXd encoder_input(const ModelConfig& cfg, const Eigen::MatrixXd& x_tilde,
                              const Eigen::MatrixXi& mask) {
    if (!cfg.mask_channel) return x_tilde;
    Eigen::MatrixXd in(2 * cfg.p, x_tilde.cols());
    in.topRows(cfg.p) = x_tilde;
    in.bottomRows(cfg.p) = mask.cast<double>();
    return in;
}

Eigen::MatrixXd softplus_floored(const Eigen::MatrixXd& raw) {
    return raw.unaryExpr([](double v) { return kSigmaFloor + softplus(v); });
}

struct EncBatch {
    Eigen::MatrixXd mu_z, sraw_z, sig_z;
    Eigen::MatrixXd mu_zt, sraw_zt, sig_zt;
    MlpCache c_mu_z, c_s_z, c_mu_zt, c_s_zt;
};

void encode_batch(const ModelParams& pm, const Eigen::MatrixXd& enc_in, bool with_cache,
                  EncBatch& out) {
    out.mu_z = mlp_forward_batch(pm.enc_mu_z, enc_in, with_cache ? &out.c_mu_z : nullptr);
    out.sraw_z = mlp_forward_batch(pm.enc_s_z, enc_in, with_cache ? &out.c_s_z : nullptr);
    out.sig_z = softplus_floored(out.sraw_z);
    if (pm.config.kappa2 > 0) {
        out.mu_zt = mlp_forward_batch(pm.enc_mu_zt, enc_in, with_cache ? &out.c_mu_zt : nullptr);
        out.sraw_zt = mlp_forward_batch(pm.enc_s_zt, enc_in, with_cache ? &out.c_s_zt : nullptr);
        out.sig_zt = softplus_floored(out.sraw_zt);
    } else {
        out.mu_zt.resize(0, enc_in.cols());
        out.sraw_zt.resize(0, enc_in.cols());
        out.sig_zt.resize(0, enc_in.cols());
    }
}

// Everything the backward pass needs for one row.
struct RowCore {
    Eigen::MatrixXd z, zt, mu_x, xhat, xbar, dif, miss_in, logits;
    MlpCache dec_cache, miss_cache;
    Eigen::VectorXd ll_x, ll_r, lp_z, lp_zt, lq_z, lq_zt, log_w;
    double lhat = 0.0;
};

using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;
using ConstMatRef = Eigen::Ref<const Eigen::MatrixXd>;

// Forward for one row given its encoder moments and noise (one column per
// importance sample).
void row_core_forward(const ModelParams& pm, ConstVecRef x_tilde, const Eigen::VectorXd& obs,
                      ConstVecRef mu_z, ConstVecRef sig_z, ConstVecRef mu_zt, ConstVecRef sig_zt,
                      ConstMatRef eps_z, ConstMatRef eps_zt, ConstMatRef eps_x, bool with_cache,
                      RowCore& w) {
    const ModelConfig& cfg = pm.config;
    const Eigen::Index K = eps_z.cols();
    const int p = cfg.p;
    const double gam = pm.gamma();
    const double sqrt_gam = std::sqrt(gam);
    const double n_obs = obs.sum();
    const Eigen::VectorXd one_minus_obs = Eigen::VectorXd::Ones(p) - obs;

    w.z = sig_z.asDiagonal() * eps_z;
    w.z.colwise() += mu_z;
    if (cfg.kappa2 > 0) {
        w.zt = sig_zt.asDiagonal() * eps_zt;
        w.zt.colwise() += mu_zt;
    } else {
        w.zt.resize(0, K);
    }

    w.mu_x = mlp_forward_batch(pm.dec_mu_x, w.z, with_cache ? &w.dec_cache : nullptr);
    w.xhat = w.mu_x + sqrt_gam * eps_x;
    // observed slots carry the observed value, missing slots the draw
    w.xbar = one_minus_obs.asDiagonal() * w.xhat;
    w.xbar.colwise() += x_tilde;
    // residual at observed slots only
    w.dif = -w.mu_x;
    w.dif.colwise() += x_tilde;
    w.dif = obs.asDiagonal() * w.dif;

    w.ll_x.resize(K);
    for (Eigen::Index k = 0; k < K; ++k)
        w.ll_x[k] =
            -0.5 * n_obs * (kLog2Pi + std::log(gam)) - w.dif.col(k).squaredNorm() / (2.0 * gam);

    // Shared missingness net evaluated p times per sample with per-j remask.
    const int in_dim = p + cfg.kappa2;
    w.miss_in.resize(in_dim, K * p);
    for (Eigen::Index k = 0; k < K; ++k) {
        for (int j = 0; j < p; ++j) {
            Eigen::Index c = k * p + j;
            w.miss_in.col(c).head(p) = w.xbar.col(k);
            if (cfg.no_self_censoring) w.miss_in(j, c) = 0.0;
            if (cfg.kappa2 > 0) w.miss_in.col(c).tail(cfg.kappa2) = w.zt.col(k);
        }
    }
    w.logits = mlp_forward_batch(pm.miss, w.miss_in, with_cache ? &w.miss_cache : nullptr);

    w.ll_r.resize(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        double acc = 0.0;
        for (int j = 0; j < p; ++j) {
            double t = w.logits(j, k * p + j);
            acc += obs[j] == 1.0 ? log_sigmoid(t) : log_sigmoid(-t);
        }
        w.ll_r[k] = acc;
    }

    const double kap1 = static_cast<double>(cfg.kappa1);
    const double kap2 = static_cast<double>(cfg.kappa2);
    const double log_sig_z_sum = sig_z.array().log().sum();
    w.lp_z.resize(K);
    w.lq_z.resize(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        w.lp_z[k] = -0.5 * kap1 * kLog2Pi - 0.5 * w.z.col(k).squaredNorm();
        w.lq_z[k] = -0.5 * kap1 * kLog2Pi - log_sig_z_sum - 0.5 * eps_z.col(k).squaredNorm();
    }
    if (cfg.kappa2 > 0) {
        const double log_sig_zt_sum = sig_zt.array().log().sum();
        w.lp_zt.resize(K);
        w.lq_zt.resize(K);
        for (Eigen::Index k = 0; k < K; ++k) {
            w.lp_zt[k] = -0.5 * kap2 * kLog2Pi - 0.5 * w.zt.col(k).squaredNorm();
            w.lq_zt[k] =
                -0.5 * kap2 * kLog2Pi - log_sig_zt_sum - 0.5 * eps_zt.col(k).squaredNorm();
        }
    } else {
        w.lp_zt.setZero(K);
        w.lq_zt.setZero(K);
    }

    w.log_w = w.ll_x + w.ll_r + w.lp_z + w.lp_zt - w.lq_z - w.lq_zt;
    w.lhat = logsumexp(w.log_w) - std::log(static_cast<double>(K));
}

// Backward for one row; coef is the upstream dObjective/dL_hat. Accumulates
// decoder and missingness gradients plus per-row encoder-moment gradients
// and d(gamma).
void row_core_backward(const ModelParams& pm, const Eigen::VectorXd& obs, ConstMatRef eps_z,
                       ConstMatRef eps_zt, ConstMatRef eps_x, ConstVecRef sig_z,
                       ConstVecRef sig_zt, RowCore& w, double coef, ModelGrads& grads,
                       Eigen::Ref<Eigen::VectorXd> d_mu_z, Eigen::Ref<Eigen::VectorXd> d_sig_z,
                       Eigen::Ref<Eigen::VectorXd> d_mu_zt, Eigen::Ref<Eigen::VectorXd> d_sig_zt,
                       double& d_gamma) {
    const ModelConfig& cfg = pm.config;
    const Eigen::Index K = eps_z.cols();
    const int p = cfg.p;
    const double gam = pm.gamma();
    const double sqrt_gam = std::sqrt(gam);
    const double n_obs = obs.sum();
    const Eigen::VectorXd one_minus_obs = Eigen::VectorXd::Ones(p) - obs;

    // d L_hat / d log_w_k = softmax(log_w)_k
    const double lse = logsumexp(w.log_w);
    Eigen::VectorXd dlw(K);
    for (Eigen::Index k = 0; k < K; ++k) dlw[k] = coef * std::exp(w.log_w[k] - lse);
    const double dlw_sum = dlw.sum();

    // data log-likelihood
    Eigen::VectorXd dlw_over_gam = dlw / gam;
    Eigen::MatrixXd d_mu_x = w.dif * dlw_over_gam.asDiagonal();
    for (Eigen::Index k = 0; k < K; ++k)
        d_gamma +=
            dlw[k] * (-0.5 * n_obs / gam + w.dif.col(k).squaredNorm() / (2.0 * gam * gam));

    // missingness log-likelihood -> diagonal logits -> shared net
    Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(p, K * p);
    for (Eigen::Index k = 0; k < K; ++k)
        for (int j = 0; j < p; ++j) {
            double t = w.logits(j, k * p + j);
            d_logits(j, k * p + j) = dlw[k] * (obs[j] - sigmoid(t));
        }
    Eigen::MatrixXd d_miss_in = mlp_backward_batch(pm.miss, w.miss_cache, d_logits, grads.miss);

    Eigen::MatrixXd d_xbar = Eigen::MatrixXd::Zero(p, K);
    Eigen::MatrixXd d_zt = Eigen::MatrixXd::Zero(cfg.kappa2, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        for (int j = 0; j < p; ++j) {
            Eigen::Index c = k * p + j;
            d_xbar.col(k) += d_miss_in.col(c).head(p);
            if (cfg.no_self_censoring) d_xbar(j, k) -= d_miss_in(j, c);  // remasked slot
            if (cfg.kappa2 > 0) d_zt.col(k) += d_miss_in.col(c).tail(cfg.kappa2);
        }
    }

    // xbar = x_tilde + xhat .* (1 - obs); xhat = mu_x + sqrt(gamma) eps_x
    Eigen::MatrixXd d_xhat = one_minus_obs.asDiagonal() * d_xbar;
    d_mu_x += d_xhat;
    d_gamma += (d_xhat.array() * eps_x.array()).sum() / (2.0 * sqrt_gam);

    Eigen::MatrixXd d_z = mlp_backward_batch(pm.dec_mu_x, w.dec_cache, d_mu_x, grads.dec_mu_x);

    // prior on z and the log sigma part of -log q
    d_z -= w.z * dlw.asDiagonal();
    d_sig_z += (dlw_sum / sig_z.array()).matrix();
    d_mu_z += d_z.rowwise().sum();
    d_sig_z += (d_z.array() * eps_z.array()).rowwise().sum().matrix();

    if (cfg.kappa2 > 0) {
        d_zt -= w.zt * dlw.asDiagonal();
        d_sig_zt += (dlw_sum / sig_zt.array()).matrix();
        d_mu_zt += d_zt.rowwise().sum();
        d_sig_zt += (d_zt.array() * eps_zt.array()).rowwise().sum().matrix();
    }
}

void append_mlp_blocks(const std::string& prefix, Mlp& net, std::vector<ParamBlock>& out) {
    for (size_t l = 0; l < net.weights.size(); ++l) {
        out.push_back(
            {prefix + ".w" + std::to_string(l), net.weights[l].data(), net.weights[l].size()});
        out.push_back(
            {prefix + ".b" + std::to_string(l), net.biases[l].data(), net.biases[l].size()});
    }
}

void append_mlp_grad_blocks(const std::string& prefix, const MlpGrad& g,
                            std::vector<GradBlock>& out) {
    for (size_t l = 0; l < g.d_weights.size(); ++l) {
        out.push_back(
            {prefix + ".w" + std::to_string(l), g.d_weights[l].data(), g.d_weights[l].size()});
        out.push_back(
            {prefix + ".b" + std::to_string(l), g.d_biases[l].data(), g.d_biases[l].size()});
    }
}

bool mlp_finite(const Mlp& net) {
    for (const auto& m : net.weights)
        if (!m.allFinite()) return false;
    for (const auto& b : net.biases)
        if (!b.allFinite()) return false;
    return true;
}

}  // namespace

void ModelConfig::validate() const {
    if (p < 1) throw SpecError("ModelConfig: p must be >= 1");
    if (kappa1 < 1) throw SpecError("ModelConfig: kappa1 must be >= 1");
    if (kappa2 < 0) throw SpecError("ModelConfig: kappa2 must be >= 0");
    if (K < 1) throw SpecError("ModelConfig: K must be >= 1");
    if (hidden < 1) throw SpecError("ModelConfig: hidden must be >= 1");
    if (hidden_layers < 0) throw SpecError("ModelConfig: hidden_layers must be >= 0");
    if (miss_hidden < 1) throw SpecError("ModelConfig: miss_hidden must be >= 1");
    if (gamma_init <= kGammaFloor)
        throw SpecError("ModelConfig: gamma_init must exceed the floor " +
                        std::to_string(kGammaFloor));
    if (data_decoder != "gaussian")
        throw SpecError("ModelConfig: unsupported data decoder '" + data_decoder + "'");
}

std::vector<int> ModelConfig::encoder_dims(int out) const {
    std::vector<int> dims{encoder_input_dim()};
    for (int l = 0; l < hidden_layers; ++l) dims.push_back(hidden);
    dims.push_back(out);
    return dims;
}

std::vector<int> ModelConfig::decoder_dims() const {
    std::vector<int> dims{kappa1};
    for (int l = 0; l < hidden_layers; ++l) dims.push_back(hidden);
    dims.push_back(p);
    return dims;
}

std::vector<int> ModelConfig::missingness_dims() const {
    if (miss_linearity == Linearity::linear) return {p + kappa2, p};
    return {p + kappa2, miss_hidden, p};
}

ModelParams ModelParams::init(const ModelConfig& config, SeededRng& rng) {
    config.validate();
    ModelParams pm;
    pm.config = config;
    pm.enc_mu_z = Mlp::glorot(config.encoder_dims(config.kappa1), rng);
    pm.enc_s_z = Mlp::glorot(config.encoder_dims(config.kappa1), rng);
    if (config.kappa2 > 0) {
        pm.enc_mu_zt = Mlp::glorot(config.encoder_dims(config.kappa2), rng);
        pm.enc_s_zt = Mlp::glorot(config.encoder_dims(config.kappa2), rng);
    }
    pm.dec_mu_x = Mlp::glorot(config.decoder_dims(), rng);
    pm.miss = Mlp::glorot(config.missingness_dims(), rng);
    pm.set_gamma(config.gamma_init);
    return pm;
}

double ModelParams::gamma() const { return kGammaFloor + softplus(raw_gamma); }

void ModelParams::set_gamma(double gamma) {
    if (gamma <= kGammaFloor)
        throw DomainError("ModelParams: gamma must exceed the floor " +
                          std::to_string(kGammaFloor));
    raw_gamma = softplus_inverse(gamma - kGammaFloor);
}

bool ModelParams::all_finite() const {
    if (!std::isfinite(raw_gamma)) return false;
    if (!mlp_finite(enc_mu_z) || !mlp_finite(enc_s_z)) return false;
    if (config.kappa2 > 0 && (!mlp_finite(enc_mu_zt) || !mlp_finite(enc_s_zt))) return false;
    return mlp_finite(dec_mu_x) && mlp_finite(miss);
}

Eigen::Index ModelParams::param_count() const {
    Eigen::Index n = enc_mu_z.param_count() + enc_s_z.param_count() + dec_mu_x.param_count() +
                     miss.param_count() + 1;
    if (config.kappa2 > 0) n += enc_mu_zt.param_count() + enc_s_zt.param_count();
    return n;
}

std::vector<ParamBlock> ModelParams::param_blocks() {
    std::vector<ParamBlock> out;
    append_mlp_blocks("enc_mu_z", enc_mu_z, out);
    append_mlp_blocks("enc_s_z", enc_s_z, out);
    if (config.kappa2 > 0) {
        append_mlp_blocks("enc_mu_zt", enc_mu_zt, out);
        append_mlp_blocks("enc_s_zt", enc_s_zt, out);
    }
    append_mlp_blocks("dec_mu_x", dec_mu_x, out);
    append_mlp_blocks("miss", miss, out);
    out.push_back({"raw_gamma", &raw_gamma, 1});
    return out;
}

std::vector<GradBlock> ModelParams::grad_blocks(const ModelGrads& grads) const {
    std::vector<GradBlock> out;
    append_mlp_grad_blocks("enc_mu_z", grads.enc_mu_z, out);
    append_mlp_grad_blocks("enc_s_z", grads.enc_s_z, out);
    if (config.kappa2 > 0) {
        append_mlp_grad_blocks("enc_mu_zt", grads.enc_mu_zt, out);
        append_mlp_grad_blocks("enc_s_zt", grads.enc_s_zt, out);
    }
    append_mlp_grad_blocks("dec_mu_x", grads.dec_mu_x, out);
    append_mlp_grad_blocks("miss", grads.miss, out);
    out.push_back({"raw_gamma", &grads.d_raw_gamma, 1});
    return out;
}

ModelGrads ModelGrads::zeros_like(const ModelParams& params) {
    ModelGrads g;
    g.enc_mu_z = MlpGrad::zeros_like(params.enc_mu_z);
    g.enc_s_z = MlpGrad::zeros_like(params.enc_s_z);
    if (params.config.kappa2 > 0) {
        g.enc_mu_zt = MlpGrad::zeros_like(params.enc_mu_zt);
        g.enc_s_zt = MlpGrad::zeros_like(params.enc_s_zt);
    }
    g.dec_mu_x = MlpGrad::zeros_like(params.dec_mu_x);
    g.miss = MlpGrad::zeros_like(params.miss);
    return g;
}

void ModelGrads::set_zero() {
    enc_mu_z.set_zero();
    enc_s_z.set_zero();
    enc_mu_zt.set_zero();
    enc_s_zt.set_zero();
    dec_mu_x.set_zero();
    miss.set_zero();
    d_raw_gamma = 0.0;
}

Encoding encode(const ModelParams& params, const Eigen::VectorXd& x_zero_filled,
                const Eigen::VectorXi* mask) {
    const ModelConfig& cfg = params.config;
    if (x_zero_filled.size() != cfg.p)
        throw ShapeError("encode: row length " + std::to_string(x_zero_filled.size()) +
                         ", expected p = " + std::to_string(cfg.p));
    if (!x_zero_filled.allFinite()) throw NumericError("encode: non-finite input row");
    Eigen::MatrixXi m = Eigen::MatrixXi::Ones(cfg.p, 1);
    if (cfg.mask_channel) {
        if (!mask) throw ShapeError("encode: mask channel configured but no mask given");
        m = *mask;
    }
    Eigen::MatrixXd in = encoder_input(cfg, x_zero_filled, m);
    EncBatch enc;
    encode_batch(params, in, false, enc);
    Encoding out;
    out.mu_z = enc.mu_z.col(0);
    out.sigma_z = enc.sig_z.col(0);
    if (cfg.kappa2 > 0) {
        out.mu_zt = enc.mu_zt.col(0);
        out.sigma_zt = enc.sig_zt.col(0);
    }
    return out;
}

Eigen::VectorXd decode_data(const ModelParams& params, const Eigen::VectorXd& z) {
    if (z.size() != params.config.kappa1)
        throw ShapeError("decode_data: z length " + std::to_string(z.size()) + ", expected " +
                         std::to_string(params.config.kappa1));
    return mlp_forward(params.dec_mu_x, z);
}

Eigen::VectorXd decode_missingness(const ModelParams& params, const Eigen::VectorXd& xbar,
                                   const Eigen::VectorXd& zt) {
    const ModelConfig& cfg = params.config;
    if (xbar.size() != cfg.p) throw ShapeError("decode_missingness: xbar length mismatch");
    if (zt.size() != cfg.kappa2) throw ShapeError("decode_missingness: zt length mismatch");
    Eigen::MatrixXd in(cfg.p + cfg.kappa2, cfg.p);
    for (int j = 0; j < cfg.p; ++j) {
        in.col(j).head(cfg.p) = xbar;
        if (cfg.no_self_censoring) in(j, j) = 0.0;
        if (cfg.kappa2 > 0) in.col(j).tail(cfg.kappa2) = zt;
    }
    Eigen::MatrixXd logits = mlp_forward_batch(params.miss, in);
    Eigen::VectorXd pi(cfg.p);
    for (int j = 0; j < cfg.p; ++j) pi[j] = sigmoid(logits(j, j));
    return pi;
}

NoisePack NoisePack::draw(const ModelConfig& config, int rows, int K, SeededRng& rng) {
    NoisePack n;
    n.eps_z.resize(config.kappa1, static_cast<Eigen::Index>(rows) * K);
    n.eps_zt.resize(config.kappa2, static_cast<Eigen::Index>(rows) * K);
    n.eps_x.resize(config.p, static_cast<Eigen::Index>(rows) * K);
    for (Eigen::Index c = 0; c < n.eps_z.cols(); ++c) {
        for (int i = 0; i < config.kappa1; ++i) n.eps_z(i, c) = rng.normal();
        for (int i = 0; i < config.kappa2; ++i) n.eps_zt(i, c) = rng.normal();
        for (int i = 0; i < config.p; ++i) n.eps_x(i, c) = rng.normal();
    }
    return n;
}

void row_forward(const ModelParams& params, const Eigen::VectorXd& x_tilde,
                 const Eigen::VectorXi& mask, const Eigen::MatrixXd& eps_z,
                 const Eigen::MatrixXd& eps_zt, const Eigen::MatrixXd& eps_x, RowForward& out) {
    out.enc = encode(params, x_tilde, &mask);
    RowCore core;
    row_core_forward(params, x_tilde, mask.cast<double>(), out.enc.mu_z, out.enc.sigma_z,
                     out.enc.mu_zt, out.enc.sigma_zt, eps_z, eps_zt, eps_x, false, core);
    out.z = std::move(core.z);
    out.zt = std::move(core.zt);
    out.mu_x = std::move(core.mu_x);
    out.xhat = std::move(core.xhat);
    out.xbar = std::move(core.xbar);
    out.ll_x = std::move(core.ll_x);
    out.ll_r = std::move(core.ll_r);
    out.lp_z = std::move(core.lp_z);
    out.lp_zt = std::move(core.lp_zt);
    out.lq_z = std::move(core.lq_z);
    out.lq_zt = std::move(core.lq_zt);
    out.log_w = std::move(core.log_w);
}

ImportanceBatch importance_weights(const ModelParams& params, const Eigen::VectorXd& x_row,
                                   const Eigen::VectorXi& mask, SeededRng& rng, int K) {
    const ModelConfig& cfg = params.config;
    if (K < 1) throw SpecError("importance_weights: K must be >= 1");
    if (x_row.size() != cfg.p || mask.size() != cfg.p)
        throw ShapeError("importance_weights: row/mask length mismatch");

    Eigen::VectorXd x_tilde(cfg.p);
    for (int j = 0; j < cfg.p; ++j) x_tilde[j] = mask[j] == 1 ? x_row[j] : 0.0;

    NoisePack noise = NoisePack::draw(cfg, 1, K, rng);
    RowForward fwd;
    row_forward(params, x_tilde, mask, noise.eps_z, noise.eps_zt, noise.eps_x, fwd);

    ImportanceBatch batch;
    batch.samples.resize(K);
    for (int k = 0; k < K; ++k) {
        ImportanceSample& s = batch.samples[k];
        s.z = fwd.z.col(k);
        s.zt = cfg.kappa2 > 0 ? Eigen::VectorXd(fwd.zt.col(k)) : Eigen::VectorXd();
        s.xhat = fwd.xhat.col(k);
        s.xbar = fwd.xbar.col(k);
        s.ll_x = fwd.ll_x[k];
        s.ll_r = fwd.ll_r[k];
        s.lp_z = fwd.lp_z[k];
        s.lp_zt = fwd.lp_zt[k];
        s.lq_z = fwd.lq_z[k];
        s.lq_zt = fwd.lq_zt[k];
        s.log_w = fwd.log_w[k];
        if (!std::isfinite(s.log_w)) {
            std::ostringstream msg;
            msg << "non-finite log-weight at sample " << k << ": ll_x=" << s.ll_x
                << " ll_r=" << s.ll_r << " lp_z=" << s.lp_z << " lp_zt=" << s.lp_zt
                << " lq_z=" << s.lq_z << " lq_zt=" << s.lq_zt;
            throw NumericError(msg.str());
        }
    }
    return batch;
}

double objective_lhat_k(const ImportanceBatch& batch) {
    const int K = static_cast<int>(batch.samples.size());
    if (K < 1) throw SpecError("objective_lhat_k: empty batch");
    Eigen::VectorXd log_w(K);
    for (int k = 0; k < K; ++k) log_w[k] = batch.samples[k].log_w;
    return logsumexp(log_w) - std::log(static_cast<double>(K));
}

Eigen::VectorXd batch_lhat(const ModelParams& params, const Eigen::MatrixXd& x_tilde,
                           const Eigen::MatrixXi& mask, const NoisePack& noise, ModelGrads* grads,
                           const Eigen::VectorXd* coef) {
    const ModelConfig& cfg = params.config;
    const Eigen::Index b = x_tilde.cols();
    const int K = cfg.K;
    if (x_tilde.rows() != cfg.p || mask.rows() != cfg.p || mask.cols() != b)
        throw ShapeError("batch_lhat: minibatch shapes disagree with config");
    if (noise.eps_z.cols() != b * K)
        throw ShapeError("batch_lhat: noise columns disagree with rows*K");
    if (grads && !coef) throw SpecError("batch_lhat: gradients need per-row coefficients");

    Eigen::MatrixXd enc_in = encoder_input(cfg, x_tilde, mask);
    EncBatch enc;
    encode_batch(params, enc_in, grads != nullptr, enc);

    Eigen::VectorXd lhat(b);
    Eigen::MatrixXd d_mu_z, d_sig_z, d_mu_zt, d_sig_zt;
    double d_gamma = 0.0;
    if (grads) {
        d_mu_z.setZero(cfg.kappa1, b);
        d_sig_z.setZero(cfg.kappa1, b);
        d_mu_zt.setZero(cfg.kappa2, b);
        d_sig_zt.setZero(cfg.kappa2, b);
    }

    RowCore core;
    for (Eigen::Index i = 0; i < b; ++i) {
        Eigen::VectorXd obs = mask.col(i).cast<double>();
        row_core_forward(params, x_tilde.col(i), obs, enc.mu_z.col(i), enc.sig_z.col(i),
                         enc.mu_zt.col(i), enc.sig_zt.col(i), noise.eps_z.middleCols(i * K, K),
                         noise.eps_zt.middleCols(i * K, K), noise.eps_x.middleCols(i * K, K),
                         grads != nullptr, core);
        lhat[i] = core.lhat;
        if (grads) {
            row_core_backward(params, obs, noise.eps_z.middleCols(i * K, K),
                              noise.eps_zt.middleCols(i * K, K), noise.eps_x.middleCols(i * K, K),
                              enc.sig_z.col(i), enc.sig_zt.col(i), core, (*coef)[i], *grads,
                              d_mu_z.col(i), d_sig_z.col(i), d_mu_zt.col(i), d_sig_zt.col(i),
                              d_gamma);
        }
    }

    if (grads) {
        Eigen::MatrixXd d_sraw_z =
            (d_sig_z.array() *
             enc.sraw_z.unaryExpr([](double v) { return sigmoid(v); }).array())
                .matrix();
        mlp_backward_batch(params.enc_mu_z, enc.c_mu_z, d_mu_z, grads->enc_mu_z);
        mlp_backward_batch(params.enc_s_z, enc.c_s_z, d_sraw_z, grads->enc_s_z);
        if (cfg.kappa2 > 0) {
            Eigen::MatrixXd d_sraw_zt =
                (d_sig_zt.array() *
                 enc.sraw_zt.unaryExpr([](double v) { return sigmoid(v); }).array())
                    .matrix();
            mlp_backward_batch(params.enc_mu_zt, enc.c_mu_zt, d_mu_zt, grads->enc_mu_zt);
            mlp_backward_batch(params.enc_s_zt, enc.c_s_zt, d_sraw_zt, grads->enc_s_zt);
        }
        grads->d_raw_gamma += d_gamma * sigmoid(params.raw_gamma);
    }
    return lhat;
}

}  // namespace imiwae
