#include "imiwae/missingness.hpp"

#include <algorithm>
#include <cmath>

#include "imiwae/errors.hpp"
#include "imiwae/mlp.hpp"
#include "imiwae/rng.hpp"

namespace imiwae {

namespace {

constexpr uint64_t kCoeffStream = 0x20;
constexpr uint64_t kNoiseStream = 0x21;
constexpr double kLogitClamp = 30.0;

double sigmoid_clamped(double logit) {
    double t = std::clamp(logit, -kLogitClamp, kLogitClamp);
    return 1.0 / (1.0 + std::exp(-t));
}

Mlp uniform_net(const std::vector<int>& dims, SeededRng& rng) {
    Mlp net = Mlp::zeros(dims);
    for (size_t l = 0; l < net.weights.size(); ++l) {
        for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j)
            for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i)
                net.weights[l](i, j) = 2.0 * rng.uniform() - 1.0;
        for (Eigen::Index i = 0; i < net.biases[l].size(); ++i)
            net.biases[l][i] = 2.0 * rng.uniform() - 1.0;
    }
    return net;
}

// One Bernoulli indicator per group; logits (num_groups x n) before offset,
// plus the noise realization. Both calibration and the final mask reuse this
// so the calibrated rate is exactly what gets applied.
struct Realization {
    std::vector<std::vector<int>> groups;
    Eigen::MatrixXd logits;   // num_groups x n
    Eigen::MatrixXd unif;     // latent: num_groups x n, threshold: 1 x n (shared per row)
    bool latent_form = false; // latent: R=1{u < sigma}; threshold: R=1{u > sigma}
};

Realization realize(const DataTable& table, const MissingnessSpec& spec) {
    const Eigen::Index n = table.rows();
    const int p = static_cast<int>(table.cols());
    spec.validate(p);

    Realization real;
    real.groups = spec.resolved_groups(p);
    real.latent_form = spec.mechanism == Mechanism::latent;
    const int num_groups = static_cast<int>(real.groups.size());

    SeededRng coeff_rng = SeededRng(spec.seed).substream(kCoeffStream);
    SeededRng noise_rng = SeededRng(spec.seed).substream(kNoiseStream);

    const int zt_dim = real.latent_form ? spec.latent_dim : 0;
    Eigen::MatrixXd zt;
    if (zt_dim > 0) {
        zt.resize(zt_dim, n);
        noise_rng.fill_normal(zt);
    }

    real.logits.resize(num_groups, n);
    const Eigen::MatrixXd xt = table.values.transpose();  // p x n
    for (int g = 0; g < num_groups; ++g) {
        std::vector<int> inputs;
        if (spec.self_censoring_allowed) {
            for (int j = 0; j < p; ++j) inputs.push_back(j);
        } else {
            std::vector<char> in_group(p, 0);
            for (int j : real.groups[g]) in_group[j] = 1;
            for (int j = 0; j < p; ++j)
                if (!in_group[j]) inputs.push_back(j);
        }
        const int in_dim = static_cast<int>(inputs.size()) + zt_dim;
        std::vector<int> dims = spec.linearity == Linearity::linear
                                    ? std::vector<int>{in_dim, 1}
                                    : std::vector<int>{in_dim, spec.hidden_width, 1};
        Mlp net = uniform_net(dims, coeff_rng);

        Eigen::MatrixXd in(in_dim, n);
        for (size_t k = 0; k < inputs.size(); ++k) in.row(k) = xt.row(inputs[k]);
        if (zt_dim > 0) in.bottomRows(zt_dim) = zt;
        real.logits.row(g) = mlp_forward_batch(net, in);
    }

    if (real.latent_form) {
        real.unif.resize(num_groups, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (int g = 0; g < num_groups; ++g) real.unif(g, i) = noise_rng.uniform();
    } else {
        real.unif.resize(1, n);
        for (Eigen::Index i = 0; i < n; ++i) real.unif(0, i) = noise_rng.uniform();
    }
    return real;
}

Eigen::MatrixXi make_mask(const Realization& real, int p, LogitOffset offset) {
    const Eigen::Index n = real.logits.cols();
    Eigen::MatrixXi mask(n, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (size_t g = 0; g < real.groups.size(); ++g) {
            double prob = sigmoid_clamped(real.logits(g, i) + offset.value);
            int r;
            if (real.latent_form)
                r = real.unif(g, i) < prob ? 1 : 0;
            else
                r = real.unif(0, i) > prob ? 1 : 0;
            for (int j : real.groups[g]) mask(i, static_cast<int>(j)) = r;
        }
    }
    return mask;
}

double mask_surviving_missing_rate(const Eigen::MatrixXi& mask) {
    Eigen::Index surv = 0;
    Eigen::Index missing = 0;
    for (Eigen::Index i = 0; i < mask.rows(); ++i) {
        if (mask.row(i).sum() == 0) continue;
        ++surv;
        missing += mask.cols() - mask.row(i).sum();
    }
    if (surv == 0) return 1.0;
    return static_cast<double>(missing) / static_cast<double>(surv * mask.cols());
}

DataTable with_mask(const DataTable& table, Eigen::MatrixXi mask) {
    DataTable out = table;
    out.mask = std::move(mask);
    return out;
}

}  // namespace

std::string to_string(Mechanism m) {
    switch (m) {
        case Mechanism::latent: return "latent";
        case Mechanism::threshold: return "threshold";
        case Mechanism::blockwise: return "blockwise";
        case Mechanism::self_censoring: return "self_censoring";
    }
    return "?";
}

std::string to_string(Linearity l) {
    return l == Linearity::linear ? "linear" : "nonlinear";
}

Mechanism mechanism_from_string(const std::string& s) {
    if (s == "latent") return Mechanism::latent;
    if (s == "threshold") return Mechanism::threshold;
    if (s == "blockwise") return Mechanism::blockwise;
    if (s == "self_censoring") return Mechanism::self_censoring;
    throw SpecError("unknown mechanism '" + s + "'");
}

Linearity linearity_from_string(const std::string& s) {
    if (s == "linear") return Linearity::linear;
    if (s == "nonlinear") return Linearity::nonlinear;
    throw SpecError("unknown linearity '" + s + "'");
}

void MissingnessSpec::validate(int p) const {
    if (!(target_lo < target_hi) || target_lo <= 0.0 || target_hi >= 1.0)
        throw SpecError("MissingnessSpec: target interval must satisfy 0 < lo < hi < 1");
    if (mechanism == Mechanism::latent && latent_dim < 1)
        throw SpecError("MissingnessSpec: latent mechanism needs latent_dim >= 1");
    if (hidden_width < 1) throw SpecError("MissingnessSpec: hidden_width must be >= 1");
    if (mechanism == Mechanism::blockwise) {
        auto gs = resolved_groups(p);
        std::vector<int> seen(p, 0);
        for (const auto& g : gs) {
            for (int j : g) {
                if (j < 0 || j >= p)
                    throw SpecError("MissingnessSpec: group contains unknown column " +
                                    std::to_string(j));
                if (seen[j]++)
                    throw SpecError("MissingnessSpec: column " + std::to_string(j) +
                                    " appears in two groups");
            }
        }
        for (int j = 0; j < p; ++j)
            if (!seen[j])
                throw SpecError("MissingnessSpec: groups do not cover column " + std::to_string(j));
    }
    if (mechanism != Mechanism::self_censoring && !self_censoring_allowed && p < 2)
        throw SpecError("MissingnessSpec: mechanism needs p >= 2 without self-censoring");
}

std::vector<std::vector<int>> MissingnessSpec::resolved_groups(int p) const {
    if (mechanism != Mechanism::blockwise) {
        std::vector<std::vector<int>> singletons;
        for (int j = 0; j < p; ++j) singletons.push_back({j});
        return singletons;
    }
    if (!groups.empty()) return groups;
    if (group_size < 1) throw SpecError("MissingnessSpec: group_size must be >= 1");
    std::vector<std::vector<int>> out;
    for (int j = 0; j < p; j += group_size) {
        std::vector<int> g;
        for (int k = j; k < std::min(p, j + group_size); ++k) g.push_back(k);
        out.push_back(std::move(g));
    }
    return out;
}

DataTable apply_latent_mechanism(const DataTable& table, const MissingnessSpec& spec,
                                 LogitOffset offset) {
    if (spec.mechanism != Mechanism::latent)
        throw SpecError("apply_latent_mechanism: spec.mechanism is not latent");
    Realization real = realize(table, spec);
    return with_mask(table, make_mask(real, static_cast<int>(table.cols()), offset));
}

DataTable apply_threshold_mechanism(const DataTable& table, const MissingnessSpec& spec,
                                    LogitOffset offset) {
    if (spec.mechanism != Mechanism::threshold)
        throw SpecError("apply_threshold_mechanism: spec.mechanism is not threshold");
    Realization real = realize(table, spec);
    return with_mask(table, make_mask(real, static_cast<int>(table.cols()), offset));
}

DataTable apply_blockwise(const DataTable& table, const MissingnessSpec& spec,
                          LogitOffset offset) {
    if (spec.mechanism != Mechanism::blockwise)
        throw SpecError("apply_blockwise: spec.mechanism is not blockwise");
    Realization real = realize(table, spec);
    return with_mask(table, make_mask(real, static_cast<int>(table.cols()), offset));
}

DataTable apply_self_censoring(const DataTable& table) {
    const Eigen::Index n = table.rows();
    const int p = static_cast<int>(table.cols());
    const int observed_cols = (p + 1) / 2;
    DataTable out = table;
    out.mask = Eigen::MatrixXi::Ones(n, p);
    for (int j = observed_cols; j < p; ++j) {
        double mean = table.values.col(j).mean();
        for (Eigen::Index i = 0; i < n; ++i)
            out.mask(i, j) = table.values(i, j) > mean ? 0 : 1;
    }
    return out;
}

LogitOffset calibrate_offset(const DataTable& table, const MissingnessSpec& spec) {
    if (spec.mechanism == Mechanism::self_censoring)
        throw SpecError("calibrate_offset: self_censoring has no offset");
    Realization real = realize(table, spec);
    const int p = static_cast<int>(table.cols());
    auto rate_at = [&](double off) {
        return mask_surviving_missing_rate(make_mask(real, p, LogitOffset{off}));
    };

    // Observation probability rises with the offset under the latent form and
    // falls under the threshold form, so the missing rate is monotone either
    // way; orient the bracket accordingly.
    const bool rate_increasing = !real.latent_form;
    double lo_off = -80.0, hi_off = 80.0;
    double rate_lo = rate_at(lo_off), rate_hi = rate_at(hi_off);
    if (!rate_increasing) std::swap(rate_lo, rate_hi);
    // rate_lo = rate at the low-rate end, rate_hi at the high-rate end
    if (spec.target_hi < rate_lo || spec.target_lo > rate_hi)
        throw CalibrationError("target missing rate [" + std::to_string(spec.target_lo) + ", " +
                               std::to_string(spec.target_hi) + "] unreachable (achievable [" +
                               std::to_string(rate_lo) + ", " + std::to_string(rate_hi) + "])");

    double a = lo_off, b = hi_off;
    for (int step = 0; step < 60; ++step) {
        double mid = 0.5 * (a + b);
        double r = rate_at(mid);
        if (r >= spec.target_lo && r <= spec.target_hi) return LogitOffset{mid};
        bool too_low = r < spec.target_lo;
        if (too_low == rate_increasing)
            a = mid;
        else
            b = mid;
    }
    throw CalibrationError("no offset reaches missing rate in [" + std::to_string(spec.target_lo) +
                           ", " + std::to_string(spec.target_hi) + "] after 60 bisection steps");
}

DataTable apply_mechanism(const DataTable& table, const MissingnessSpec& spec) {
    if (spec.mechanism == Mechanism::self_censoring) return apply_self_censoring(table);
    LogitOffset offset = calibrate_offset(table, spec);
    Realization real = realize(table, spec);
    return with_mask(table, make_mask(real, static_cast<int>(table.cols()), offset));
}

double surviving_missing_rate(const DataTable& table) {
    return mask_surviving_missing_rate(table.mask);
}

Eigen::MatrixXd missingness_probabilities(const DataTable& table, const MissingnessSpec& spec,
                                          LogitOffset offset) {
    if (spec.mechanism == Mechanism::self_censoring)
        throw SpecError("missingness_probabilities: self_censoring is deterministic");
    Realization real = realize(table, spec);
    const int p = static_cast<int>(table.cols());
    Eigen::MatrixXd prob(table.rows(), p);
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
        for (size_t g = 0; g < real.groups.size(); ++g) {
            double sig = sigmoid_clamped(real.logits(g, i) + offset.value);
            // latent form: sigma is the observation probability
            double miss = real.latent_form ? 1.0 - sig : sig;
            for (int j : real.groups[g]) prob(i, j) = miss;
        }
    }
    return prob;
}

}  // namespace imiwae
