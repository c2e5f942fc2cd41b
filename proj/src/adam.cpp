#include "imiwae/adam.hpp"

#include <cmath>

#include "imiwae/errors.hpp"

namespace imiwae {

namespace {

void check_grads_finite(const std::vector<GradBlock>& grads) {
    for (const auto& g : grads) {
        for (Eigen::Index i = 0; i < g.size; ++i) {
            if (!std::isfinite(g.data[i]))
                throw NumericError("non-finite gradient at " + g.name + "[" + std::to_string(i) +
                                   "]");
        }
    }
}

void check_aligned(const std::vector<ParamBlock>& params, const std::vector<GradBlock>& grads) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: block count mismatch");
    for (size_t b = 0; b < params.size(); ++b)
        if (params[b].size != grads[b].size)
            throw ShapeError("adam_step: block size mismatch at " + params[b].name);
}

}  // namespace

AdamState AdamState::zeros(const std::vector<ParamBlock>& blocks) {
    AdamState s;
    for (const auto& b : blocks) {
        s.m.push_back(Eigen::ArrayXd::Zero(b.size));
        s.v.push_back(Eigen::ArrayXd::Zero(b.size));
    }
    return s;
}

bool AdamState::matches(const std::vector<ParamBlock>& blocks) const {
    if (m.size() != blocks.size() || v.size() != blocks.size()) return false;
    for (size_t b = 0; b < blocks.size(); ++b)
        if (m[b].size() != blocks[b].size || v[b].size() != blocks[b].size) return false;
    return true;
}

void adam_step(std::vector<ParamBlock>& params, const std::vector<GradBlock>& grads,
               AdamState& state, const AdamConfig& cfg) {
    check_aligned(params, grads);
    if (!state.matches(params)) throw ShapeError("adam_step: state does not match parameters");
    check_grads_finite(grads);

    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (size_t b = 0; b < params.size(); ++b) {
        Eigen::Map<Eigen::ArrayXd> p(params[b].data, params[b].size);
        Eigen::Map<const Eigen::ArrayXd> g(grads[b].data, grads[b].size);
        state.m[b] = cfg.beta1 * state.m[b] + (1.0 - cfg.beta1) * g;
        state.v[b] = cfg.beta2 * state.v[b] + (1.0 - cfg.beta2) * g.square();
        p -= cfg.lr * (state.m[b] / bc1) / ((state.v[b] / bc2).sqrt() + cfg.eps);
    }
}

void sgd_step(std::vector<ParamBlock>& params, const std::vector<GradBlock>& grads, double lr) {
    check_aligned(params, grads);
    check_grads_finite(grads);
    for (size_t b = 0; b < params.size(); ++b) {
        Eigen::Map<Eigen::ArrayXd> p(params[b].data, params[b].size);
        Eigen::Map<const Eigen::ArrayXd> g(grads[b].data, grads[b].size);
        p -= lr * g;
    }
}

}  // namespace imiwae
