#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace imiwae {

// Mutable / const views over a flat list of parameter tensors. Block names
// show up in numeric error messages ("enc_mu_z.w0[12]").
struct ParamBlock {
    std::string name;
    double* data = nullptr;
    Eigen::Index size = 0;
};

struct GradBlock {
    std::string name;
    const double* data = nullptr;
    Eigen::Index size = 0;
};

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    long step = 0;
    std::vector<Eigen::ArrayXd> m;
    std::vector<Eigen::ArrayXd> v;

    static AdamState zeros(const std::vector<ParamBlock>& blocks);
    bool matches(const std::vector<ParamBlock>& blocks) const;
};

// Standard Adam with bias correction; increments state.step.
// Throws NumericError naming the offending block on non-finite gradients.
void adam_step(std::vector<ParamBlock>& params, const std::vector<GradBlock>& grads,
               AdamState& state, const AdamConfig& cfg);

// Plain SGD, exposed as a config option.
void sgd_step(std::vector<ParamBlock>& params, const std::vector<GradBlock>& grads, double lr);

}  // namespace imiwae
