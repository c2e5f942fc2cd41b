#pragma once

#include <vector>

#include <Eigen/Dense>

#include "imiwae/rng.hpp"

namespace imiwae {

// Dense feed-forward net: tanh on hidden layers, identity on the output.
struct Mlp {
    std::vector<int> layer_dims;             // [in, hidden..., out]
    std::vector<Eigen::MatrixXd> weights;    // weights[l]: dims[l+1] x dims[l]
    std::vector<Eigen::VectorXd> biases;     // biases[l]: dims[l+1]

    int input_dim() const { return layer_dims.front(); }
    int output_dim() const { return layer_dims.back(); }
    int num_layers() const { return static_cast<int>(weights.size()); }
    Eigen::Index param_count() const;

    static Mlp zeros(const std::vector<int>& dims);
    // Glorot-uniform weights, zero biases.
    static Mlp glorot(const std::vector<int>& dims, SeededRng& rng);

    void check_shapes() const;
};

// Post-activation values kept for the backward pass; act[0] is the input.
struct MlpCache {
    std::vector<Eigen::MatrixXd> act;
};

struct MlpGrad {
    std::vector<Eigen::MatrixXd> d_weights;
    std::vector<Eigen::VectorXd> d_biases;

    static MlpGrad zeros_like(const Mlp& net);
    void set_zero();
};

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& input);

// One column per sample. Pass a cache to enable mlp_backward_batch.
Eigen::MatrixXd mlp_forward_batch(const Mlp& net, const Eigen::MatrixXd& input,
                                  MlpCache* cache = nullptr);

// Accumulates parameter gradients into grad and returns the input gradient.
Eigen::MatrixXd mlp_backward_batch(const Mlp& net, const MlpCache& cache,
                                   const Eigen::MatrixXd& output_grad, MlpGrad& grad);

struct MlpBackwardResult {
    MlpGrad grad;
    Eigen::VectorXd input_grad;
};
MlpBackwardResult mlp_backward(const Mlp& net, const Eigen::VectorXd& input,
                               const Eigen::VectorXd& output_grad);

}  // namespace imiwae
