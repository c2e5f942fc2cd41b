#include "imiwae/mlp.hpp"

#include <cmath>

#include "imiwae/errors.hpp"

namespace imiwae {

Eigen::Index Mlp::param_count() const {
    Eigen::Index n = 0;
    for (size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

void Mlp::check_shapes() const {
    if (layer_dims.size() < 2) throw ShapeError("Mlp: need at least input and output dims");
    if (weights.size() + 1 != layer_dims.size() || biases.size() != weights.size())
        throw ShapeError("Mlp: layer count mismatch");
    for (size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != layer_dims[l + 1] || weights[l].cols() != layer_dims[l])
            throw ShapeError("Mlp: weight matrix shape disagrees with layer_dims at layer " +
                             std::to_string(l));
        if (biases[l].size() != layer_dims[l + 1])
            throw ShapeError("Mlp: bias shape disagrees with layer_dims at layer " +
                             std::to_string(l));
    }
    for (int d : layer_dims)
        if (d < 1) throw ShapeError("Mlp: layer dims must be positive");
}

Mlp Mlp::zeros(const std::vector<int>& dims) {
    Mlp net;
    net.layer_dims = dims;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        net.weights.push_back(Eigen::MatrixXd::Zero(dims[l + 1], dims[l]));
        net.biases.push_back(Eigen::VectorXd::Zero(dims[l + 1]));
    }
    net.check_shapes();
    return net;
}

Mlp Mlp::glorot(const std::vector<int>& dims, SeededRng& rng) {
    Mlp net = zeros(dims);
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        double limit = std::sqrt(6.0 / (dims[l] + dims[l + 1]));
        for (Eigen::Index j = 0; j < net.weights[l].cols(); ++j)
            for (Eigen::Index i = 0; i < net.weights[l].rows(); ++i)
                net.weights[l](i, j) = (2.0 * rng.uniform() - 1.0) * limit;
    }
    return net;
}

MlpGrad MlpGrad::zeros_like(const Mlp& net) {
    MlpGrad g;
    for (size_t l = 0; l < net.weights.size(); ++l) {
        g.d_weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
        g.d_biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return g;
}

void MlpGrad::set_zero() {
    for (auto& w : d_weights) w.setZero();
    for (auto& b : d_biases) b.setZero();
}

Eigen::MatrixXd mlp_forward_batch(const Mlp& net, const Eigen::MatrixXd& input, MlpCache* cache) {
    if (input.rows() != net.input_dim())
        throw ShapeError("mlp_forward: input has " + std::to_string(input.rows()) +
                         " rows, net expects " + std::to_string(net.input_dim()));
    if (cache) {
        cache->act.clear();
        cache->act.reserve(net.weights.size() + 1);
        cache->act.push_back(input);
    }
    Eigen::MatrixXd a = input;
    for (int l = 0; l < net.num_layers(); ++l) {
        Eigen::MatrixXd z = net.weights[l] * a;
        z.colwise() += net.biases[l];
        if (l + 1 < net.num_layers())
            a = z.array().tanh().matrix();
        else
            a = std::move(z);
        if (cache) cache->act.push_back(a);
    }
    return a;
}

Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& input) {
    return mlp_forward_batch(net, input);
}

Eigen::MatrixXd mlp_backward_batch(const Mlp& net, const MlpCache& cache,
                                   const Eigen::MatrixXd& output_grad, MlpGrad& grad) {
    if (output_grad.rows() != net.output_dim())
        throw ShapeError("mlp_backward: output_grad has " + std::to_string(output_grad.rows()) +
                         " rows, net produces " + std::to_string(net.output_dim()));
    if (cache.act.size() != net.weights.size() + 1)
        throw ShapeError("mlp_backward: cache does not match net");
    Eigen::MatrixXd delta = output_grad;  // grad w.r.t. pre-activation of last layer (identity)
    for (int l = net.num_layers() - 1; l >= 0; --l) {
        if (l + 1 < net.num_layers()) {
            // tanh'(z) = 1 - a^2 with a the stored post-activation
            delta = delta.cwiseProduct(
                (1.0 - cache.act[l + 1].array().square()).matrix());
        }
        grad.d_weights[l].noalias() += delta * cache.act[l].transpose();
        grad.d_biases[l].noalias() += delta.rowwise().sum();
        if (l > 0)
            delta = (net.weights[l].transpose() * delta).eval();
        else
            return net.weights[0].transpose() * delta;
    }
    return Eigen::MatrixXd();  // unreachable
}

MlpBackwardResult mlp_backward(const Mlp& net, const Eigen::VectorXd& input,
                               const Eigen::VectorXd& output_grad) {
    MlpCache cache;
    mlp_forward_batch(net, input, &cache);
    MlpBackwardResult res;
    res.grad = MlpGrad::zeros_like(net);
    res.input_grad = mlp_backward_batch(net, cache, output_grad, res.grad);
    return res;
}

}  // namespace imiwae
