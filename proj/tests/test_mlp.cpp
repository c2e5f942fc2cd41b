#include <doctest.h>

#include <cmath>

#include "imiwae/errors.hpp"
#include "imiwae/mlp.hpp"

using namespace imiwae;

namespace {

// Central finite differences on the scalar loss sum(g .* f(x)) for every
// parameter, the independent oracle the analytic backward is checked against.
void check_gradients(const Mlp& net, const Eigen::VectorXd& input, const Eigen::VectorXd& gout,
                     double step, double rel_tol) {
    MlpBackwardResult res = mlp_backward(net, input, gout);
    Mlp probe = net;
    auto loss = [&]() { return gout.dot(mlp_forward(probe, input)); };
    for (size_t l = 0; l < net.weights.size(); ++l) {
        for (Eigen::Index idx = 0; idx < net.weights[l].size(); ++idx) {
            double saved = probe.weights[l].data()[idx];
            probe.weights[l].data()[idx] = saved + step;
            double up = loss();
            probe.weights[l].data()[idx] = saved - step;
            double down = loss();
            probe.weights[l].data()[idx] = saved;
            double fd = (up - down) / (2.0 * step);
            double analytic = res.grad.d_weights[l].data()[idx];
            double denom = std::max(std::abs(fd), 1e-6);
            CHECK(std::abs(analytic - fd) / denom < rel_tol);
        }
        for (Eigen::Index idx = 0; idx < net.biases[l].size(); ++idx) {
            double saved = probe.biases[l][idx];
            probe.biases[l][idx] = saved + step;
            double up = loss();
            probe.biases[l][idx] = saved - step;
            double down = loss();
            probe.biases[l][idx] = saved;
            double fd = (up - down) / (2.0 * step);
            double analytic = res.grad.d_biases[l][idx];
            double denom = std::max(std::abs(fd), 1e-6);
            CHECK(std::abs(analytic - fd) / denom < rel_tol);
        }
    }
    // input gradient against finite differences too
    Eigen::VectorXd x = input;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double saved = x[i];
        x[i] = saved + step;
        double up = gout.dot(mlp_forward(net, x));
        x[i] = saved - step;
        double down = gout.dot(mlp_forward(net, x));
        x[i] = saved;
        double fd = (up - down) / (2.0 * step);
        double denom = std::max(std::abs(fd), 1e-6);
        CHECK(std::abs(res.input_grad[i] - fd) / denom < rel_tol);
    }
}

}  // namespace

TEST_CASE("zero net maps any input to zero") {
    Mlp net = Mlp::zeros({4, 8, 3});
    Eigen::VectorXd x(4);
    x << 1.0, -2.0, 3.5, 0.25;
    CHECK(mlp_forward(net, x) == Eigen::VectorXd::Zero(3));
}

TEST_CASE("single linear layer with unit weight is the identity") {
    Mlp net = Mlp::zeros({1, 1});
    net.weights[0](0, 0) = 1.0;
    Eigen::VectorXd x(1);
    x << 2.0;
    CHECK(mlp_forward(net, x)[0] == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("1-1-1 net of ones composes tanh as expected") {
    Mlp net = Mlp::zeros({1, 1, 1});
    net.weights[0](0, 0) = 1.0;
    net.biases[0][0] = 1.0;
    net.weights[1](0, 0) = 1.0;
    net.biases[1][0] = 1.0;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
    // 1 + tanh(0 + 1)
    CHECK(mlp_forward(net, x)[0] == doctest::Approx(1.0 + std::tanh(1.0)).epsilon(1e-12));
    CHECK(mlp_forward(net, x)[0] == doctest::Approx(1.7615941559557649).epsilon(1e-12));
}

TEST_CASE("dimension mismatches raise shape errors") {
    Mlp net = Mlp::zeros({3, 2});
    Eigen::VectorXd x(4);
    x.setZero();
    CHECK_THROWS_AS(mlp_forward(net, x), ShapeError);
    Eigen::VectorXd ok(3);
    ok.setZero();
    Eigen::VectorXd bad_g(4);
    bad_g.setZero();
    MlpCache cache;
    mlp_forward_batch(net, ok, &cache);
    MlpGrad grad = MlpGrad::zeros_like(net);
    CHECK_THROWS_AS(mlp_backward_batch(net, cache, bad_g, grad), ShapeError);
}

TEST_CASE("zero output gradient yields zero parameter gradients") {
    SeededRng rng(3, 0);
    Mlp net = Mlp::glorot({3, 5, 2}, rng);
    Eigen::VectorXd x = rng.normal_vector(3);
    MlpBackwardResult res = mlp_backward(net, x, Eigen::VectorXd::Zero(2));
    for (const auto& w : res.grad.d_weights) CHECK(w.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& b : res.grad.d_biases) CHECK(b.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("linear 1-1 net: weight grad = x, bias grad = 1") {
    Mlp net = Mlp::zeros({1, 1});
    net.weights[0](0, 0) = 0.7;
    Eigen::VectorXd x(1), g(1);
    x << 3.25;
    g << 1.0;
    MlpBackwardResult res = mlp_backward(net, x, g);
    CHECK(res.grad.d_weights[0](0, 0) == doctest::Approx(3.25).epsilon(1e-15));
    CHECK(res.grad.d_biases[0][0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("backward matches central finite differences on random small nets") {
    SeededRng rng(17, 0);
    std::vector<std::vector<int>> shapes = {{2, 3}, {3, 4, 2}, {4, 5, 5, 3}, {1, 2, 1}};
    for (const auto& dims : shapes) {
        Mlp net = Mlp::glorot(dims, rng);
        Eigen::VectorXd x = rng.normal_vector(dims.front());
        Eigen::VectorXd g = rng.normal_vector(dims.back());
        check_gradients(net, x, g, 1e-4, 1e-5);
    }
}

TEST_CASE("gradient check covers the architecture family used by the model") {
    SeededRng rng(23, 0);
    // encoder p-H-H-kappa, decoder kappa-H-H-p, linear and one-hidden
    // missingness nets at small width
    std::vector<std::vector<int>> shapes = {{3, 8, 8, 3}, {3, 8, 8, 1}, {4, 3}, {4, 8, 3}};
    for (const auto& dims : shapes) {
        Mlp net = Mlp::glorot(dims, rng);
        Eigen::VectorXd x = rng.normal_vector(dims.front());
        Eigen::VectorXd g = rng.normal_vector(dims.back());
        check_gradients(net, x, g, 1e-4, 1e-4);
    }
}

TEST_CASE("glorot initialization is reproducible and respects bounds") {
    SeededRng a(5, 0), b(5, 0);
    Mlp m1 = Mlp::glorot({4, 6, 2}, a);
    Mlp m2 = Mlp::glorot({4, 6, 2}, b);
    for (size_t l = 0; l < m1.weights.size(); ++l) {
        CHECK(m1.weights[l] == m2.weights[l]);
        CHECK(m1.biases[l].cwiseAbs().maxCoeff() == 0.0);
        double limit = std::sqrt(6.0 / (m1.layer_dims[l] + m1.layer_dims[l + 1]));
        CHECK(m1.weights[l].cwiseAbs().maxCoeff() <= limit);
    }
}

TEST_CASE("batched forward agrees with per-column forward") {
    SeededRng rng(29, 0);
    Mlp net = Mlp::glorot({3, 6, 2}, rng);
    Eigen::MatrixXd in(3, 5);
    rng.fill_normal(in);
    Eigen::MatrixXd out = mlp_forward_batch(net, in);
    for (int c = 0; c < 5; ++c) {
        Eigen::VectorXd one = mlp_forward(net, in.col(c));
        CHECK((out.col(c) - one).cwiseAbs().maxCoeff() < 1e-14);
    }
}
