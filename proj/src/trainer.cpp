#include "imiwae/trainer.hpp"

#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>

#include "imiwae/errors.hpp"

namespace imiwae {

namespace {

constexpr uint64_t kInitStream = 0x30;
constexpr uint64_t kShuffleStream = 0x31;
constexpr uint64_t kNoiseStream = 0x32;

double param_norm(ModelParams& params) {
    double acc = 0.0;
    for (const auto& b : params.param_blocks()) {
        Eigen::Map<const Eigen::ArrayXd> v(b.data, b.size);
        acc += v.square().sum();
    }
    return std::sqrt(acc);
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) throw SpecError("TrainConfig: batch_size must be >= 1");
    if (max_epochs < 1) throw SpecError("TrainConfig: max_epochs must be >= 1");
    if (learning_rate <= 0.0) throw SpecError("TrainConfig: learning_rate must be > 0");
    if (convergence_window < 0) throw SpecError("TrainConfig: convergence_window must be >= 0");
    if (convergence_window > 0 && convergence_window < 2)
        throw SpecError("TrainConfig: convergence_window must be >= 2 when enabled");
    if (optimizer != "adam" && optimizer != "sgd")
        throw SpecError("TrainConfig: optimizer must be adam or sgd");
}

bool early_stop(const std::vector<double>& trace, int window, double tol) {
    if (window < 2) throw SpecError("early_stop: window must be >= 2");
    const int n = static_cast<int>(trace.size());
    if (n < 2 * window) return false;
    double prev = std::accumulate(trace.end() - 2 * window, trace.end() - window, 0.0) / window;
    double recent = std::accumulate(trace.end() - window, trace.end(), 0.0) / window;
    double improvement = (prev - recent) / std::max(std::abs(prev), 1e-12);
    return improvement < tol;
}

ModelParams initial_params(const ModelConfig& model_config, const TrainConfig& train_config) {
    SeededRng init_rng = SeededRng(train_config.seed).substream(kInitStream);
    return ModelParams::init(model_config, init_rng);
}

TrainResult train(const DataTable& table, const ModelConfig& model_config,
                  const TrainConfig& train_config) {
    return train_from(initial_params(model_config, train_config), table, train_config);
}

TrainResult train_from(ModelParams params, const DataTable& table,
                       const TrainConfig& train_config) {
    train_config.validate();
    const ModelConfig& cfg = params.config;
    if (table.cols() != cfg.p)
        throw ShapeError("train: table has " + std::to_string(table.cols()) +
                         " columns, model expects " + std::to_string(cfg.p));
    if (table.count_fully_missing() > 0)
        throw DomainError("train: table contains fully missing rows; filter them first");

    const Eigen::Index n = table.rows();
    const int b = train_config.batch_size;
    const Eigen::Index steps_per_epoch = (n + b - 1) / b;

    // The trainer reads masked cells only through the zero-filled view.
    const Eigen::MatrixXd x_all = table.zero_filled().transpose();  // p x n
    const Eigen::MatrixXi m_all = table.mask.transpose();           // p x n

    SeededRng shuffle_rng = SeededRng(train_config.seed).substream(kShuffleStream);
    SeededRng noise_rng = SeededRng(train_config.seed).substream(kNoiseStream);

    ModelGrads grads = ModelGrads::zeros_like(params);
    std::vector<ParamBlock> blocks = params.param_blocks();
    AdamState adam = AdamState::zeros(blocks);
    AdamConfig adam_cfg;
    adam_cfg.lr = train_config.learning_rate;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    TrainTrace& trace = result.trace;
    ModelParams last_good = params;

    Eigen::MatrixXd xb(cfg.p, b);
    Eigen::MatrixXi mb(cfg.p, b);

    for (int epoch = 0; epoch < train_config.max_epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);
        double epoch_lhat_sum = 0.0;
        for (Eigen::Index s = 0; s < steps_per_epoch; ++s) {
            const Eigen::Index begin = s * b;
            const int bs = static_cast<int>(std::min<Eigen::Index>(b, n - begin));
            xb.resize(cfg.p, bs);
            mb.resize(cfg.p, bs);
            for (int i = 0; i < bs; ++i) {
                xb.col(i) = x_all.col(order[begin + i]);
                mb.col(i) = m_all.col(order[begin + i]);
            }
            NoisePack noise = NoisePack::draw(cfg, bs, cfg.K, noise_rng);
            grads.set_zero();
            // minimize the mean of -L_hat over the minibatch
            Eigen::VectorXd coef = Eigen::VectorXd::Constant(bs, -1.0 / bs);
            Eigen::VectorXd lhat;
            try {
                lhat = batch_lhat(params, xb, mb, noise, &grads, &coef);
            } catch (const NumericError& e) {
                result.params = last_good;
                result.aborted = true;
                result.diagnostic = std::string("objective failed at epoch ") +
                                    std::to_string(epoch) + ", step " + std::to_string(s) + ": " +
                                    e.what();
                return result;
            }
            if (!lhat.allFinite()) {
                result.params = last_good;
                result.aborted = true;
                result.diagnostic = "non-finite objective at epoch " + std::to_string(epoch) +
                                    ", step " + std::to_string(s);
                return result;
            }
            epoch_lhat_sum += lhat.sum();

            std::vector<GradBlock> gblocks = params.grad_blocks(grads);
            try {
                if (train_config.optimizer == "adam")
                    adam_step(blocks, gblocks, adam, adam_cfg);
                else
                    sgd_step(blocks, gblocks, train_config.learning_rate);
            } catch (const NumericError& e) {
                result.params = last_good;
                result.aborted = true;
                result.diagnostic = std::string("optimizer failed at epoch ") +
                                    std::to_string(epoch) + ": " + e.what();
                return result;
            }
            ++trace.total_steps;
        }

        if (!params.all_finite()) {
            result.params = last_good;
            result.aborted = true;
            result.diagnostic = "non-finite parameters after epoch " + std::to_string(epoch);
            return result;
        }

        auto t1 = std::chrono::steady_clock::now();
        trace.epoch_neg_lhat.push_back(-epoch_lhat_sum / static_cast<double>(n));
        trace.epoch_wall_seconds.push_back(std::chrono::duration<double>(t1 - t0).count());
        trace.epoch_param_norm.push_back(param_norm(params));
        trace.epochs_run = epoch + 1;

        if (train_config.verbose && (epoch % 100 == 0 || epoch + 1 == train_config.max_epochs))
            std::cerr << "[train] epoch " << epoch << " mean -L_hat "
                      << trace.epoch_neg_lhat.back() << "\n";

        if (train_config.checkpoint_every > 0 &&
            (epoch + 1) % train_config.checkpoint_every == 0)
            last_good = params;

        if (train_config.convergence_window > 0 &&
            early_stop(trace.epoch_neg_lhat, train_config.convergence_window,
                       train_config.convergence_tol)) {
            trace.early_stopped = true;
            break;
        }
    }

    result.params = std::move(params);
    return result;
}

}  // namespace imiwae
