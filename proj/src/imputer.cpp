#include "imiwae/imputer.hpp"

#include <cmath>
#include <iostream>

#include "imiwae/errors.hpp"
#include "imiwae/numerics.hpp"

namespace imiwae {

namespace {

constexpr uint64_t kGenerateStream = 0x40;

// Content-keyed stream: permuting rows permutes their streams with them, so
// per-row outputs do not depend on row order. Duplicate rows share draws.
uint64_t row_stream(const DataTable& table, Eigen::Index i) {
    uint64_t h = 0xA5C3B7E1D9F04712ull;
    for (Eigen::Index j = 0; j < table.cols(); ++j) {
        int m = table.mask(i, j);
        h = fnv1a64(&m, sizeof(m), h);
        if (m == 1) {
            double v = table.values(i, j);
            h = fnv1a64(&v, sizeof(v), h);
        }
    }
    return h;
}

}  // namespace

std::string to_string(ImputeMode m) { return m == ImputeMode::mnar ? "mnar" : "mar"; }

ImputeMode impute_mode_from_string(const std::string& s) {
    if (s == "mnar") return ImputeMode::mnar;
    if (s == "mar") return ImputeMode::mar;
    throw SpecError("unknown impute mode '" + s + "'");
}

void ImputeConfig::validate() const {
    if (B < 1) throw SpecError("ImputeConfig: B must be >= 1");
    if (max_chunk < 1) throw SpecError("ImputeConfig: max_chunk must be >= 1");
}

ImputedTable impute(const ModelParams& params, const DataTable& table,
                    const ImputeConfig& config) {
    config.validate();
    const ModelConfig& cfg = params.config;
    if (table.cols() != cfg.p)
        throw ShapeError("impute: table has " + std::to_string(table.cols()) +
                         " columns, model expects " + std::to_string(cfg.p));

    const Eigen::Index n = table.rows();
    ImputedTable out;
    out.table = table;
    out.table.mask = Eigen::MatrixXi::Ones(n, cfg.p);
    out.original_mask = table.mask;
    out.ess = Eigen::VectorXd::Constant(n, static_cast<double>(config.B));

    const int chunk_samples = std::max(1, config.max_chunk / std::max(1, cfg.p));
    Eigen::Index degenerate_rows = 0;

    for (Eigen::Index i = 0; i < n; ++i) {
        if (table.mask.row(i).sum() == cfg.p) continue;  // nothing to impute

        Eigen::VectorXd x_tilde(cfg.p);
        Eigen::VectorXi mask = table.mask.row(i).transpose();
        for (int j = 0; j < cfg.p; ++j)
            x_tilde[j] = mask[j] == 1 ? table.values(i, j) : 0.0;

        SeededRng rng(config.seed, row_stream(table, i));

        double run_max = -std::numeric_limits<double>::infinity();
        double sum_w = 0.0, sum_w2 = 0.0;
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(cfg.p);

        RowForward fwd;
        int remaining = config.B;
        while (remaining > 0) {
            const int c = std::min(chunk_samples, remaining);
            remaining -= c;
            NoisePack noise = NoisePack::draw(cfg, 1, c, rng);
            row_forward(params, x_tilde, mask, noise.eps_z, noise.eps_zt, noise.eps_x, fwd);
            Eigen::VectorXd log_w =
                config.mode == ImputeMode::mnar ? fwd.log_w : (fwd.log_w - fwd.ll_r).eval();
            if (!log_w.allFinite())
                throw NumericError("impute: non-finite log-weight at row " + std::to_string(i));
            double chunk_max = log_w.maxCoeff();
            if (chunk_max > run_max) {
                double scale = std::isfinite(run_max) ? std::exp(run_max - chunk_max) : 0.0;
                sum_w *= scale;
                sum_w2 *= scale * scale;
                acc *= scale;
                run_max = chunk_max;
            }
            for (int k = 0; k < c; ++k) {
                double w = std::exp(log_w[k] - run_max);
                sum_w += w;
                sum_w2 += w * w;
                acc += w * fwd.xhat.col(k);
            }
        }

        if (sum_w <= 0.0)
            throw NumericError("impute: all weights vanished at row " + std::to_string(i));
        Eigen::VectorXd imputed = acc / sum_w;
        for (int j = 0; j < cfg.p; ++j)
            if (mask[j] == 0) out.table.values(i, j) = imputed[j];
        out.ess[i] = sum_w * sum_w / sum_w2;
        if (out.ess[i] < 0.01 * config.B) ++degenerate_rows;
    }

    if (degenerate_rows > 0)
        std::cerr << "[impute] warning: " << degenerate_rows
                  << " row(s) with effective sample size below 1% of B\n";
    return out;
}

DataTable generate(const ModelParams& params, Eigen::Index n, uint64_t seed) {
    const ModelConfig& cfg = params.config;
    SeededRng rng = SeededRng(seed).substream(kGenerateStream);
    const double sqrt_gam = std::sqrt(params.gamma());

    Eigen::MatrixXd values(n, cfg.p);
    const Eigen::Index chunk = 8192;
    Eigen::MatrixXd z(cfg.kappa1, std::min(chunk, n));
    Eigen::MatrixXd eps(cfg.p, std::min(chunk, n));
    for (Eigen::Index begin = 0; begin < n; begin += chunk) {
        const Eigen::Index c = std::min(chunk, n - begin);
        z.resize(cfg.kappa1, c);
        eps.resize(cfg.p, c);
        for (Eigen::Index i = 0; i < c; ++i) {
            for (int q = 0; q < cfg.kappa1; ++q) z(q, i) = rng.normal();
            for (int j = 0; j < cfg.p; ++j) eps(j, i) = rng.normal();
        }
        Eigen::MatrixXd mu = mlp_forward_batch(params.dec_mu_x, z);
        values.middleRows(begin, c) = (mu + sqrt_gam * eps).transpose();
    }
    return DataTable::fully_observed(std::move(values));
}

DataTable impute_column_mean(const DataTable& table) {
    DataTable out = table;
    out.mask = Eigen::MatrixXi::Ones(table.rows(), table.cols());
    for (Eigen::Index j = 0; j < table.cols(); ++j) {
        double sum = 0.0;
        Eigen::Index cnt = 0;
        for (Eigen::Index i = 0; i < table.rows(); ++i) {
            if (table.mask(i, j) != 1) continue;
            sum += table.values(i, j);
            ++cnt;
        }
        double mean = cnt > 0 ? sum / static_cast<double>(cnt) : 0.0;
        for (Eigen::Index i = 0; i < table.rows(); ++i)
            if (table.mask(i, j) == 0) out.values(i, j) = mean;
    }
    return out;
}

}  // namespace imiwae
