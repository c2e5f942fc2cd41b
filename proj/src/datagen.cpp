#include "imiwae/datagen.hpp"

#include <cmath>

#include "imiwae/errors.hpp"

namespace imiwae {

namespace {

// Substream ids inside a generation seed.
constexpr uint64_t kCoeffStream = 0x10;
constexpr uint64_t kLatentStream = 0x11;
constexpr uint64_t kNoiseStream = 0x12;
constexpr uint64_t kPatternStream = 0x13;

Mlp uniform_coefficient_net(const std::vector<int>& dims, SeededRng& rng) {
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

}  // namespace

void LatentFactorSpec::validate() const {
    if (n < 1) throw DomainError("LatentFactorSpec: n must be >= 1");
    if (p < 1) throw DomainError("LatentFactorSpec: p must be >= 1");
    if (q1 < 1) throw DomainError("LatentFactorSpec: q1 must be >= 1");
    if (noise_std < 0.0) throw DomainError("LatentFactorSpec: noise_std must be >= 0");
    if (hidden_width < 1) throw DomainError("LatentFactorSpec: hidden_width must be >= 1");
}

std::vector<Mlp> latent_factor_maps(const LatentFactorSpec& spec) {
    spec.validate();
    SeededRng coeff_rng = SeededRng(spec.seed).substream(kCoeffStream);
    std::vector<Mlp> maps;
    maps.reserve(spec.p);
    for (int j = 0; j < spec.p; ++j)
        maps.push_back(uniform_coefficient_net({spec.q1, spec.hidden_width, 1}, coeff_rng));
    return maps;
}

DataTable gen_latent_factor_data(const LatentFactorSpec& spec) {
    spec.validate();
    std::vector<Mlp> maps = latent_factor_maps(spec);
    SeededRng latent_rng = SeededRng(spec.seed).substream(kLatentStream);
    SeededRng noise_rng = SeededRng(spec.seed).substream(kNoiseStream);

    Eigen::MatrixXd z(spec.q1, spec.n);
    latent_rng.fill_normal(z);

    Eigen::MatrixXd values(spec.n, spec.p);
    for (int j = 0; j < spec.p; ++j) {
        Eigen::MatrixXd fj = mlp_forward_batch(maps[j], z);  // 1 x n
        values.col(j) = fj.transpose();
    }
    if (spec.noise_std > 0.0) {
        Eigen::MatrixXd eps(spec.n, spec.p);
        noise_rng.fill_normal(eps);
        values += spec.noise_std * eps;
    }
    return DataTable::fully_observed(std::move(values));
}

int pattern_index(const Eigen::VectorXi& r) {
    int idx = 0;
    for (Eigen::Index j = 0; j < r.size(); ++j)
        if (r[j] != 0) idx |= 1 << j;
    return idx;
}

Eigen::VectorXi pattern_bits(int index, int p) {
    Eigen::VectorXi r(p);
    for (int j = 0; j < p; ++j) r[j] = (index >> j) & 1;
    return r;
}

GaussianMixtureSpec GaussianMixtureSpec::reference(Eigen::Index n, uint64_t seed) {
    GaussianMixtureSpec spec;
    spec.n = n;
    spec.seed = seed;
    // Pattern order in the source listing: (1,0,0), (0,1,0), (1,1,0), (0,0,1),
    // (1,0,1), (0,1,1), (1,1,1), (0,0,0); stored here by little-endian index.
    spec.pattern_probs = {0.068, 0.169, 0.153, 0.136, 0.119, 0.102, 0.085, 0.169};
    spec.h[pattern_index((Eigen::VectorXi(3) << 1, 0, 0).finished())] << 1.4, 1.6, 0.9;
    spec.h[pattern_index((Eigen::VectorXi(3) << 0, 1, 0).finished())] << 1.9, 1.1, 1.4;
    spec.h[pattern_index((Eigen::VectorXi(3) << 1, 1, 0).finished())] << 1.9, 1.6, 0.2;
    spec.h[pattern_index((Eigen::VectorXi(3) << 0, 0, 1).finished())] << 0.5, 1.9, 2.1;
    spec.h[pattern_index((Eigen::VectorXi(3) << 1, 0, 1).finished())] << 0.5, 2.4, 0.9;
    spec.h[pattern_index((Eigen::VectorXi(3) << 0, 1, 1).finished())] << 1.0, 1.9, 1.4;
    spec.h[pattern_index((Eigen::VectorXi(3) << 1, 1, 1).finished())] << 1.0, 2.4, 0.2;
    spec.h[pattern_index((Eigen::VectorXi(3) << 0, 0, 0).finished())] << 1.4, 1.1, 2.1;
    spec.sigma0 << 4.4, 1.3, -2.8,
                   1.3, 3.2, 1.3,
                   -2.8, 1.3, 3.5;
    double total = 0.0;
    for (double q : spec.pattern_probs) total += q;
    for (double& q : spec.pattern_probs) q /= total;  // listed values sum to 1.001
    return spec;
}

void GaussianMixtureSpec::validate() const {
    if (n < 1) throw DomainError("GaussianMixtureSpec: n must be >= 1");
    double total = 0.0;
    for (double q : pattern_probs) {
        if (q < 0.0) throw DomainError("GaussianMixtureSpec: negative pattern probability");
        total += q;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw DomainError("GaussianMixtureSpec: pattern probabilities must sum to 1");
    if ((sigma0 - sigma0.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw DomainError("GaussianMixtureSpec: sigma0 must be symmetric");
    Eigen::LLT<Eigen::Matrix3d> llt(sigma0);
    if (llt.info() != Eigen::Success)
        throw DomainError("GaussianMixtureSpec: sigma0 must be positive definite");
}

DataTable gen_gaussian_mixture(const GaussianMixtureSpec& spec) {
    spec.validate();
    Eigen::LLT<Eigen::Matrix3d> llt(spec.sigma0);
    Eigen::Matrix3d chol = llt.matrixL();

    std::array<double, 8> cum{};
    double acc = 0.0;
    for (int i = 0; i < 8; ++i) {
        acc += spec.pattern_probs[i];
        cum[i] = acc;
    }

    std::array<Eigen::Vector3d, 8> mu;
    for (int i = 0; i < 8; ++i) mu[i] = spec.sigma0 * spec.h[i];

    SeededRng pattern_rng = SeededRng(spec.seed).substream(kPatternStream);
    SeededRng noise_rng = SeededRng(spec.seed).substream(kNoiseStream);

    DataTable table;
    table.values.resize(spec.n, 3);
    table.mask.resize(spec.n, 3);
    for (Eigen::Index i = 0; i < spec.n; ++i) {
        double u = pattern_rng.uniform();
        int idx = 0;
        while (idx < 7 && u > cum[idx]) ++idx;
        Eigen::Vector3d eps = noise_rng.normal_vector(3);
        table.values.row(i) = (mu[idx] + chol * eps).transpose();
        Eigen::VectorXi bits = pattern_bits(idx, 3);
        table.mask.row(i) = bits.transpose();
    }
    return table;
}

Eigen::Vector3d gaussian_mixture_mean(const GaussianMixtureSpec& spec) {
    Eigen::Vector3d m = Eigen::Vector3d::Zero();
    for (int i = 0; i < 8; ++i) m += spec.pattern_probs[i] * (spec.sigma0 * spec.h[i]);
    return m;
}

double gaussian_mixture_complete_case_mean(const GaussianMixtureSpec& spec, int j) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < 8; ++i) {
        if (((i >> j) & 1) == 0) continue;
        num += spec.pattern_probs[i] * (spec.sigma0 * spec.h[i])[j];
        den += spec.pattern_probs[i];
    }
    if (den <= 0.0) throw DomainError("complete_case_mean: column is never observed");
    return num / den;
}

}  // namespace imiwae
