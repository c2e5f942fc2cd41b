#include "imiwae/rng.hpp"

#include <cmath>

#include "imiwae/errors.hpp"

namespace imiwae {

namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
    uint64_t prod = static_cast<uint64_t>(a) * static_cast<uint64_t>(b);
    hi = static_cast<uint32_t>(prod >> 32);
    lo = static_cast<uint32_t>(prod);
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

std::array<uint32_t, 4> philox4x32(const std::array<uint32_t, 4>& counter,
                                   const std::array<uint32_t, 2>& key) {
    std::array<uint32_t, 4> x = counter;
    uint32_t k0 = key[0];
    uint32_t k1 = key[1];
    for (int round = 0; round < 10; ++round) {
        uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kPhiloxM0, x[0], hi0, lo0);
        mulhilo(kPhiloxM1, x[2], hi1, lo1);
        x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
        k0 += kPhiloxW0;
        k1 += kPhiloxW1;
    }
    return x;
}

SeededRng::SeededRng(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

SeededRng SeededRng::substream(uint64_t id) const {
    return SeededRng(seed_, splitmix64(stream_ ^ splitmix64(id)));
}

void SeededRng::refill() {
    std::array<uint32_t, 4> ctr = {
        static_cast<uint32_t>(counter_),
        static_cast<uint32_t>(counter_ >> 32),
        static_cast<uint32_t>(stream_),
        static_cast<uint32_t>(stream_ >> 32),
    };
    std::array<uint32_t, 2> key = {
        static_cast<uint32_t>(seed_),
        static_cast<uint32_t>(seed_ >> 32),
    };
    buf_ = philox4x32(ctr, key);
    ++counter_;
    buf_index_ = 0;
}

uint32_t SeededRng::next_u32() {
    if (buf_index_ >= 4) refill();
    return buf_[buf_index_++];
}

uint64_t SeededRng::next_u64() {
    uint64_t lo = next_u32();
    uint64_t hi = next_u32();
    return (hi << 32) | lo;
}

double SeededRng::uniform() {
    // (x + 0.5) / 2^32 lies strictly inside (0, 1).
    return (static_cast<double>(next_u32()) + 0.5) * 0x1p-32;
}

double SeededRng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * M_PI * u2;
    cached_normal_ = radius * std::sin(angle);
    has_cached_normal_ = true;
    return radius * std::cos(angle);
}

uint64_t SeededRng::next_below(uint64_t n) {
    if (n == 0) throw DomainError("next_below: n must be >= 1");
    return (static_cast<uint64_t>(next_u32()) * n) >> 32;
}

Eigen::VectorXd SeededRng::normal_vector(Eigen::Index n) {
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = normal();
    return out;
}

void SeededRng::fill_normal(Eigen::Ref<Eigen::MatrixXd> out) {
    for (Eigen::Index c = 0; c < out.cols(); ++c)
        for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, c) = normal();
}

SeededRng::State SeededRng::state() const {
    return State{counter_, buf_index_, has_cached_normal_, cached_normal_};
}

void SeededRng::restore(const State& s) {
    counter_ = s.counter;
    has_cached_normal_ = s.has_cached_normal;
    cached_normal_ = s.cached_normal;
    buf_index_ = 4;
    if (s.buf_index < 4) {
        // Re-derive the partially consumed block.
        --counter_;
        refill();
        buf_index_ = s.buf_index;
    }
}

ReparamSample sample_gaussian_reparam(const Eigen::VectorXd& mean, const Eigen::VectorXd& scale,
                                      SeededRng& rng) {
    if (mean.size() != scale.size())
        throw ShapeError("sample_gaussian_reparam: mean/scale length mismatch");
    if ((scale.array() <= 0.0).any())
        throw DomainError("sample_gaussian_reparam: scale entries must be > 0");
    ReparamSample s;
    s.eps = rng.normal_vector(mean.size());
    s.sample = mean + scale.cwiseProduct(s.eps);
    return s;
}

uint64_t fnv1a64(const void* data, size_t len, uint64_t h) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace imiwae
