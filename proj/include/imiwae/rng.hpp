#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

namespace imiwae {

// Philox4x32-10 counter block function (Salmon et al. 2011).
std::array<uint32_t, 4> philox4x32(const std::array<uint32_t, 4>& counter,
                                   const std::array<uint32_t, 2>& key);

// Counter-based generator: a (seed, stream) pair addresses an independent
// random sequence, so replications and per-row substreams never overlap.
// Identical seed/stream gives the identical sequence on every platform.
class SeededRng {
  public:
    static constexpr const char* kAlgorithm = "philox4x32-10";

    explicit SeededRng(uint64_t seed, uint64_t stream = 0);

    // Derived stream, decorrelated from the parent and from other substreams.
    SeededRng substream(uint64_t id) const;

    uint32_t next_u32();
    uint64_t next_u64();

    double uniform();  // strictly inside (0, 1)
    double normal();   // standard normal via Box-Muller

    // Index in [0, n); n >= 1.
    uint64_t next_below(uint64_t n);

    Eigen::VectorXd normal_vector(Eigen::Index n);
    void fill_normal(Eigen::Ref<Eigen::MatrixXd> out);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }
    uint64_t position() const { return counter_; }

    // Restores an exact mid-sequence state (used by checkpoints).
    struct State {
        uint64_t counter = 0;
        int buf_index = 4;
        bool has_cached_normal = false;
        double cached_normal = 0.0;
    };
    State state() const;
    void restore(const State& s);

  private:
    void refill();

    uint64_t seed_ = 0;
    uint64_t stream_ = 0;
    uint64_t counter_ = 0;
    std::array<uint32_t, 4> buf_{};
    int buf_index_ = 4;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

// sample = mean + scale .* eps with eps ~ N(0, I); eps is returned so
// gradients can flow through mean and scale.
struct ReparamSample {
    Eigen::VectorXd sample;
    Eigen::VectorXd eps;
};
ReparamSample sample_gaussian_reparam(const Eigen::VectorXd& mean, const Eigen::VectorXd& scale,
                                      SeededRng& rng);

// 64-bit FNV-1a, used to derive content-keyed substreams.
uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 1469598103934665603ull);

}  // namespace imiwae
