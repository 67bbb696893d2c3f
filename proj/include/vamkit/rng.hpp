#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace vamkit {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t x);

/// Derives an independent subsystem seed from a parent seed and a label.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index = 0);

/// Key for the gate-mask stream of one (epoch, batch, layer) triple.
std::uint64_t mask_stream_key(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch, std::uint64_t layer);

/// Counter-based generator: the value at `counter` depends only on (key, counter),
/// so any position can be drawn independently of every other.
std::uint64_t counter_u64(std::uint64_t key, std::uint64_t counter);
/// Uniform double in [0, 1) with 53 random bits.
double counter_uniform(std::uint64_t key, std::uint64_t counter);

/// Sequential stream over the counter generator.
class Stream {
public:
    explicit Stream(std::uint64_t key) : key_(key) {}

    std::uint64_t key() const { return key_; }
    std::uint64_t next_u64() { return counter_u64(key_, counter_++); }
    double uniform() { return counter_uniform(key_, counter_++); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Unbiased integer in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace vamkit
