#include "vamkit/rng.hpp"

#include "vamkit/error.hpp"

namespace vamkit {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
    return mix64(mix64(mix64(seed) ^ fnv1a(label)) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

std::uint64_t mask_stream_key(std::uint64_t seed, std::uint64_t epoch, std::uint64_t batch, std::uint64_t layer) {
    std::uint64_t k = derive_seed(seed, "gate-mask");
    k = mix64(k ^ mix64(epoch));
    k = mix64(k ^ mix64(batch + 0x1000));
    return mix64(k ^ mix64(layer + 0x2000));
}

std::uint64_t counter_u64(std::uint64_t key, std::uint64_t counter) {
    return mix64(key ^ mix64(counter));
}

double counter_uniform(std::uint64_t key, std::uint64_t counter) {
    return static_cast<double>(counter_u64(key, counter) >> 11) * 0x1.0p-53;
}

std::uint64_t Stream::below(std::uint64_t n) {
    if (n == 0) throw Error("Stream::below: empty range");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) return r % n;
    }
}

}  // namespace vamkit
