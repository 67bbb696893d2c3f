#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vamkit/dataset.hpp"

namespace vamkit {

struct Triplet {
    std::string anchor;
    std::string positive;
    std::string negative;
    friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct TripletLossConfig {
    double margin = 0.2;
};

inline constexpr double kDefaultMargin = 0.2;
inline constexpr double kDifficultMargin = 0.5;

/// max(0, |a-p|^2 - |a-n|^2 + margin).
double triplet_loss(std::span<const float> a, std::span<const float> p, std::span<const float> n, double margin);

struct TripletGrads {
    std::vector<float> da;
    std::vector<float> dp;
    std::vector<float> dn;
};

/// Gradients of triplet_loss; all zero when the hinge is inactive (including the kink).
TripletGrads triplet_loss_grad(std::span<const float> a, std::span<const float> p, std::span<const float> n,
                               double margin);

/// For every (consumer, shop) positive pair of the pool items, `negatives_per_pair`
/// triplets whose negatives are shop images of other pool items.
std::vector<Triplet> sample_triplets_cross_domain(const DatasetManifest& manifest, std::span<const std::size_t> items,
                                                  int negatives_per_pair, std::uint64_t seed);

/// `pairs_per_class` (shop, shop) positive pairs per pool item, drawn with
/// replacement, each with one uniformly drawn negative from another item.
std::vector<Triplet> sample_triplets_inshop(const DatasetManifest& manifest, std::span<const std::size_t> items,
                                            int pairs_per_class, std::uint64_t seed);

}  // namespace vamkit
