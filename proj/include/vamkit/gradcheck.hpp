#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vamkit/network.hpp"

namespace vamkit {

inline constexpr double kFiniteDifferenceStep = 1e-3;
inline constexpr double kLayerRelTolerance = 1e-3;
inline constexpr double kLayerAbsTolerance = 1e-5;
inline constexpr double kNetworkRelTolerance = 1e-2;
inline constexpr double kNetworkAbsTolerance = 1e-4;

/// Result of comparing analytic and central-difference gradients for one target.
struct GradcheckEntry {
    std::string name;
    std::size_t checked = 0;
    std::size_t skipped = 0;     // samples whose perturbation crossed a relu or maxpool kink
    double max_rel_error = 0.0;  // over components, |a - f| / max(|a|, |f|)
    double max_abs_error = 0.0;
    double rel_tolerance = 0.0;
    double abs_tolerance = 0.0;
    bool pass = true;  // every component within the rel OR the abs tolerance
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;

    bool all_pass() const;
    std::string text() const;
};

/// Accumulates one component comparison into an entry.
void record(GradcheckEntry& entry, double analytic, double numeric);

/// Every layer kind, stride-2 convolution and the product gate (dx and dp), on
/// seeded inputs in [-1, 1] with dims <= 8. Tolerance: rel 1e-3 or abs 1e-5.
GradcheckReport gradcheck_layers(std::uint64_t seed);

/// Full eval-mode network with a product gate and learned attention head:
/// `n_params` sampled parameters overall plus `n_params` from the attention head.
/// A sample whose +-step perturbation changes any relu sign or maxpool argmax is
/// redrawn, since the central difference then straddles a kink.
/// Tolerance: rel 1e-2 or abs 1e-4.
GradcheckReport gradcheck_network(const NetworkConfig& config, std::size_t n_params, std::uint64_t seed);

}  // namespace vamkit
