#pragma once

#include <filesystem>
#include <vector>

#include "vamkit/config.hpp"
#include "vamkit/network.hpp"
#include "vamkit/training.hpp"

namespace vamkit {

struct Checkpoint {
    RunConfig config;
    EmbeddingNet net;
    int epoch = 0;
    double initial_eval_loss = 0.0;
    std::vector<EpochMetrics> history;
};

/// Writes `dir/manifest.json` and one `<layer_index>_<role>.tns` blob per parameter.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace vamkit
