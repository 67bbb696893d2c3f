#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vamkit/config.hpp"
#include "vamkit/dataset.hpp"
#include "vamkit/network.hpp"
#include "vamkit/triplet.hpp"

namespace vamkit {

/// One velocity tensor per parameter slot; the shared upper stack has one entry per tensor.
struct OptimizerState {
    std::vector<Tensor> velocity;

    static OptimizerState for_network(const EmbeddingNet& net);
};

/// v <- momentum * v - lr * g;  w <- w + v. Throws naming the layer on a non-finite gradient.
void sgd_step(EmbeddingNet& net, const ParamGrads& grads, OptimizerState& state, double learning_rate, double momentum);

struct EpochMetrics {
    int epoch = 0;
    double mean_loss = 0.0;  // mean triplet loss over the epoch's training batches
    double eval_loss = 0.0;  // mean triplet loss on a fixed triplet set, eval mode, after the epoch
    double learning_rate = 0.0;
};

/// Item-level subsample of the training items: ceil(fraction * n) of them, chosen by `seed`.
std::vector<std::size_t> select_training_items(const DatasetManifest& manifest, double fraction, std::uint64_t seed);

/// Triplets for one epoch of the configured task.
std::vector<Triplet> sample_epoch_triplets(const DatasetManifest& manifest, std::span<const std::size_t> items,
                                           const TrainConfig& config, std::uint64_t seed);

/// Eval-mode embedding of one dataset image, with the oracle attention map when the network needs it.
EmbeddingVector embed_image(const EmbeddingNet& net, const Dataset& dataset, const std::string& image_id);

struct TrainOptions {
    std::optional<std::filesystem::path> checkpoint_dir;  // also receives metrics.jsonl
    unsigned threads = 0;
    std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
    EmbeddingNet net;
    double initial_eval_loss = 0.0;
    std::vector<EpochMetrics> history;
    std::vector<std::size_t> items;  // training items actually used
};

/// SGD with momentum on the triplet loss. Deterministic given the config, for any thread count.
TrainResult train(const Dataset& dataset, const RunConfig& config, const TrainOptions& options = {});

}  // namespace vamkit
