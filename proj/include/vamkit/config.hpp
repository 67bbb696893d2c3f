#pragma once

#include <cstdint>
#include <string>

#include "vamkit/network.hpp"

namespace vamkit {

/// Which retrieval task triplets and evaluation follow: consumer-to-shop or in-shop.
enum class Task { c2s, inshop };

std::string to_string(Task task);
Task task_from_string(const std::string& name);

struct TrainConfig {
    int epochs = 20;
    int batch_triplets = 512;
    double learning_rate = 0.05;
    double momentum = 0.9;
    double margin = 0.2;
    int negatives_per_pair = 40;
    int pairs_per_class = 100;
    Task task = Task::c2s;
    GateMode gate_mode = GateMode::impdrop;
    AttentionSource attention_source = AttentionSource::oracle_mask;
    std::uint64_t seed = 1;
    double train_fraction = 1.0;
    int checkpoint_every = 0;  // 0 writes only the final checkpoint

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Everything a training run needs. `network` carries the layer stacks; the
/// gate mode and attention source come from `train`.
struct RunConfig {
    NetworkConfig network = NetworkConfig::desk_default();
    TrainConfig train;
    std::string dataset;

    /// network with the train-level gate mode and attention source applied.
    NetworkConfig resolved_network() const;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Throws vamkit::Error on any invalid value.
void validate(const TrainConfig& config);

/// JSON round-trip. Parsing rejects unknown keys; missing keys take defaults.
std::string to_json_string(const RunConfig& config);
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::string& path);

/// Short sha256 of the canonical JSON of the config, excluding the dataset path.
std::string config_hash(const RunConfig& config);

}  // namespace vamkit
