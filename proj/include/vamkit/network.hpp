#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vamkit/gating.hpp"
#include "vamkit/layers.hpp"

namespace vamkit {

enum class AttentionSource { learned_head, oracle_mask };

std::string to_string(AttentionSource source);
AttentionSource attention_source_from_string(const std::string& name);

/// Layer stacks and wiring of the two-branch embedding network.
struct NetworkConfig {
    std::size_t in_channels = 3;
    std::size_t in_height = 32;
    std::size_t in_width = 32;
    std::vector<LayerSpec> lower;
    std::vector<LayerSpec> head;   // attention head; must end in a one-channel sigmoid
    std::vector<LayerSpec> upper;  // shared by both branches; must end in l2norm
    int embedding_dim = 64;
    GateMode gate_mode = GateMode::impdrop;
    AttentionSource attention_source = AttentionSource::oracle_mask;

    /// 3x32x32 input, 16x8x8 feature maps, 8x8 attention map, 64-dim embedding.
    static NetworkConfig desk_default();

    Shape input_shape() const { return {1, in_channels, in_height, in_width}; }
    bool uses_head() const { return attention_source == AttentionSource::learned_head; }

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Shapes found by propagating a single image through the configured stacks.
struct NetworkShapes {
    Shape features;   // lower-layer output
    Shape attention;  // (1, 1, H, W) with H, W equal to the feature maps'
    std::size_t branch_dim = 0;
};

/// Dry-run shape pass; throws vamkit::Error describing the first inconsistency.
NetworkShapes validate(const NetworkConfig& config);

/// One trainable tensor, addressed as `<layer_index>_<role>`. Layer indices
/// run over lower, then head, then upper layers.
struct ParamSlot {
    std::size_t layer_index = 0;
    std::string section;  // "lower", "head" or "upper"
    std::string role;     // "weight" or "bias"
    std::string name() const { return std::to_string(layer_index) + "_" + role; }
};

/// Parameter gradients in parameter-slot order.
template <typename T>
struct BasicParamGrads {
    std::vector<BasicTensor<T>> tensors;

    /// Element-wise accumulation; shapes must match.
    void accumulate(const BasicParamGrads& other);
};
using ParamGrads = BasicParamGrads<float>;

template <typename T>
class BasicEmbeddingNet {
public:
    using Layer = BasicLayer<T>;
    using Tensor = BasicTensor<T>;

    BasicEmbeddingNet() = default;
    BasicEmbeddingNet(NetworkConfig config, std::vector<Layer> lower, std::vector<Layer> head, std::vector<Layer> upper);

    const NetworkConfig& config() const { return config_; }
    const NetworkShapes& shapes() const { return shapes_; }

    const std::vector<Layer>& lower() const { return lower_; }
    const std::vector<Layer>& head() const { return head_; }
    /// The single upper stack applied by both the global and the attention branch.
    const std::vector<Layer>& upper() const { return upper_; }

    std::size_t layer_count() const { return lower_.size() + head_.size() + upper_.size(); }
    const Layer& layer(std::size_t index) const;
    Layer& layer(std::size_t index);
    std::string section_of(std::size_t index) const;

    const std::vector<ParamSlot>& slots() const { return slots_; }
    const Tensor& param(std::size_t slot) const;
    Tensor& param(std::size_t slot);
    BasicParamGrads<T> zero_grads() const;

private:
    void index_slots();

    NetworkConfig config_;
    NetworkShapes shapes_;
    std::vector<Layer> lower_;
    std::vector<Layer> head_;
    std::vector<Layer> upper_;
    std::vector<ParamSlot> slots_;
    std::vector<std::size_t> first_slot_;  // per layer; npos when the layer has no parameters
};

using EmbeddingNet = BasicEmbeddingNet<float>;

/// Builds and initializes a network; parameters depend only on (config, seed).
EmbeddingNet build_network(const NetworkConfig& config, std::uint64_t seed);

/// Copy of `net` with parameters converted to another scalar type.
template <typename To, typename From>
BasicEmbeddingNet<To> network_cast(const BasicEmbeddingNet<From>& net) {
    auto convert = [](const std::vector<BasicLayer<From>>& stack) {
        std::vector<BasicLayer<To>> out;
        for (const auto& l : stack) out.push_back(layer_cast<To>(l));
        return out;
    };
    return BasicEmbeddingNet<To>(net.config(), convert(net.lower()), convert(net.head()), convert(net.upper()));
}

/// Concatenated (global, attention) embedding, each half L2-normalized.
template <typename T>
struct BasicEmbeddingVector {
    std::vector<T> values;

    std::size_t size() const { return values.size(); }
    friend bool operator==(const BasicEmbeddingVector&, const BasicEmbeddingVector&) = default;
};
using EmbeddingVector = BasicEmbeddingVector<float>;

template <typename T>
struct BasicForwardTrace {
    Mode mode = Mode::eval;
    GateMode gate_mode = GateMode::none;
    bool head_used = false;
    std::vector<BasicForwardCache<T>> lower;
    std::vector<BasicForwardCache<T>> head;
    std::vector<BasicForwardCache<T>> upper_global;
    std::vector<BasicForwardCache<T>> upper_attention;
    BasicTensor<T> features;
    std::optional<BasicAttentionMap<T>> attention;
    std::optional<BasicGateMask<T>> mask;
};
using ForwardTrace = BasicForwardTrace<float>;

/// Where an embed call reads its gate-mask bits: counter stream `key`, starting at `offset`.
struct MaskStream {
    std::uint64_t key = 0;
    std::uint64_t offset = 0;
};

template <typename T>
struct BasicEmbedResult {
    BasicEmbeddingVector<T> embedding;
    BasicForwardTrace<T> trace;
};
using EmbedResult = BasicEmbedResult<float>;

/// Embeds one image of shape (1, C, H, W).
///
/// The mask stream is only consulted for impdrop in train mode. `oracle` must
/// be given iff the attention source is oracle_mask.
template <typename T>
BasicEmbedResult<T> embed(const BasicEmbeddingNet<T>& net, const BasicTensor<T>& image, Mode mode, MaskStream mask,
                          const BasicAttentionMap<T>* oracle = nullptr);

/// Back-propagates dL/d(embedding). Gradients of the shared upper stack are the
/// sum of both branch contributions; the attention head only receives the
/// attention-map gradient of the gate.
template <typename T>
BasicParamGrads<T> network_backward(const BasicEmbeddingNet<T>& net, const BasicForwardTrace<T>& trace,
                                    const std::vector<T>& d_embedding);

}  // namespace vamkit
