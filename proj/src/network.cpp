#include "vamkit/network.hpp"

#include <limits>
#include <utility>

#include "vamkit/error.hpp"
#include "vamkit/rng.hpp"

namespace vamkit {

namespace {

constexpr std::size_t kNoSlot = std::numeric_limits<std::size_t>::max();

LayerSpec conv(int out, int kernel, int padding) { return {LayerKind::conv2d, out, kernel, 1, padding}; }
LayerSpec plain(LayerKind kind) { return {kind, 0, 1, 1, 0}; }

Shape propagate(const std::vector<LayerSpec>& stack, Shape shape, const char* section) {
    for (std::size_t i = 0; i < stack.size(); ++i) {
        try {
            shape = output_shape(stack[i], shape);
        } catch (const Error& e) {
            throw Error(std::string(section) + " layer " + std::to_string(i) + ": " + e.what());
        }
    }
    return shape;
}

std::vector<Layer> make_stack(const std::vector<LayerSpec>& stack, Shape shape, Stream& rng) {
    std::vector<Layer> layers;
    layers.reserve(stack.size());
    for (const LayerSpec& spec : stack) {
        layers.push_back(make_layer(spec, shape, rng));
        shape = output_shape(spec, shape);
    }
    return layers;
}

template <typename T>
BasicTensor<T> run_stack(const std::vector<BasicLayer<T>>& stack, BasicTensor<T> x, Mode mode,
                         std::vector<BasicForwardCache<T>>& caches) {
    caches.clear();
    caches.reserve(stack.size());
    for (const BasicLayer<T>& layer : stack) {
        auto out = layer_forward(layer, x, mode);
        caches.push_back(std::move(out.cache));
        x = std::move(out.y);
    }
    return x;
}

}  // namespace

std::string to_string(AttentionSource source) {
    return source == AttentionSource::learned_head ? "learned_head" : "oracle_mask";
}

AttentionSource attention_source_from_string(const std::string& name) {
    if (name == "learned_head") return AttentionSource::learned_head;
    if (name == "oracle_mask") return AttentionSource::oracle_mask;
    throw Error("unknown attention source '" + name + "'");
}

NetworkConfig NetworkConfig::desk_default() {
    NetworkConfig c;
    c.lower = {conv(8, 3, 1), plain(LayerKind::relu), plain(LayerKind::maxpool2),
               conv(16, 3, 1), plain(LayerKind::relu), plain(LayerKind::maxpool2)};
    c.head = {conv(8, 3, 1), plain(LayerKind::relu), conv(1, 1, 0), plain(LayerKind::sigmoid)};
    c.upper = {conv(16, 3, 1), plain(LayerKind::relu), plain(LayerKind::maxpool2),
               {LayerKind::dense, 32, 1, 1, 0}, plain(LayerKind::l2norm)};
    return c;
}

NetworkShapes validate(const NetworkConfig& config) {
    if (config.embedding_dim <= 0 || config.embedding_dim % 2 != 0)
        throw Error("embedding_dim must be even and positive, got " + std::to_string(config.embedding_dim));
    if (config.in_channels == 0 || config.in_height == 0 || config.in_width == 0)
        throw Error("input extents must be positive");
    if (config.upper.empty() || config.upper.back().kind != LayerKind::l2norm)
        throw Error("upper layers must end with l2norm");
    NetworkShapes shapes;
    shapes.features = propagate(config.lower, config.input_shape(), "lower");
    const Shape branch = propagate(config.upper, shapes.features, "upper");
    shapes.branch_dim = branch.c * branch.h * branch.w;
    if (shapes.branch_dim * 2 != static_cast<std::size_t>(config.embedding_dim))
        throw Error("upper layers produce " + std::to_string(shapes.branch_dim) + " features per branch but embedding_dim is " +
                    std::to_string(config.embedding_dim));
    shapes.attention = {1, 1, shapes.features.h, shapes.features.w};
    if (config.uses_head()) {
        if (config.head.empty() || config.head.back().kind != LayerKind::sigmoid)
            throw Error("attention head must end with sigmoid");
        const Shape head = propagate(config.head, shapes.features, "head");
        if (head != shapes.attention)
            throw Error("attention head output " + head.str() + " does not match feature grid " + shapes.attention.str());
    }
    return shapes;
}

template <typename T>
void BasicParamGrads<T>::accumulate(const BasicParamGrads& other) {
    if (other.tensors.size() != tensors.size()) throw Error("ParamGrads::accumulate: slot count mismatch");
    for (std::size_t s = 0; s < tensors.size(); ++s) {
        check_same_shape(tensors[s], other.tensors[s], "ParamGrads::accumulate");
        auto dst = tensors[s].data();
        const auto src = other.tensors[s].data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
}

template <typename T>
BasicEmbeddingNet<T>::BasicEmbeddingNet(NetworkConfig config, std::vector<Layer> lower, std::vector<Layer> head,
                                        std::vector<Layer> upper)
    : config_(std::move(config)), lower_(std::move(lower)), head_(std::move(head)), upper_(std::move(upper)) {
    shapes_ = validate(config_);
    if (lower_.size() != config_.lower.size() || upper_.size() != config_.upper.size() ||
        head_.size() != (config_.uses_head() ? config_.head.size() : 0))
        throw Error("layer stacks do not match the network config");
    index_slots();
}

template <typename T>
const BasicLayer<T>& BasicEmbeddingNet<T>::layer(std::size_t index) const {
    if (index < lower_.size()) return lower_[index];
    index -= lower_.size();
    if (index < head_.size()) return head_[index];
    index -= head_.size();
    if (index < upper_.size()) return upper_[index];
    throw Error("layer index out of range");
}

template <typename T>
BasicLayer<T>& BasicEmbeddingNet<T>::layer(std::size_t index) {
    return const_cast<BasicLayer<T>&>(std::as_const(*this).layer(index));
}

template <typename T>
std::string BasicEmbeddingNet<T>::section_of(std::size_t index) const {
    if (index < lower_.size()) return "lower";
    if (index < lower_.size() + head_.size()) return "head";
    if (index < layer_count()) return "upper";
    throw Error("layer index out of range");
}

template <typename T>
void BasicEmbeddingNet<T>::index_slots() {
    slots_.clear();
    first_slot_.assign(layer_count(), kNoSlot);
    for (std::size_t i = 0; i < layer_count(); ++i) {
        const Layer& l = layer(i);
        if (!l.weights) continue;
        first_slot_[i] = slots_.size();
        slots_.push_back({i, section_of(i), "weight"});
        slots_.push_back({i, section_of(i), "bias"});
    }
}

template <typename T>
const BasicTensor<T>& BasicEmbeddingNet<T>::param(std::size_t slot) const {
    const ParamSlot& s = slots_.at(slot);
    const Layer& l = layer(s.layer_index);
    return s.role == "weight" ? *l.weights : *l.bias;
}

template <typename T>
BasicTensor<T>& BasicEmbeddingNet<T>::param(std::size_t slot) {
    return const_cast<BasicTensor<T>&>(std::as_const(*this).param(slot));
}

template <typename T>
BasicParamGrads<T> BasicEmbeddingNet<T>::zero_grads() const {
    BasicParamGrads<T> g;
    g.tensors.reserve(slots_.size());
    for (std::size_t s = 0; s < slots_.size(); ++s) g.tensors.emplace_back(param(s).shape(), T(0));
    return g;
}

EmbeddingNet build_network(const NetworkConfig& config, std::uint64_t seed) {
    const NetworkShapes shapes = validate(config);
    Stream rng(derive_seed(seed, "init"));
    auto lower = make_stack(config.lower, config.input_shape(), rng);
    std::vector<Layer> head;
    if (config.uses_head()) head = make_stack(config.head, shapes.features, rng);
    auto upper = make_stack(config.upper, shapes.features, rng);
    return EmbeddingNet(config, std::move(lower), std::move(head), std::move(upper));
}

template <typename T>
BasicEmbedResult<T> embed(const BasicEmbeddingNet<T>& net, const BasicTensor<T>& image, Mode mode, MaskStream mask,
                          const BasicAttentionMap<T>* oracle) {
    const NetworkConfig& cfg = net.config();
    if (image.shape() != cfg.input_shape())
        throw Error("image shape " + image.shape().str() + " does not match network input " + cfg.input_shape().str());
    const bool wants_oracle = cfg.attention_source == AttentionSource::oracle_mask;
    if (wants_oracle && oracle == nullptr) throw Error("oracle attention map required but missing");
    if (!wants_oracle && oracle != nullptr) throw Error("oracle attention map given to a learned-head network");

    BasicEmbedResult<T> r;
    BasicForwardTrace<T>& t = r.trace;
    t.mode = mode;
    t.gate_mode = cfg.gate_mode;
    t.head_used = cfg.uses_head();
    t.features = run_stack(net.lower(), image, mode, t.lower);

    if (cfg.uses_head()) {
        t.attention.emplace(run_stack(net.head(), t.features, mode, t.head));
    } else {
        if (oracle->shape() != net.shapes().attention)
            throw Error("oracle attention map " + oracle->shape().str() + " does not match feature grid " +
                        net.shapes().attention.str());
        t.attention = *oracle;
    }

    BasicTensor<T> gated;
    switch (cfg.gate_mode) {
        case GateMode::none:
            gated = t.features;
            break;
        case GateMode::product:
            gated = gate_forward_eval(t.features, *t.attention);
            break;
        case GateMode::impdrop:
            if (mode == Mode::train) {
                t.mask = impdrop_sample_mask(*t.attention, t.features.shape().c, mask.key, mask.offset);
                gated = impdrop_forward_train(t.features, *t.mask);
            } else {
                gated = gate_forward_eval(t.features, *t.attention);
            }
            break;
    }

    const BasicTensor<T> global = run_stack(net.upper(), t.features, mode, t.upper_global);
    const BasicTensor<T> attended = run_stack(net.upper(), gated, mode, t.upper_attention);
    auto& v = r.embedding.values;
    v.reserve(global.size() + attended.size());
    v.insert(v.end(), global.data().begin(), global.data().end());
    v.insert(v.end(), attended.data().begin(), attended.data().end());
    return r;
}

namespace {

template <typename T>
void add_into(BasicTensor<T>& dst, const BasicTensor<T>& src) {
    auto d = dst.data();
    const auto sv = src.data();
    for (std::size_t k = 0; k < d.size(); ++k) d[k] += sv[k];
}

// Back-propagates through one stack, adding parameter gradients into `grads`
// at the slots of layers [first_layer, first_layer + stack.size()).
template <typename T>
BasicTensor<T> backward_stack(const BasicEmbeddingNet<T>& net, const std::vector<BasicLayer<T>>& stack,
                              std::size_t first_layer, const std::vector<BasicForwardCache<T>>& caches, BasicTensor<T> dy,
                              BasicParamGrads<T>& grads, bool need_input_grad) {
    if (caches.size() != stack.size()) throw Error("network_backward: trace does not match the network");
    std::vector<std::size_t> layer_slot(stack.size(), kNoSlot);
    for (std::size_t s = 0; s < net.slots().size(); s += 2) {
        const std::size_t li = net.slots()[s].layer_index;
        if (li >= first_layer && li < first_layer + stack.size()) layer_slot[li - first_layer] = s;
    }
    for (std::size_t i = stack.size(); i-- > 0;) {
        const bool need_dx = i > 0 || need_input_grad;
        auto g = layer_backward(stack[i], caches[i], dy, need_dx);
        if (g.dweights) {
            const std::size_t s = layer_slot[i];
            add_into(grads.tensors[s], *g.dweights);
            add_into(grads.tensors[s + 1], *g.dbias);
        }
        dy = std::move(g.dx);
    }
    return dy;
}

}  // namespace

template <typename T>
BasicParamGrads<T> network_backward(const BasicEmbeddingNet<T>& net, const BasicForwardTrace<T>& trace,
                                    const std::vector<T>& d_embedding) {
    const NetworkConfig& cfg = net.config();
    if (trace.gate_mode != cfg.gate_mode || trace.head_used != cfg.uses_head())
        throw Error("network_backward: trace was produced by a differently configured network");
    if (trace.gate_mode == GateMode::impdrop && trace.mode == Mode::train && !trace.mask)
        throw Error("network_backward: train-mode impdrop trace has no gate mask");
    const std::size_t half = net.shapes().branch_dim;
    if (d_embedding.size() != 2 * half)
        throw Error("network_backward: gradient length " + std::to_string(d_embedding.size()) + " != embedding_dim " +
                    std::to_string(2 * half));

    BasicParamGrads<T> grads = net.zero_grads();
    const Shape branch_shape = output_shape(cfg.upper.back(), trace.upper_global.back().input.shape());
    const std::size_t upper_first = net.lower().size() + net.head().size();
    const BasicTensor<T> d_global(branch_shape, std::vector<T>(d_embedding.begin(), d_embedding.begin() + half));
    const BasicTensor<T> d_attended(branch_shape, std::vector<T>(d_embedding.begin() + half, d_embedding.end()));

    BasicTensor<T> d_features = backward_stack(net, net.upper(), upper_first, trace.upper_global, d_global, grads, true);
    const BasicTensor<T> d_gated = backward_stack(net, net.upper(), upper_first, trace.upper_attention, d_attended, grads, true);

    BasicTensor<T> d_attention;
    switch (trace.gate_mode) {
        case GateMode::none:
            d_features = add(d_features, d_gated);
            break;
        case GateMode::product: {
            auto pg = product_backward(trace.features, *trace.attention, d_gated);
            d_features = add(d_features, pg.dx);
            d_attention = std::move(pg.dp);
            break;
        }
        case GateMode::impdrop:
            if (trace.mode == Mode::train) {
                d_features = add(d_features, impdrop_backward_x(*trace.mask, d_gated));
                d_attention = impdrop_backward_p(trace.features, d_gated);
            } else {
                auto pg = product_backward(trace.features, *trace.attention, d_gated);
                d_features = add(d_features, pg.dx);
                d_attention = std::move(pg.dp);
            }
            break;
    }

    if (trace.head_used && !d_attention.empty()) {
        const BasicTensor<T> d_from_head =
            backward_stack(net, net.head(), net.lower().size(), trace.head, std::move(d_attention), grads, true);
        d_features = add(d_features, d_from_head);
    }
    backward_stack(net, net.lower(), 0, trace.lower, std::move(d_features), grads, false);
    return grads;
}

#define VAMKIT_INSTANTIATE(T)                                                                                    \
    template struct BasicParamGrads<T>;                                                                          \
    template class BasicEmbeddingNet<T>;                                                                         \
    template BasicEmbedResult<T> embed(const BasicEmbeddingNet<T>&, const BasicTensor<T>&, Mode, MaskStream,     \
                                       const BasicAttentionMap<T>*);                                             \
    template BasicParamGrads<T> network_backward(const BasicEmbeddingNet<T>&, const BasicForwardTrace<T>&,       \
                                                 const std::vector<T>&);

VAMKIT_INSTANTIATE(float)
VAMKIT_INSTANTIATE(double)
#undef VAMKIT_INSTANTIATE

}  // namespace vamkit
