#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vamkit/rng.hpp"
#include "vamkit/tensor.hpp"

namespace vamkit {

enum class LayerKind { conv2d, relu, maxpool2, dense, l2norm, sigmoid };
enum class Mode { train, eval };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// Kind-specific hyper-parameters. `out` is C_out for conv2d and the
/// output feature count for dense; the other fields only apply to conv2d.
struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    int out = 0;
    int kernel = 1;
    int stride = 1;
    int padding = 0;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// A layer with its trainable parameters.
///
/// conv2d: weights (C_out, C_in, k, k), bias (1, C_out, 1, 1).
/// dense:  weights (1, out, 1, in) read as an out x in matrix, bias (1, out, 1, 1).
/// The remaining kinds carry no parameters.
template <typename T>
struct BasicLayer {
    LayerSpec spec;
    std::optional<BasicTensor<T>> weights;
    std::optional<BasicTensor<T>> bias;
};
using Layer = BasicLayer<float>;

template <typename To, typename From>
BasicLayer<To> layer_cast(const BasicLayer<From>& layer) {
    BasicLayer<To> r{layer.spec, std::nullopt, std::nullopt};
    if (layer.weights) r.weights = tensor_cast<To>(*layer.weights);
    if (layer.bias) r.bias = tensor_cast<To>(*layer.bias);
    return r;
}

inline constexpr double kL2NormEpsilon = 1e-12;

/// Whatever a single backward call needs from its forward call.
template <typename T>
struct BasicForwardCache {
    LayerKind kind = LayerKind::relu;
    BasicTensor<T> input;
    BasicTensor<T> output;
    std::vector<std::uint32_t> argmax;  // maxpool2: flat input index per output element
    std::vector<double> norms;          // l2norm: per-sample input norm
};
using ForwardCache = BasicForwardCache<float>;

template <typename T>
struct BasicLayerGrads {
    BasicTensor<T> dx;
    std::optional<BasicTensor<T>> dweights;
    std::optional<BasicTensor<T>> dbias;
};
using LayerGrads = BasicLayerGrads<float>;

/// Output shape for an input of shape `in`; throws on incompatibility.
Shape output_shape(const LayerSpec& spec, const Shape& in);

/// Builds a layer for inputs of shape `in`. Weights are drawn uniformly from
/// +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
Layer make_layer(const LayerSpec& spec, const Shape& in, Stream& rng);

template <typename T>
struct BasicLayerOutput {
    BasicTensor<T> y;
    BasicForwardCache<T> cache;
};
using LayerOutput = BasicLayerOutput<float>;

template <typename T>
BasicLayerOutput<T> layer_forward(const BasicLayer<T>& layer, const BasicTensor<T>& x, Mode mode);

/// Gradients w.r.t. input and parameters. `need_dx = false` skips the input
/// gradient (returned empty), which the first layer of a network never needs.
template <typename T>
BasicLayerGrads<T> layer_backward(const BasicLayer<T>& layer, const BasicForwardCache<T>& cache,
                                  const BasicTensor<T>& dy, bool need_dx = true);

}  // namespace vamkit
