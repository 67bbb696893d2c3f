#pragma once

#include <cstdint>
#include <string>

#include "vamkit/tensor.hpp"

namespace vamkit {

inline constexpr double kAttentionTolerance = 1e-6;

/// Per-location importance probabilities, shape (N, 1, H, W), values in [0, 1].
template <typename T>
class BasicAttentionMap {
public:
    /// Values inside [-1e-6, 1 + 1e-6] are clamped to [0, 1]; anything further out throws.
    explicit BasicAttentionMap(BasicTensor<T> values);

    const BasicTensor<T>& values() const { return values_; }
    const Shape& shape() const { return values_.shape(); }
    T at(std::size_t n, std::size_t i, std::size_t j) const { return values_.at(n, 0, i, j); }

private:
    BasicTensor<T> values_;
};
using AttentionMap = BasicAttentionMap<float>;

/// Sampled Bernoulli keep-mask b(n, c, i, j) in {0, 1}, with the key of the stream it came from.
template <typename T>
struct BasicGateMask {
    BasicTensor<T> bits;
    std::uint64_t seed_record = 0;
};
using GateMask = BasicGateMask<float>;

/// How the attention branch combines the attention map with the feature maps.
/// `none` leaves the feature maps untouched.
enum class GateMode { impdrop, product, none };

std::string to_string(GateMode mode);
GateMode gate_mode_from_string(const std::string& name);

/// Draws one independent Bernoulli(p_ij) bit per (sample, channel, location).
/// Entry (n, c, i, j) uses position offset + ((n*C + c)*H + i)*W + j of the
/// counter stream `key`, so disjoint offsets give independent masks.
template <typename T>
BasicGateMask<T> impdrop_sample_mask(const BasicAttentionMap<T>& p, std::size_t channels, std::uint64_t key,
                                     std::uint64_t offset = 0);

/// Training-phase Impdrop forward: y = x * b.
template <typename T>
BasicTensor<T> impdrop_forward_train(const BasicTensor<T>& x, const BasicGateMask<T>& mask);

/// dL/dx = b * dL/dy.
template <typename T>
BasicTensor<T> impdrop_backward_x(const BasicGateMask<T>& mask, const BasicTensor<T>& dy);

/// Surrogate dL/dp_ij = sum_c x_ij(c) * dL/dy_ij(c), the Product-connection gradient.
template <typename T>
BasicTensor<T> impdrop_backward_p(const BasicTensor<T>& x, const BasicTensor<T>& dy);

/// y_ij(c) = p_ij * x_ij(c). Impdrop at evaluation time and Product in both phases.
template <typename T>
BasicTensor<T> gate_forward_eval(const BasicTensor<T>& x, const BasicAttentionMap<T>& p);

template <typename T>
struct BasicProductGrads {
    BasicTensor<T> dx;
    BasicTensor<T> dp;
};
using ProductGrads = BasicProductGrads<float>;

/// Exact gradients of gate_forward_eval.
template <typename T>
BasicProductGrads<T> product_backward(const BasicTensor<T>& x, const BasicAttentionMap<T>& p, const BasicTensor<T>& dy);

}  // namespace vamkit
