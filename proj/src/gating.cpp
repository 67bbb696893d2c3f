#include "vamkit/gating.hpp"

#include <algorithm>

#include "vamkit/error.hpp"
#include "vamkit/rng.hpp"

namespace vamkit {

template <typename T>
BasicAttentionMap<T>::BasicAttentionMap(BasicTensor<T> values) : values_(std::move(values)) {
    check_nonempty(values_, "attention map");
    if (values_.shape().c != 1) throw Error("attention map must have one channel, got " + values_.shape().str());
    for (T& v : values_.data()) {
        if (!(v >= -kAttentionTolerance && v <= 1.0 + kAttentionTolerance))
            throw Error("attention value " + std::to_string(v) + " outside [0,1]");
        v = std::clamp(v, T(0), T(1));
    }
}

std::string to_string(GateMode mode) {
    switch (mode) {
        case GateMode::impdrop: return "impdrop";
        case GateMode::product: return "product";
        case GateMode::none: return "none";
    }
    return "unknown";
}

GateMode gate_mode_from_string(const std::string& name) {
    for (GateMode m : {GateMode::impdrop, GateMode::product, GateMode::none})
        if (to_string(m) == name) return m;
    throw Error("unknown gate mode '" + name + "'");
}

namespace {

template <typename T>
void check_aligned(const BasicTensor<T>& x, const BasicAttentionMap<T>& p, const char* what) {
    check_nonempty(x, what);
    const Shape& ps = p.shape();
    if (x.shape().n != ps.n || x.shape().h != ps.h || x.shape().w != ps.w)
        throw Error(std::string(what) + ": feature maps " + x.shape().str() + " not aligned with attention map " +
                    ps.str());
}

// Shared by impdrop_backward_p and product_backward so both return identical bits.
template <typename T>
BasicTensor<T> channel_dot(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
    const Shape s = x.shape();
    BasicTensor<T> dp(Shape{s.n, 1, s.h, s.w});
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t i = 0; i < s.h; ++i)
            for (std::size_t j = 0; j < s.w; ++j) {
                double acc = 0.0;
                for (std::size_t c = 0; c < s.c; ++c) acc += double(x.at(n, c, i, j)) * double(dy.at(n, c, i, j));
                dp.at(n, 0, i, j) = static_cast<T>(acc);
            }
    check_finite(dp, "attention gradient");
    return dp;
}

}  // namespace

template <typename T>
BasicGateMask<T> impdrop_sample_mask(const BasicAttentionMap<T>& p, std::size_t channels, std::uint64_t key,
                                     std::uint64_t offset) {
    if (channels < 1) throw Error("impdrop_sample_mask: channels must be >= 1");
    const Shape ps = p.shape();
    BasicGateMask<T> mask{BasicTensor<T>(Shape{ps.n, channels, ps.h, ps.w}), key};
    std::uint64_t counter = offset;
    for (std::size_t n = 0; n < ps.n; ++n)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t i = 0; i < ps.h; ++i)
                for (std::size_t j = 0; j < ps.w; ++j, ++counter)
                    mask.bits.at(n, c, i, j) = counter_uniform(key, counter) < double(p.at(n, i, j)) ? T(1) : T(0);
    return mask;
}

template <typename T>
BasicTensor<T> impdrop_forward_train(const BasicTensor<T>& x, const BasicGateMask<T>& mask) {
    check_nonempty(x, "impdrop_forward_train");
    check_same_shape(x, mask.bits, "impdrop_forward_train");
    return mul(x, mask.bits);
}

template <typename T>
BasicTensor<T> impdrop_backward_x(const BasicGateMask<T>& mask, const BasicTensor<T>& dy) {
    check_nonempty(dy, "impdrop_backward_x");
    check_same_shape(mask.bits, dy, "impdrop_backward_x");
    return mul(mask.bits, dy);
}

template <typename T>
BasicTensor<T> impdrop_backward_p(const BasicTensor<T>& x, const BasicTensor<T>& dy) {
    check_nonempty(x, "impdrop_backward_p");
    check_same_shape(x, dy, "impdrop_backward_p");
    return channel_dot(x, dy);
}

template <typename T>
BasicTensor<T> gate_forward_eval(const BasicTensor<T>& x, const BasicAttentionMap<T>& p) {
    check_aligned(x, p, "gate_forward_eval");
    BasicTensor<T> y = x;
    const Shape s = x.shape();
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t i = 0; i < s.h; ++i)
                for (std::size_t j = 0; j < s.w; ++j) y.at(n, c, i, j) *= p.at(n, i, j);
    check_finite(y, "gate_forward_eval");
    return y;
}

template <typename T>
BasicProductGrads<T> product_backward(const BasicTensor<T>& x, const BasicAttentionMap<T>& p, const BasicTensor<T>& dy) {
    check_aligned(x, p, "product_backward");
    check_same_shape(x, dy, "product_backward");
    return {gate_forward_eval(dy, p), channel_dot(x, dy)};
}

#define VAMKIT_INSTANTIATE(T)                                                                                   \
    template class BasicAttentionMap<T>;                                                                        \
    template BasicGateMask<T> impdrop_sample_mask(const BasicAttentionMap<T>&, std::size_t, std::uint64_t,      \
                                                  std::uint64_t);                                               \
    template BasicTensor<T> impdrop_forward_train(const BasicTensor<T>&, const BasicGateMask<T>&);              \
    template BasicTensor<T> impdrop_backward_x(const BasicGateMask<T>&, const BasicTensor<T>&);                 \
    template BasicTensor<T> impdrop_backward_p(const BasicTensor<T>&, const BasicTensor<T>&);                   \
    template BasicTensor<T> gate_forward_eval(const BasicTensor<T>&, const BasicAttentionMap<T>&);              \
    template BasicProductGrads<T> product_backward(const BasicTensor<T>&, const BasicAttentionMap<T>&,          \
                                                   const BasicTensor<T>&);

VAMKIT_INSTANTIATE(float)
VAMKIT_INSTANTIATE(double)
#undef VAMKIT_INSTANTIATE

}  // namespace vamkit
