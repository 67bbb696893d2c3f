#include "vamkit/layers.hpp"

#include <cmath>

#include <Eigen/Core>

#include "vamkit/error.hpp"

namespace vamkit {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using ColVector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
template <typename T>
using RowVector = Eigen::Matrix<T, 1, Eigen::Dynamic>;

struct ConvGeometry {
    std::size_t c_in, h_in, w_in, c_out, h_out, w_out, k, stride, pad;
    std::size_t patch() const { return c_in * k * k; }
    std::size_t pixels() const { return h_out * w_out; }
};

ConvGeometry conv_geometry(const LayerSpec& spec, const Shape& in) {
    if (spec.out <= 0 || spec.kernel <= 0 || spec.stride <= 0 || spec.padding < 0)
        throw Error("conv2d: invalid hyper-parameters");
    const auto k = static_cast<std::size_t>(spec.kernel);
    const auto s = static_cast<std::size_t>(spec.stride);
    const auto p = static_cast<std::size_t>(spec.padding);
    if (in.h + 2 * p < k || in.w + 2 * p < k)
        throw Error("conv2d: kernel " + std::to_string(k) + " larger than padded input " + in.str());
    return {in.c, in.h, in.w, static_cast<std::size_t>(spec.out), (in.h + 2 * p - k) / s + 1,
            (in.w + 2 * p - k) / s + 1, k, s, p};
}

// cols is (c_in*k*k) x (h_out*w_out), row-major.
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
    for (std::size_t c = 0; c < g.c_in; ++c)
        for (std::size_t ki = 0; ki < g.k; ++ki)
            for (std::size_t kj = 0; kj < g.k; ++kj) {
                T* row = cols + ((c * g.k + ki) * g.k + kj) * g.pixels();
                for (std::size_t oi = 0; oi < g.h_out; ++oi) {
                    const auto ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    for (std::size_t oj = 0; oj < g.w_out; ++oj) {
                        const auto jj =
                            static_cast<std::ptrdiff_t>(oj * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        const bool inside = ii >= 0 && jj >= 0 && ii < static_cast<std::ptrdiff_t>(g.h_in) &&
                                            jj < static_cast<std::ptrdiff_t>(g.w_in);
                        row[oi * g.w_out + oj] = inside ? x[(c * g.h_in + ii) * g.w_in + jj] : T(0);
                    }
                }
            }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* dx) {
    for (std::size_t c = 0; c < g.c_in; ++c)
        for (std::size_t ki = 0; ki < g.k; ++ki)
            for (std::size_t kj = 0; kj < g.k; ++kj) {
                const T* row = cols + ((c * g.k + ki) * g.k + kj) * g.pixels();
                for (std::size_t oi = 0; oi < g.h_out; ++oi) {
                    const auto ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - static_cast<std::ptrdiff_t>(g.pad);
                    if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(g.h_in)) continue;
                    for (std::size_t oj = 0; oj < g.w_out; ++oj) {
                        const auto jj =
                            static_cast<std::ptrdiff_t>(oj * g.stride + kj) - static_cast<std::ptrdiff_t>(g.pad);
                        if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(g.w_in)) continue;
                        dx[(c * g.h_in + ii) * g.w_in + jj] += row[oi * g.w_out + oj];
                    }
                }
            }
}

std::size_t features(const Shape& s) { return s.c * s.h * s.w; }

template <typename T>
void require_params(const BasicLayer<T>& layer, const char* what) {
    if (!layer.weights || !layer.bias) throw Error(std::string(what) + ": missing parameters");
}

template <typename T>
BasicTensor<T> conv_forward(const BasicLayer<T>& layer, const BasicTensor<T>& x) {
    require_params(layer, "conv2d");
    const ConvGeometry g = conv_geometry(layer.spec, x.shape());
    const Shape ws = layer.weights->shape();
    if (ws != Shape{g.c_out, g.c_in, g.k, g.k})
        throw Error("conv2d: weights " + ws.str() + " incompatible with input " + x.shape().str());
    BasicTensor<T> y(Shape{x.shape().n, g.c_out, g.h_out, g.w_out});
    std::vector<T> cols(g.patch() * g.pixels());
    ConstMatrixMap<T> weights(layer.weights->raw(), g.c_out, g.patch());
    Eigen::Map<const ColVector<T>> bias(layer.bias->raw(), g.c_out);
    for (std::size_t n = 0; n < x.shape().n; ++n) {
        im2col(x.raw() + n * features(x.shape()), g, cols.data());
        ConstMatrixMap<T> cm(cols.data(), g.patch(), g.pixels());
        MatrixMap<T> out(y.raw() + n * g.c_out * g.pixels(), g.c_out, g.pixels());
        out.noalias() = weights * cm;
        out.colwise() += bias;
    }
    return y;
}

template <typename T>
BasicLayerGrads<T> conv_backward(const BasicLayer<T>& layer, const BasicForwardCache<T>& cache, const BasicTensor<T>& dy,
                                 bool need_dx) {
    require_params(layer, "conv2d");
    const BasicTensor<T>& x = cache.input;
    const ConvGeometry g = conv_geometry(layer.spec, x.shape());
    BasicLayerGrads<T> grads;
    grads.dweights = BasicTensor<T>(layer.weights->shape());
    grads.dbias = BasicTensor<T>(layer.bias->shape());
    if (need_dx) grads.dx = BasicTensor<T>(x.shape());
    std::vector<T> cols(g.patch() * g.pixels());
    std::vector<T> dcols(need_dx ? g.patch() * g.pixels() : 0);
    ConstMatrixMap<T> weights(layer.weights->raw(), g.c_out, g.patch());
    MatrixMap<T> dweights(grads.dweights->raw(), g.c_out, g.patch());
    Eigen::VectorXd dbias = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(g.c_out));
    for (std::size_t n = 0; n < x.shape().n; ++n) {
        im2col(x.raw() + n * features(x.shape()), g, cols.data());
        ConstMatrixMap<T> cm(cols.data(), g.patch(), g.pixels());
        ConstMatrixMap<T> dout(dy.raw() + n * g.c_out * g.pixels(), g.c_out, g.pixels());
        dweights.noalias() += dout * cm.transpose();
        dbias += dout.template cast<double>().rowwise().sum();
        if (need_dx) {
            MatrixMap<T> dc(dcols.data(), g.patch(), g.pixels());
            dc.noalias() = weights.transpose() * dout;
            col2im(dcols.data(), g, grads.dx.raw() + n * features(x.shape()));
        }
    }
    for (std::size_t c = 0; c < g.c_out; ++c) (*grads.dbias)[c] = static_cast<T>(dbias[static_cast<Eigen::Index>(c)]);
    return grads;
}

template <typename T>
BasicTensor<T> dense_forward(const BasicLayer<T>& layer, const BasicTensor<T>& x) {
    require_params(layer, "dense");
    const std::size_t in = features(x.shape());
    const auto out = static_cast<std::size_t>(layer.spec.out);
    if (layer.weights->shape() != Shape{1, out, 1, in})
        throw Error("dense: weights " + layer.weights->shape().str() + " incompatible with input " + x.shape().str());
    const std::size_t n = x.shape().n;
    BasicTensor<T> y(Shape{n, out, 1, 1});
    ConstMatrixMap<T> xm(x.raw(), n, in);
    ConstMatrixMap<T> wm(layer.weights->raw(), out, in);
    Eigen::Map<const RowVector<T>> bias(layer.bias->raw(), out);
    MatrixMap<T> ym(y.raw(), n, out);
    ym.noalias() = xm * wm.transpose();
    ym.rowwise() += bias;
    return y;
}

template <typename T>
BasicLayerGrads<T> dense_backward(const BasicLayer<T>& layer, const BasicForwardCache<T>& cache, const BasicTensor<T>& dy,
                                  bool need_dx) {
    require_params(layer, "dense");
    const BasicTensor<T>& x = cache.input;
    const std::size_t in = features(x.shape());
    const auto out = static_cast<std::size_t>(layer.spec.out);
    const std::size_t n = x.shape().n;
    ConstMatrixMap<T> xm(x.raw(), n, in);
    ConstMatrixMap<T> wm(layer.weights->raw(), out, in);
    ConstMatrixMap<T> dym(dy.raw(), n, out);
    BasicLayerGrads<T> grads;
    grads.dweights = BasicTensor<T>(layer.weights->shape());
    grads.dbias = BasicTensor<T>(layer.bias->shape());
    MatrixMap<T>(grads.dweights->raw(), out, in).noalias() = dym.transpose() * xm;
    const Eigen::RowVectorXd db = dym.template cast<double>().colwise().sum();
    for (std::size_t o = 0; o < out; ++o) (*grads.dbias)[o] = static_cast<T>(db[static_cast<Eigen::Index>(o)]);
    if (need_dx) {
        grads.dx = BasicTensor<T>(x.shape());
        MatrixMap<T>(grads.dx.raw(), n, in).noalias() = dym * wm;
    }
    return grads;
}

template <typename T>
BasicLayerOutput<T> maxpool_forward(const BasicTensor<T>& x) {
    const Shape s = x.shape();
    if (s.h < 2 || s.w < 2) throw Error("maxpool2: input " + s.str() + " smaller than 2x2");
    const Shape os{s.n, s.c, s.h / 2, s.w / 2};
    BasicLayerOutput<T> r{BasicTensor<T>(os), {}};
    r.cache.argmax.resize(os.count());
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t i = 0; i < os.h; ++i)
                for (std::size_t j = 0; j < os.w; ++j) {
                    std::size_t best = x.index(n, c, 2 * i, 2 * j);
                    for (std::size_t di = 0; di < 2; ++di)
                        for (std::size_t dj = 0; dj < 2; ++dj) {
                            const std::size_t idx = x.index(n, c, 2 * i + di, 2 * j + dj);
                            if (x[idx] > x[best]) best = idx;  // strict: first row-major maximum wins
                        }
                    const std::size_t o = r.y.index(n, c, i, j);
                    r.y[o] = x[best];
                    r.cache.argmax[o] = static_cast<std::uint32_t>(best);
                }
    return r;
}

}  // namespace

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::relu: return "relu";
        case LayerKind::maxpool2: return "maxpool2";
        case LayerKind::dense: return "dense";
        case LayerKind::l2norm: return "l2norm";
        case LayerKind::sigmoid: return "sigmoid";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
    for (LayerKind k : {LayerKind::conv2d, LayerKind::relu, LayerKind::maxpool2, LayerKind::dense, LayerKind::l2norm,
                        LayerKind::sigmoid}) {
        if (to_string(k) == name) return k;
    }
    throw Error("unknown layer kind '" + name + "'");
}

Shape output_shape(const LayerSpec& spec, const Shape& in) {
    if (in.empty()) throw Error("layer input has a zero extent: " + in.str());
    switch (spec.kind) {
        case LayerKind::conv2d: {
            const ConvGeometry g = conv_geometry(spec, in);
            return {in.n, g.c_out, g.h_out, g.w_out};
        }
        case LayerKind::maxpool2:
            if (in.h < 2 || in.w < 2) throw Error("maxpool2: input " + in.str() + " smaller than 2x2");
            return {in.n, in.c, in.h / 2, in.w / 2};
        case LayerKind::dense:
            if (spec.out <= 0) throw Error("dense: output features must be positive");
            return {in.n, static_cast<std::size_t>(spec.out), 1, 1};
        case LayerKind::relu:
        case LayerKind::l2norm:
        case LayerKind::sigmoid:
            return in;
    }
    throw Error("unknown layer kind");
}

Layer make_layer(const LayerSpec& spec, const Shape& in, Stream& rng) {
    output_shape(spec, in);
    Layer layer{spec, std::nullopt, std::nullopt};
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    Shape ws;
    if (spec.kind == LayerKind::conv2d) {
        const auto k = static_cast<std::size_t>(spec.kernel);
        const auto out = static_cast<std::size_t>(spec.out);
        ws = {out, in.c, k, k};
        fan_in = in.c * k * k;
        fan_out = out * k * k;
    } else if (spec.kind == LayerKind::dense) {
        const auto out = static_cast<std::size_t>(spec.out);
        ws = {1, out, 1, features(in)};
        fan_in = features(in);
        fan_out = out;
    } else {
        return layer;
    }
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor w(ws);
    for (float& v : w.data()) v = static_cast<float>(rng.uniform(-limit, limit));
    layer.weights = std::move(w);
    layer.bias = Tensor(Shape{1, static_cast<std::size_t>(spec.out), 1, 1}, 0.0f);
    return layer;
}

template <typename T>
BasicLayerOutput<T> layer_forward(const BasicLayer<T>& layer, const BasicTensor<T>& x, Mode /*mode*/) {
    check_nonempty(x, "layer_forward");
    BasicLayerOutput<T> r;
    switch (layer.spec.kind) {
        case LayerKind::conv2d:
            r.y = conv_forward(layer, x);
            break;
        case LayerKind::dense:
            r.y = dense_forward(layer, x);
            break;
        case LayerKind::relu: {
            r.y = x;
            for (T& v : r.y.data()) v = v > T(0) ? v : T(0);
            break;
        }
        case LayerKind::sigmoid: {
            r.y = x;
            for (T& v : r.y.data()) v = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
            break;
        }
        case LayerKind::maxpool2:
            r = maxpool_forward(x);
            break;
        case LayerKind::l2norm: {
            r.y = x;
            const std::size_t f = features(x.shape());
            r.cache.norms.resize(x.shape().n);
            for (std::size_t n = 0; n < x.shape().n; ++n) {
                double sq = 0.0;
                for (std::size_t i = 0; i < f; ++i) sq += double(x[n * f + i]) * double(x[n * f + i]);
                const double norm = std::sqrt(sq);
                r.cache.norms[n] = norm;
                const double denom = std::max(norm, kL2NormEpsilon);
                for (std::size_t i = 0; i < f; ++i) r.y[n * f + i] = static_cast<T>(x[n * f + i] / denom);
            }
            break;
        }
    }
    check_finite(r.y, to_string(layer.spec.kind) + " forward");
    r.cache.kind = layer.spec.kind;
    r.cache.input = x;
    if (layer.spec.kind == LayerKind::sigmoid || layer.spec.kind == LayerKind::l2norm) r.cache.output = r.y;
    return r;
}

template <typename T>
BasicLayerGrads<T> layer_backward(const BasicLayer<T>& layer, const BasicForwardCache<T>& cache, const BasicTensor<T>& dy,
                                  bool need_dx) {
    if (cache.kind != layer.spec.kind) throw Error("layer_backward: cache does not belong to a " + to_string(layer.spec.kind));
    check_nonempty(cache.input, "layer_backward");
    const Shape expected = output_shape(layer.spec, cache.input.shape());
    if (dy.shape() != expected)
        throw Error("layer_backward: dy shape " + dy.shape().str() + " does not match output " + expected.str());
    BasicLayerGrads<T> grads;
    switch (layer.spec.kind) {
        case LayerKind::conv2d:
            grads = conv_backward(layer, cache, dy, need_dx);
            break;
        case LayerKind::dense:
            grads = dense_backward(layer, cache, dy, need_dx);
            break;
        case LayerKind::relu:
            if (need_dx) {
                grads.dx = dy;
                for (std::size_t i = 0; i < dy.size(); ++i)
                    if (!(cache.input[i] > T(0))) grads.dx[i] = T(0);
            }
            break;
        case LayerKind::sigmoid:
            if (need_dx) {
                grads.dx = dy;
                for (std::size_t i = 0; i < dy.size(); ++i) {
                    const T s = cache.output[i];
                    grads.dx[i] = dy[i] * s * (T(1) - s);
                }
            }
            break;
        case LayerKind::maxpool2:
            if (need_dx) {
                grads.dx = BasicTensor<T>(cache.input.shape());
                for (std::size_t o = 0; o < dy.size(); ++o) grads.dx[cache.argmax[o]] += dy[o];
            }
            break;
        case LayerKind::l2norm:
            if (need_dx) {
                grads.dx = dy;
                const std::size_t f = features(dy.shape());
                for (std::size_t n = 0; n < dy.shape().n; ++n) {
                    const double norm = cache.norms[n];
                    if (norm > kL2NormEpsilon) {
                        double dot = 0.0;
                        for (std::size_t i = 0; i < f; ++i) dot += double(cache.output[n * f + i]) * dy[n * f + i];
                        for (std::size_t i = 0; i < f; ++i)
                            grads.dx[n * f + i] =
                                static_cast<T>((dy[n * f + i] - cache.output[n * f + i] * dot) / norm);
                    } else {
                        for (std::size_t i = 0; i < f; ++i)
                            grads.dx[n * f + i] = static_cast<T>(dy[n * f + i] / kL2NormEpsilon);
                    }
                }
            }
            break;
    }
    if (need_dx) check_finite(grads.dx, to_string(layer.spec.kind) + " backward");
    return grads;
}

template BasicLayerOutput<float> layer_forward(const Layer&, const Tensor&, Mode);
template BasicLayerOutput<double> layer_forward(const BasicLayer<double>&, const TensorD&, Mode);
template BasicLayerGrads<float> layer_backward(const Layer&, const ForwardCache&, const Tensor&, bool);
template BasicLayerGrads<double> layer_backward(const BasicLayer<double>&, const BasicForwardCache<double>&, const TensorD&,
                                                bool);

}  // namespace vamkit
