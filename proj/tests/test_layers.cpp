#include <gtest/gtest.h>

#include <cmath>

#include "vamkit/error.hpp"
#include "vamkit/gradcheck.hpp"
#include "vamkit/layers.hpp"

using namespace vamkit;

namespace {

Tensor random_tensor(Shape s, Stream& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(s);
    for (float& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

Layer fixed_layer(LayerSpec spec, Tensor w, Tensor b) { return Layer{spec, std::move(w), std::move(b)}; }

// Direct-loop cross-correlation with zero padding, accumulated in double.
std::vector<double> naive_conv(const Layer& layer, const Tensor& x) {
    const LayerSpec& sp = layer.spec;
    const Shape os = output_shape(sp, x.shape());
    const Shape in = x.shape();
    std::vector<double> y(os.count());
    for (std::size_t n = 0; n < os.n; ++n)
        for (std::size_t o = 0; o < os.c; ++o)
            for (std::size_t i = 0; i < os.h; ++i)
                for (std::size_t j = 0; j < os.w; ++j) {
                    double acc = (*layer.bias)[o];
                    for (std::size_t c = 0; c < in.c; ++c)
                        for (int ki = 0; ki < sp.kernel; ++ki)
                            for (int kj = 0; kj < sp.kernel; ++kj) {
                                const long ii = long(i) * sp.stride + ki - sp.padding;
                                const long jj = long(j) * sp.stride + kj - sp.padding;
                                if (ii < 0 || jj < 0 || ii >= long(in.h) || jj >= long(in.w)) continue;
                                acc += double(layer.weights->at(o, c, ki, kj)) * x.at(n, c, ii, jj);
                            }
                    y[((n * os.c + o) * os.h + i) * os.w + j] = acc;
                }
    return y;
}

const GradcheckEntry* find_entry(const GradcheckReport& r, const std::string& name) {
    for (const auto& e : r.entries)
        if (e.name == name) return &e;
    return nullptr;
}

}  // namespace

TEST(LayerForward, Examples) {
    const Layer relu{{LayerKind::relu}, {}, {}};
    EXPECT_EQ(layer_forward(relu, Tensor({1, 3, 1, 1}, {-1, 0, 2}), Mode::eval).y, Tensor({1, 3, 1, 1}, {0, 0, 2}));

    const Layer conv = fixed_layer({LayerKind::conv2d, 1, 1, 1, 0}, Tensor({1, 1, 1, 1}, 2.0f), Tensor({1, 1, 1, 1}, 0.0f));
    EXPECT_EQ(layer_forward(conv, Tensor({1, 1, 1, 1}, 3.0f), Mode::eval).y[0], 6.0f);

    const Layer pool{{LayerKind::maxpool2}, {}, {}};
    EXPECT_EQ(layer_forward(pool, Tensor({1, 1, 2, 2}, {1, 5, 2, 3}), Mode::eval).y, Tensor({1, 1, 1, 1}, 5.0f));

    const Layer l2{{LayerKind::l2norm}, {}, {}};
    const Tensor y = layer_forward(l2, Tensor({1, 2, 1, 1}, {3, 4}), Mode::eval).y;
    EXPECT_FLOAT_EQ(y[0], 0.6f);
    EXPECT_FLOAT_EQ(y[1], 0.8f);
}

TEST(LayerBackward, Examples) {
    const Layer relu{{LayerKind::relu}, {}, {}};
    const Tensor x({1, 2, 1, 1}, {-1, 2});
    const auto out = layer_forward(relu, x, Mode::eval);
    EXPECT_EQ(layer_backward(relu, out.cache, Tensor({1, 2, 1, 1}, 1.0f)).dx, Tensor({1, 2, 1, 1}, {0, 1}));

    const Layer conv = fixed_layer({LayerKind::conv2d, 1, 1, 1, 0}, Tensor({1, 1, 1, 1}, 2.0f), Tensor({1, 1, 1, 1}, 0.0f));
    const auto cout = layer_forward(conv, Tensor({1, 1, 1, 1}, 3.0f), Mode::eval);
    const LayerGrads g = layer_backward(conv, cout.cache, Tensor({1, 1, 1, 1}, 1.0f));
    EXPECT_EQ(g.dx[0], 2.0f);
    EXPECT_EQ((*g.dweights)[0], 3.0f);
    EXPECT_EQ((*g.dbias)[0], 1.0f);

    Tensor eye({1, 4, 1, 4}, 0.0f);
    for (std::size_t i = 0; i < 4; ++i) eye.at(0, i, 0, i) = 1.0f;
    const Layer dense = fixed_layer({LayerKind::dense, 4, 1, 1, 0}, eye, Tensor({1, 4, 1, 1}, 0.0f));
    Stream rng(3);
    const Tensor xd = random_tensor({2, 4, 1, 1}, rng);
    const Tensor dy = random_tensor({2, 4, 1, 1}, rng);
    const auto dout = layer_forward(dense, xd, Mode::eval);
    EXPECT_EQ(dout.y, xd);
    EXPECT_EQ(layer_backward(dense, dout.cache, dy).dx, dy);
}

TEST(LayerForward, ConvMatchesDirectLoops) {
    Stream rng(11);
    for (const LayerSpec spec : {LayerSpec{LayerKind::conv2d, 4, 3, 1, 1}, LayerSpec{LayerKind::conv2d, 3, 3, 2, 0},
                                 LayerSpec{LayerKind::conv2d, 2, 1, 1, 0}, LayerSpec{LayerKind::conv2d, 5, 5, 1, 2}}) {
        const Tensor x = random_tensor({2, 3, 8, 7}, rng);
        Layer layer = make_layer(spec, x.shape(), rng);
        for (float& b : layer.bias->data()) b = static_cast<float>(rng.uniform(-1, 1));
        const Tensor y = layer_forward(layer, x, Mode::eval).y;
        const auto ref = naive_conv(layer, x);
        ASSERT_EQ(y.size(), ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-5);
    }
}

TEST(LayerForward, DenseMatchesDirectLoops) {
    Stream rng(12);
    const Tensor x = random_tensor({3, 2, 2, 2}, rng);
    Layer layer = make_layer({LayerKind::dense, 5}, x.shape(), rng);
    for (float& b : layer.bias->data()) b = static_cast<float>(rng.uniform(-1, 1));
    const Tensor y = layer_forward(layer, x, Mode::eval).y;
    ASSERT_EQ(y.shape(), (Shape{3, 5, 1, 1}));
    for (std::size_t n = 0; n < 3; ++n)
        for (std::size_t o = 0; o < 5; ++o) {
            double acc = (*layer.bias)[o];
            for (std::size_t i = 0; i < 8; ++i) acc += double((*layer.weights)[o * 8 + i]) * x[n * 8 + i];
            EXPECT_NEAR(y[n * 5 + o], acc, 1e-5);
        }
}

TEST(LayerForward, InitWithinGlorotBounds) {
    Stream rng(5);
    const Layer conv = make_layer({LayerKind::conv2d, 8, 3, 1, 1}, {1, 4, 8, 8}, rng);
    const double limit = std::sqrt(6.0 / (4 * 9 + 8 * 9));
    for (float w : conv.weights->data()) EXPECT_LE(std::abs(w), limit);
    for (float b : conv.bias->data()) EXPECT_EQ(b, 0.0f);
}

TEST(LayerForward, ShapeErrors) {
    EXPECT_THROW(output_shape({LayerKind::conv2d, 2, 5, 1, 0}, {1, 1, 3, 3}), Error);
    EXPECT_THROW(output_shape({LayerKind::maxpool2}, {1, 1, 1, 4}), Error);
    const Layer conv = fixed_layer({LayerKind::conv2d, 1, 1, 1, 0}, Tensor({1, 2, 1, 1}, 1.0f), Tensor({1, 1, 1, 1}, 0.0f));
    EXPECT_THROW(layer_forward(conv, Tensor({1, 3, 2, 2}, 1.0f), Mode::eval), Error);
}

TEST(LayerForward, MaxpoolTiesPickFirstIndex) {
    const Layer pool{{LayerKind::maxpool2}, {}, {}};
    const auto out = layer_forward(pool, Tensor({1, 1, 2, 2}, 7.0f), Mode::eval);
    const LayerGrads g = layer_backward(pool, out.cache, Tensor({1, 1, 1, 1}, 1.0f));
    EXPECT_EQ(g.dx, Tensor({1, 1, 2, 2}, {1, 0, 0, 0}));
}

TEST(LayerProperties, ReluAndMaxpoolAreNonExpanding) {
    Stream rng(21);
    for (int t = 0; t < 50; ++t) {
        const Tensor x = random_tensor({2, 3, 6, 6}, rng, -5, 5);
        for (LayerKind k : {LayerKind::relu, LayerKind::maxpool2}) {
            const Tensor y = layer_forward(Layer{{k}, {}, {}}, x, Mode::eval).y;
            float xm = 0, ym = 0;
            for (float v : x.data()) xm = std::max(xm, std::abs(v));
            for (float v : y.data()) ym = std::max(ym, std::abs(v));
            EXPECT_LE(ym, xm);
        }
    }
}

TEST(LayerProperties, L2NormOutputNorm) {
    Stream rng(22);
    const Layer l2{{LayerKind::l2norm}, {}, {}};
    Tensor x = random_tensor({4, 3, 2, 2}, rng);
    for (std::size_t i = 12; i < 24; ++i) x[i] = 0.0f;     // sample 1 all zero
    for (std::size_t i = 24; i < 36; ++i) x[i] = 1e-20f;   // sample 2 below epsilon
    const Tensor y = layer_forward(l2, x, Mode::eval).y;
    for (std::size_t n = 0; n < 4; ++n) {
        double sq = 0.0;
        for (std::size_t i = 0; i < 12; ++i) sq += double(y[n * 12 + i]) * y[n * 12 + i];
        const double norm = std::sqrt(sq);
        EXPECT_TRUE(std::abs(norm - 1.0) < 1e-6 || norm < 1.0) << norm;
        if (n == 0 || n == 3) EXPECT_NEAR(norm, 1.0, 1e-6);
    }
}

TEST(LayerBackward, FiniteDifferencesAllKinds) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const GradcheckReport r = gradcheck_layers(seed);
        EXPECT_TRUE(r.all_pass()) << r.text();
        for (const char* name : {"conv2d k3 p1 dx", "conv2d k3 p1 dweights", "conv2d k3 p1 dbias", "conv2d k3 s2 dx",
                                 "dense dx", "dense dweights", "relu dx", "maxpool2 dx", "l2norm dx", "sigmoid dx",
                                 "product gate dx", "product gate dp"}) {
            const GradcheckEntry* e = find_entry(r, name);
            ASSERT_NE(e, nullptr) << name;
            EXPECT_GT(e->checked, 0u);
            EXPECT_EQ(e->rel_tolerance, 1e-3);
            EXPECT_EQ(e->abs_tolerance, 1e-5);
        }
    }
}

TEST(LayerBackward, GradcheckReportIsDeterministic) {
    EXPECT_EQ(gradcheck_layers(4).text(), gradcheck_layers(4).text());
}

TEST(LayerBackward, FloatAndDoublePathsAgree) {
    Stream rng(30);
    const Tensor x = random_tensor({2, 3, 6, 6}, rng);
    const Layer conv = make_layer({LayerKind::conv2d, 4, 3, 1, 1}, x.shape(), rng);
    const auto out = layer_forward(conv, x, Mode::eval);
    const Tensor dy = random_tensor(out.y.shape(), rng);
    const LayerGrads g = layer_backward(conv, out.cache, dy);
    const auto conv64 = layer_cast<double>(conv);
    const auto out64 = layer_forward(conv64, tensor_cast<double>(x), Mode::eval);
    const auto g64 = layer_backward(conv64, out64.cache, tensor_cast<double>(dy));
    for (std::size_t i = 0; i < g.dx.size(); ++i) EXPECT_NEAR(g.dx[i], g64.dx[i], 1e-5);
    for (std::size_t i = 0; i < g.dweights->size(); ++i) EXPECT_NEAR((*g.dweights)[i], (*g64.dweights)[i], 1e-4);
}
