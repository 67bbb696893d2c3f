#include <gtest/gtest.h>

#include <cmath>

#include "vamkit/error.hpp"
#include "vamkit/gradcheck.hpp"
#include "vamkit/network.hpp"
#include "vamkit/training.hpp"

using namespace vamkit;

namespace {

Tensor random_tensor(Shape s, Stream& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(s);
    for (float& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

NetworkConfig config_with(GateMode gate, AttentionSource source) {
    NetworkConfig c = NetworkConfig::desk_default();
    c.gate_mode = gate;
    c.attention_source = source;
    return c;
}

std::vector<float> first_half(const EmbeddingVector& e) {
    return {e.values.begin(), e.values.begin() + e.values.size() / 2};
}
std::vector<float> second_half(const EmbeddingVector& e) {
    return {e.values.begin() + e.values.size() / 2, e.values.end()};
}

struct Fixture {
    Stream rng{derive_seed(5, "network-test")};
    Tensor image = random_tensor({1, 3, 32, 32}, rng, 0, 1);
    AttentionMap interior{random_tensor({1, 1, 8, 8}, rng, 0.1, 0.9)};
};

}  // namespace

TEST(BuildNetwork, DeskDefaultShapes) {
    const EmbeddingNet net = build_network(config_with(GateMode::impdrop, AttentionSource::learned_head), 1);
    EXPECT_EQ(net.shapes().features, (Shape{1, 16, 8, 8}));
    EXPECT_EQ(net.shapes().attention, (Shape{1, 1, 8, 8}));
    EXPECT_EQ(net.shapes().branch_dim, 32u);
    EXPECT_EQ(net.config().embedding_dim, 64);
}

TEST(BuildNetwork, OddEmbeddingDimRejected) {
    NetworkConfig c = NetworkConfig::desk_default();
    c.embedding_dim = 3;
    try {
        build_network(c, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("embedding_dim must be even"), std::string::npos);
    }
}

TEST(BuildNetwork, HeadMustMatchFeatureGrid) {
    NetworkConfig c = config_with(GateMode::product, AttentionSource::learned_head);
    c.head.insert(c.head.begin(), LayerSpec{LayerKind::maxpool2});
    EXPECT_THROW(build_network(c, 1), Error);
}

TEST(BuildNetwork, SeedDeterminism) {
    const auto cfg = config_with(GateMode::impdrop, AttentionSource::learned_head);
    const EmbeddingNet a = build_network(cfg, 4);
    const EmbeddingNet b = build_network(cfg, 4);
    const EmbeddingNet c = build_network(cfg, 5);
    ASSERT_EQ(a.slots().size(), b.slots().size());
    bool differs = false;
    for (std::size_t s = 0; s < a.slots().size(); ++s) {
        EXPECT_EQ(a.param(s), b.param(s));
        if (!(a.param(s) == c.param(s))) differs = true;
    }
    EXPECT_TRUE(differs);
}

TEST(Embed, NoGateGivesIdenticalHalves) {
    Fixture f;
    const EmbeddingNet net = build_network(config_with(GateMode::none, AttentionSource::oracle_mask), 2);
    for (Mode mode : {Mode::eval, Mode::train}) {
        const EmbeddingVector e = embed(net, f.image, mode, {3, 0}, &f.interior).embedding;
        EXPECT_EQ(e.size(), 64u);
        EXPECT_EQ(first_half(e), second_half(e));
    }
}

TEST(Embed, AllOnesAttentionIsIdentityInEval) {
    Fixture f;
    const EmbeddingNet net = build_network(config_with(GateMode::impdrop, AttentionSource::oracle_mask), 2);
    const AttentionMap ones(Tensor({1, 1, 8, 8}, 1.0f));
    const EmbeddingVector e = embed(net, f.image, Mode::eval, {}, &ones).embedding;
    EXPECT_EQ(first_half(e), second_half(e));
}

TEST(Embed, AllZeroAttentionSeesZeroMaps) {
    Fixture f;
    const EmbeddingNet net = build_network(config_with(GateMode::product, AttentionSource::oracle_mask), 2);
    const AttentionMap zeros(Tensor({1, 1, 8, 8}, 0.0f));
    const EmbeddingVector e = embed(net, f.image, Mode::eval, {}, &zeros).embedding;
    Tensor x(Shape{1, 16, 8, 8}, 0.0f);
    std::vector<ForwardCache> unused;
    for (const Layer& l : net.upper()) x = layer_forward(l, x, Mode::eval).y;
    EXPECT_EQ(second_half(e), std::vector<float>(x.data().begin(), x.data().end()));
}

TEST(Embed, HalvesAreUnitNorm) {
    Fixture f;
    const EmbeddingNet net = build_network(config_with(GateMode::impdrop, AttentionSource::learned_head), 2);
    const EmbeddingVector e = embed(net, f.image, Mode::eval, {}).embedding;
    for (const auto& half : {first_half(e), second_half(e)}) {
        double sq = 0.0;
        for (float v : half) sq += double(v) * v;
        EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-5);
    }
}

TEST(Embed, TrainModeDependsOnMaskStreamEvalDoesNot) {
    Fixture f;
    const EmbeddingNet net = build_network(config_with(GateMode::impdrop, AttentionSource::oracle_mask), 2);
    EXPECT_NE(embed(net, f.image, Mode::train, {1, 0}, &f.interior).embedding,
              embed(net, f.image, Mode::train, {2, 0}, &f.interior).embedding);
    EXPECT_EQ(embed(net, f.image, Mode::train, {1, 0}, &f.interior).embedding,
              embed(net, f.image, Mode::train, {1, 0}, &f.interior).embedding);
    EXPECT_EQ(embed(net, f.image, Mode::eval, {1, 0}, &f.interior).embedding,
              embed(net, f.image, Mode::eval, {2, 0}, &f.interior).embedding);
}

TEST(Embed, OracleArgumentChecked) {
    Fixture f;
    const EmbeddingNet oracle_net = build_network(config_with(GateMode::impdrop, AttentionSource::oracle_mask), 2);
    EXPECT_THROW(embed(oracle_net, f.image, Mode::eval, {}), Error);
    const EmbeddingNet head_net = build_network(config_with(GateMode::impdrop, AttentionSource::learned_head), 2);
    EXPECT_THROW(embed(head_net, f.image, Mode::eval, {}, &f.interior), Error);
    EXPECT_THROW(embed(head_net, Tensor({1, 3, 16, 16}, 0.5f), Mode::eval, {}), Error);
}

TEST(NetworkBackward, ZeroUpstreamGivesZeroGradients) {
    Fixture f;
    const EmbeddingNet net = build_network(config_with(GateMode::impdrop, AttentionSource::learned_head), 2);
    const EmbedResult r = embed(net, f.image, Mode::train, {7, 0});
    const ParamGrads g = network_backward(net, r.trace, std::vector<float>(64, 0.0f));
    for (const Tensor& t : g.tensors)
        for (float v : t.data()) EXPECT_EQ(v, 0.0f);
}

TEST(NetworkBackward, NoGateLeavesHeadUntouched) {
    Fixture f;
    const EmbeddingNet net = build_network(config_with(GateMode::none, AttentionSource::learned_head), 2);
    const EmbedResult r = embed(net, f.image, Mode::train, {7, 0});
    Stream rng(1);
    std::vector<float> d(64);
    for (float& v : d) v = static_cast<float>(rng.uniform(-1, 1));
    const ParamGrads g = network_backward(net, r.trace, d);
    bool lower_nonzero = false;
    for (std::size_t s = 0; s < net.slots().size(); ++s) {
        for (float v : g.tensors[s].data()) {
            if (net.slots()[s].section == "head") EXPECT_EQ(v, 0.0f);
            if (net.slots()[s].section == "lower" && v != 0.0f) lower_nonzero = true;
        }
    }
    EXPECT_TRUE(lower_nonzero);
}

TEST(NetworkBackward, SharedUpperGradientIsSumOfBranches) {
    Fixture f;
    for (GateMode gate : {GateMode::impdrop, GateMode::product}) {
        const EmbeddingNet net = build_network(config_with(gate, AttentionSource::learned_head), 3);
        const EmbedResult r = embed(net, f.image, Mode::train, {11, 0});
        Stream rng(2);
        std::vector<float> d(64);
        for (float& v : d) v = static_cast<float>(rng.uniform(-1, 1));
        std::vector<float> da = d, db = d;
        std::fill(da.begin() + 32, da.end(), 0.0f);
        std::fill(db.begin(), db.begin() + 32, 0.0f);
        const ParamGrads both = network_backward(net, r.trace, d);
        const ParamGrads a = network_backward(net, r.trace, da);
        const ParamGrads b = network_backward(net, r.trace, db);
        for (std::size_t s = 0; s < net.slots().size(); ++s) {
            if (net.slots()[s].section != "upper") continue;
            for (std::size_t i = 0; i < both.tensors[s].size(); ++i) {
                const double sum = double(a.tensors[s][i]) + b.tensors[s][i];
                EXPECT_NEAR(both.tensors[s][i], sum, 1e-6 * std::max(1.0, std::abs(sum)));
            }
        }
    }
}

TEST(NetworkBackward, FiniteDifferencesTwentyParameters) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const GradcheckReport r = gradcheck_network(NetworkConfig::desk_default(), 20, seed);
        EXPECT_TRUE(r.all_pass()) << r.text();
        for (const auto& e : r.entries) {
            EXPECT_EQ(e.checked, 20u);
            EXPECT_EQ(e.rel_tolerance, 1e-2);
            EXPECT_EQ(e.abs_tolerance, 1e-4);
        }
    }
}

TEST(NetworkBackward, DoublePathMatchesFloatPath) {
    Fixture f;
    const EmbeddingNet net = build_network(config_with(GateMode::product, AttentionSource::learned_head), 6);
    const auto net64 = network_cast<double>(net);
    Stream rng(3);
    std::vector<float> d(64);
    for (float& v : d) v = static_cast<float>(rng.uniform(-1, 1));
    const ParamGrads g = network_backward(net, embed(net, f.image, Mode::eval, {}).trace, d);
    const auto g64 = network_backward(net64, embed(net64, tensor_cast<double>(f.image), Mode::eval, {}).trace,
                                      std::vector<double>(d.begin(), d.end()));
    for (std::size_t s = 0; s < g.tensors.size(); ++s)
        for (std::size_t i = 0; i < g.tensors[s].size(); ++i)
            EXPECT_NEAR(g.tensors[s][i], g64.tensors[s][i], 1e-4 * std::max(1.0, std::abs(g64.tensors[s][i])));
}

TEST(SharedParameters, StepIsVisibleToBothBranches) {
    Fixture f;
    EmbeddingNet net = build_network(config_with(GateMode::none, AttentionSource::oracle_mask), 2);
    const EmbedResult r = embed(net, f.image, Mode::train, {1, 0}, &f.interior);
    std::vector<float> d(64, 0.0f);
    for (std::size_t i = 32; i < 64; ++i) d[i] = 0.1f;  // gradient through the attention branch only
    OptimizerState state = OptimizerState::for_network(net);
    const EmbeddingVector before = embed(net, f.image, Mode::eval, {}, &f.interior).embedding;
    sgd_step(net, network_backward(net, r.trace, d), state, 0.5, 0.0);
    const EmbeddingVector after = embed(net, f.image, Mode::eval, {}, &f.interior).embedding;
    EXPECT_NE(first_half(before), first_half(after));
    EXPECT_EQ(first_half(after), second_half(after));
}
