#include <gtest/gtest.h>

#include "vamkit/config.hpp"
#include "vamkit/error.hpp"

using namespace vamkit;

TEST(RunConfig, JsonRoundTrip) {
    RunConfig c;
    c.train.epochs = 7;
    c.train.gate_mode = GateMode::product;
    c.train.attention_source = AttentionSource::learned_head;
    c.train.task = Task::inshop;
    c.train.margin = 0.5;
    c.train.seed = 12345678901234ull;
    c.dataset = "somewhere";
    EXPECT_EQ(run_config_from_json(to_json_string(c)), c);
}

TEST(RunConfig, MissingKeysTakeDefaults) {
    const RunConfig c = run_config_from_json(R"({"train": {"epochs": 3}})");
    EXPECT_EQ(c.train.epochs, 3);
    EXPECT_EQ(c.train.batch_triplets, TrainConfig{}.batch_triplets);
    EXPECT_EQ(c.network, NetworkConfig::desk_default());
}

TEST(RunConfig, UnknownKeysRejected) {
    EXPECT_THROW(run_config_from_json(R"({"train": {"epoch": 3}})"), Error);
    EXPECT_THROW(run_config_from_json(R"({"trian": {}})"), Error);
    EXPECT_THROW(run_config_from_json(R"({"network": {"lower": [{"kind": "relu", "size": 2}]}})"), Error);
}

TEST(RunConfig, InvalidValuesRejected) {
    EXPECT_THROW(run_config_from_json(R"({"train": {"gate_mode": "dropout"}})"), Error);
    EXPECT_THROW(run_config_from_json(R"({"train": {"epochs": -1}})"), Error);
    EXPECT_THROW(run_config_from_json(R"({"train": {"train_fraction": 1.5}})"), Error);
    EXPECT_THROW(run_config_from_json("not json"), Error);
}

TEST(RunConfig, HashIgnoresDatasetPath) {
    RunConfig a, b;
    a.dataset = "x";
    b.dataset = "y";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.train.margin = 0.5;
    EXPECT_NE(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(RunConfig, ResolvedNetworkTakesTrainSettings) {
    RunConfig c;
    c.train.gate_mode = GateMode::none;
    c.train.attention_source = AttentionSource::learned_head;
    EXPECT_EQ(c.resolved_network().gate_mode, GateMode::none);
    EXPECT_EQ(c.resolved_network().attention_source, AttentionSource::learned_head);
}
