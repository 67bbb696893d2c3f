#include "vamkit/config.hpp"

#include <set>

#include <json.hpp>

#include "vamkit/error.hpp"
#include "vamkit/image_io.hpp"

namespace vamkit {

using nlohmann::json;

std::string to_string(Task task) { return task == Task::c2s ? "c2s" : "inshop"; }

Task task_from_string(const std::string& name) {
    if (name == "c2s") return Task::c2s;
    if (name == "inshop") return Task::inshop;
    throw Error("unknown task '" + name + "'");
}

NetworkConfig RunConfig::resolved_network() const {
    NetworkConfig n = network;
    n.gate_mode = train.gate_mode;
    n.attention_source = train.attention_source;
    return n;
}

void validate(const TrainConfig& c) {
    if (c.epochs < 0) throw Error("epochs must be >= 0");
    if (c.batch_triplets < 1) throw Error("batch_triplets must be >= 1");
    if (!(c.learning_rate >= 0.0)) throw Error("learning_rate must be >= 0");
    if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw Error("momentum must lie in [0, 1)");
    if (!(c.margin > 0.0)) throw Error("margin must be positive");
    if (c.negatives_per_pair < 1) throw Error("negatives_per_pair must be >= 1");
    if (c.pairs_per_class < 1) throw Error("pairs_per_class must be >= 1");
    if (!(c.train_fraction > 0.0 && c.train_fraction <= 1.0)) throw Error("train_fraction must lie in (0, 1]");
    if (c.checkpoint_every < 0) throw Error("checkpoint_every must be >= 0");
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw Error("config: " + where + " must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key)) throw Error("config: unknown key '" + key + "' in " + where);
}

json stack_to_json(const std::vector<LayerSpec>& stack) {
    json a = json::array();
    for (const LayerSpec& s : stack) {
        json l{{"kind", to_string(s.kind)}};
        if (s.kind == LayerKind::conv2d) {
            l["out"] = s.out;
            l["kernel"] = s.kernel;
            l["stride"] = s.stride;
            l["padding"] = s.padding;
        } else if (s.kind == LayerKind::dense) {
            l["out"] = s.out;
        }
        a.push_back(std::move(l));
    }
    return a;
}

std::vector<LayerSpec> stack_from_json(const json& a, const std::string& where) {
    if (!a.is_array()) throw Error("config: " + where + " must be an array");
    std::vector<LayerSpec> out;
    for (const json& l : a) {
        reject_unknown(l, {"kind", "out", "kernel", "stride", "padding"}, where);
        LayerSpec s;
        s.kind = layer_kind_from_string(l.at("kind").get<std::string>());
        s.out = l.value("out", 0);
        s.kernel = l.value("kernel", 1);
        s.stride = l.value("stride", 1);
        s.padding = l.value("padding", 0);
        out.push_back(s);
    }
    return out;
}

json network_to_json(const NetworkConfig& n) {
    return {{"input", {n.in_channels, n.in_height, n.in_width}},
            {"lower", stack_to_json(n.lower)},
            {"head", stack_to_json(n.head)},
            {"upper", stack_to_json(n.upper)},
            {"embedding_dim", n.embedding_dim}};
}

json train_to_json(const TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"batch_triplets", t.batch_triplets},
            {"learning_rate", t.learning_rate},
            {"momentum", t.momentum},
            {"margin", t.margin},
            {"negatives_per_pair", t.negatives_per_pair},
            {"pairs_per_class", t.pairs_per_class},
            {"task", to_string(t.task)},
            {"gate_mode", to_string(t.gate_mode)},
            {"attention_source", to_string(t.attention_source)},
            {"seed", t.seed},
            {"train_fraction", t.train_fraction},
            {"checkpoint_every", t.checkpoint_every}};
}

json to_json(const RunConfig& c) {
    return {{"dataset", c.dataset}, {"network", network_to_json(c.network)}, {"train", train_to_json(c.train)}};
}

}  // namespace

std::string to_json_string(const RunConfig& config) { return to_json(config).dump(2) + "\n"; }

RunConfig run_config_from_json(const std::string& text) {
    RunConfig c;
    try {
        const json j = json::parse(text);
        reject_unknown(j, {"dataset", "network", "train"}, "config");
        c.dataset = j.value("dataset", std::string{});
        if (j.contains("network")) {
            const json& n = j.at("network");
            reject_unknown(n, {"input", "lower", "head", "upper", "embedding_dim"}, "network");
            if (n.contains("input")) {
                const auto in = n.at("input").get<std::vector<std::size_t>>();
                if (in.size() != 3) throw Error("config: network.input must be [C, H, W]");
                c.network.in_channels = in[0];
                c.network.in_height = in[1];
                c.network.in_width = in[2];
            }
            if (n.contains("lower")) c.network.lower = stack_from_json(n.at("lower"), "network.lower");
            if (n.contains("head")) c.network.head = stack_from_json(n.at("head"), "network.head");
            if (n.contains("upper")) c.network.upper = stack_from_json(n.at("upper"), "network.upper");
            c.network.embedding_dim = n.value("embedding_dim", c.network.embedding_dim);
        }
        if (j.contains("train")) {
            const json& t = j.at("train");
            reject_unknown(t, {"epochs", "batch_triplets", "learning_rate", "momentum", "margin", "negatives_per_pair",
                               "pairs_per_class", "task", "gate_mode", "attention_source", "seed", "train_fraction",
                               "checkpoint_every"},
                           "train");
            TrainConfig& tc = c.train;
            tc.epochs = t.value("epochs", tc.epochs);
            tc.batch_triplets = t.value("batch_triplets", tc.batch_triplets);
            tc.learning_rate = t.value("learning_rate", tc.learning_rate);
            tc.momentum = t.value("momentum", tc.momentum);
            tc.margin = t.value("margin", tc.margin);
            tc.negatives_per_pair = t.value("negatives_per_pair", tc.negatives_per_pair);
            tc.pairs_per_class = t.value("pairs_per_class", tc.pairs_per_class);
            if (t.contains("task")) tc.task = task_from_string(t.at("task").get<std::string>());
            if (t.contains("gate_mode")) tc.gate_mode = gate_mode_from_string(t.at("gate_mode").get<std::string>());
            if (t.contains("attention_source"))
                tc.attention_source = attention_source_from_string(t.at("attention_source").get<std::string>());
            tc.seed = t.value("seed", tc.seed);
            tc.train_fraction = t.value("train_fraction", tc.train_fraction);
            tc.checkpoint_every = t.value("checkpoint_every", tc.checkpoint_every);
        }
    } catch (const json::exception& e) {
        throw Error(std::string("config: ") + e.what());
    }
    validate(c.train);
    validate(c.resolved_network());
    return c;
}

RunConfig load_run_config(const std::string& path) { return run_config_from_json(read_file(path)); }

std::string config_hash(const RunConfig& config) {
    json j = to_json(config);
    j.erase("dataset");
    return sha256_hex(j.dump()).substr(0, 16);
}

}  // namespace vamkit
