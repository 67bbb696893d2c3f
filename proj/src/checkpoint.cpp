#include "vamkit/checkpoint.hpp"

#include <json.hpp>

#include "vamkit/error.hpp"
#include "vamkit/image_io.hpp"

namespace vamkit {

namespace fs = std::filesystem;
using nlohmann::json;

void save_checkpoint(const fs::path& dir, const Checkpoint& ck) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw IoError("cannot create checkpoint directory " + dir.string());
    const EmbeddingNet& net = ck.net;

    json layers = json::array();
    for (std::size_t i = 0; i < net.layer_count(); ++i) {
        const Layer& l = net.layer(i);
        json entry{{"index", i}, {"section", net.section_of(i)}, {"kind", to_string(l.spec.kind)}, {"params", json::array()}};
        layers.push_back(std::move(entry));
    }
    for (std::size_t s = 0; s < net.slots().size(); ++s) {
        const ParamSlot& slot = net.slots()[s];
        const std::string file = slot.name() + ".tns";
        save_blob(dir / file, net.param(s));
        layers[slot.layer_index]["params"].push_back(file);
    }
    json history = json::array();
    for (const EpochMetrics& m : ck.history)
        history.push_back({{"epoch", m.epoch}, {"mean_loss", m.mean_loss}, {"eval_loss", m.eval_loss}, {"lr", m.learning_rate}});

    json manifest{{"config", json::parse(to_json_string(ck.config))},
                  {"config_hash", config_hash(ck.config)},
                  {"layers", std::move(layers)},
                  {"seed", ck.config.train.seed},
                  {"epoch", ck.epoch},
                  {"initial_eval_loss", ck.initial_eval_loss},
                  {"loss_history", std::move(history)}};
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
    const fs::path manifest_file = dir / "manifest.json";
    if (!fs::exists(manifest_file)) throw IoError("checkpoint manifest not found: " + manifest_file.string());
    Checkpoint ck;
    json manifest;
    try {
        manifest = json::parse(read_file(manifest_file));
        ck.config = run_config_from_json(manifest.at("config").dump());
        ck.epoch = manifest.at("epoch").get<int>();
        ck.initial_eval_loss = manifest.value("initial_eval_loss", 0.0);
        for (const json& h : manifest.at("loss_history"))
            ck.history.push_back({h.at("epoch").get<int>(), h.at("mean_loss").get<double>(), h.at("eval_loss").get<double>(),
                                  h.at("lr").get<double>()});
    } catch (const json::exception& e) {
        throw IoError(manifest_file.string() + ": " + e.what());
    }
    ck.net = build_network(ck.config.resolved_network(), ck.config.train.seed);
    if (manifest.at("layers").size() != ck.net.layer_count())
        throw IoError(manifest_file.string() + ": layer count does not match the stored config");
    for (std::size_t s = 0; s < ck.net.slots().size(); ++s) {
        const fs::path file = dir / (ck.net.slots()[s].name() + ".tns");
        Tensor t = load_blob(file);
        if (t.shape() != ck.net.param(s).shape())
            throw IoError(file.string() + ": shape " + t.shape().str() + " does not match " + ck.net.param(s).shape().str());
        ck.net.param(s) = std::move(t);
    }
    return ck;
}

}  // namespace vamkit
