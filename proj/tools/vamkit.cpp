// vamkit: synthetic data generation, training, retrieval evaluation,
// gradient checks and gate-mode ablations from the command line.
//
// Exit codes: 0 success, 1 check or benchmark failure, 2 usage or environment error.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vamkit/checkpoint.hpp"
#include "vamkit/config.hpp"
#include "vamkit/dataset.hpp"
#include "vamkit/error.hpp"
#include "vamkit/gradcheck.hpp"
#include "vamkit/image_io.hpp"
#include "vamkit/retrieval.hpp"
#include "vamkit/rng.hpp"
#include "vamkit/training.hpp"

namespace fs = std::filesystem;
using namespace vamkit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

// Error that maps to exit code 2.
struct UsageError : Error {
    using Error::Error;
};

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ','))
        if (!part.empty()) out.push_back(part);
    return out;
}

std::vector<std::size_t> parse_ks(const std::string& text) {
    std::vector<std::size_t> ks;
    for (const auto& p : split_list(text)) {
        std::size_t used = 0;
        long v = 0;
        try {
            v = std::stol(p, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != p.size() || v < 1) throw UsageError("invalid k value '" + p + "'");
        ks.push_back(static_cast<std::size_t>(v));
    }
    if (ks.empty()) throw UsageError("empty k list");
    std::sort(ks.begin(), ks.end());
    ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
    return ks;
}

Extents parse_size(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x == std::string::npos) throw std::invalid_argument("no x");
        return {std::stoul(text.substr(0, x)), std::stoul(text.substr(x + 1))};
    } catch (const std::exception&) {
        throw UsageError("invalid size '" + text + "', expected HxW");
    }
}

Dataset open_dataset(const std::string& dir) {
    if (!fs::exists(fs::path(dir) / "manifest.json")) throw UsageError("dataset not found: " + dir);
    try {
        return load_dataset(dir);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

RunConfig read_config(const std::string& path) {
    if (path.empty()) return RunConfig{};
    if (!fs::exists(path)) throw UsageError("config file not found: " + path);
    try {
        return load_run_config(path);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

void write_report(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file(path, text);
}

struct GenArgs {
    std::string out;
    std::size_t items = 64;
    std::size_t consumers = 4;
    std::size_t shops = 1;
    std::string size = "32x32";
    std::uint64_t seed = 1;
    double train_ratio = 0.5;
};

int cmd_gen_data(const GenArgs& a) {
    GenerateOptions options;
    options.n_items = a.items;
    options.consumers_per_item = a.consumers;
    options.shops_per_item = a.shops;
    options.extents = parse_size(a.size);
    options.seed = a.seed;
    options.train_ratio = a.train_ratio;
    if (options.extents.height < 16 || options.extents.width < 16)
        throw UsageError("extents too small: " + a.size + " (minimum 16x16)");
    DatasetManifest m;
    try {
        m = generate_dataset(options, a.out);
    } catch (const IoError& e) {
        throw UsageError(e.what());
    }
    std::size_t shop = 0;
    std::size_t consumer = 0;
    for (const auto& item : m.items) {
        shop += item.shop.size();
        consumer += item.consumer.size();
    }
    std::cout << "dataset   " << a.out << "\n"
              << "seed      " << m.seed << "\n"
              << "extents   " << m.extents.height << "x" << m.extents.width << "\n"
              << "items     " << m.items.size() << " (" << m.item_indices(ItemSplit::train).size() << " train, "
              << m.item_indices(ItemSplit::test).size() << " test)\n"
              << "images    " << shop + consumer << " (" << shop << " shop, " << consumer << " consumer)\n"
              << "gallery   " << m.samples(SampleSplit::gallery).size() << "\n"
              << "query     " << m.samples(SampleSplit::query).size() << "\n"
              << "manifest  sha256 " << sha256_hex(read_file(fs::path(a.out) / "manifest.json")) << "\n";
    return kExitOk;
}

struct TrainArgs {
    std::string data;
    std::string config;
    std::string out;
    std::int64_t seed = -1;
    unsigned threads = 0;
};

int cmd_train(const TrainArgs& a) {
    RunConfig cfg = read_config(a.config);
    const Dataset dataset = open_dataset(a.data);
    cfg.dataset = a.data;
    if (a.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(a.seed);
    std::cout << "config " << config_hash(cfg) << "  gate=" << to_string(cfg.train.gate_mode)
              << "  attention=" << to_string(cfg.train.attention_source) << "  seed=" << cfg.train.seed << "\n";
    TrainOptions options;
    options.checkpoint_dir = a.out;
    options.threads = a.threads;
    options.on_epoch = [](const EpochMetrics& m) {
        std::cout << "epoch " << m.epoch << "  mean_loss " << m.mean_loss << "  eval_loss " << m.eval_loss << "\n"
                  << std::flush;
    };
    try {
        const TrainResult r = train(dataset, cfg, options);
        std::cout << "initial eval_loss " << r.initial_eval_loss << "\n";
    } catch (const IoError& e) {
        throw UsageError(e.what());
    }
    std::cout << "checkpoint written to " << a.out << "\n";
    return kExitOk;
}

struct EvalArgs {
    std::string ckpt;
    std::string data;
    std::string k = "1,5,10,20";
    std::string task = "c2s";
    std::string report;
    unsigned threads = 0;
};

int cmd_eval(const EvalArgs& a) {
    const std::vector<std::size_t> ks = parse_ks(a.k);
    Task task;
    try {
        task = task_from_string(a.task);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    Checkpoint ck;
    try {
        ck = load_checkpoint(a.ckpt);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    const Dataset dataset = open_dataset(a.data);
    const Extents ext = dataset.manifest().extents;
    if (ext.height != ck.config.network.in_height || ext.width != ck.config.network.in_width)
        throw UsageError("dimension mismatch: checkpoint expects " + std::to_string(ck.config.network.in_height) + "x" +
                         std::to_string(ck.config.network.in_width) + " images, dataset has " +
                         std::to_string(ext.height) + "x" + std::to_string(ext.width));
    const std::vector<double> acc = evaluate_retrieval(ck.net, dataset, task, ks, a.threads);

    AblationReport report;
    report.config_hash = config_hash(ck.config);
    for (std::size_t j = 0; j < ks.size(); ++j) {
        report.rows.push_back({ck.config.train.gate_mode, ck.config.train.seed, ks[j], acc[j]});
        report.means.push_back({ck.config.train.gate_mode, ks[j], acc[j], 0.0});
    }
    std::cout << "task " << to_string(task) << "  gate=" << to_string(ck.config.train.gate_mode) << "\n";
    for (std::size_t j = 0; j < ks.size(); ++j) std::cout << "top-" << ks[j] << "  " << acc[j] << "\n";
    const fs::path out = a.report.empty() ? fs::path(a.ckpt) / "eval_report.json" : fs::path(a.report);
    write_report(out, report.to_json());
    std::cout << "report written to " << out.string() << "\n";
    return kExitOk;
}

struct GradcheckArgs {
    std::uint64_t seed = 1;
    std::string scope = "all";
    std::size_t params = 20;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    if (a.scope != "layer" && a.scope != "network" && a.scope != "all")
        throw UsageError("--scope must be layer, network or all");
    GradcheckReport report;
    if (a.scope != "network") report = gradcheck_layers(a.seed);
    if (a.scope != "layer") {
        const GradcheckReport net = gradcheck_network(NetworkConfig::desk_default(), a.params, a.seed);
        report.entries.insert(report.entries.end(), net.entries.begin(), net.entries.end());
    }
    std::cout << report.text();
    const bool ok = report.all_pass();
    std::cout << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
    return ok ? kExitOk : kExitFailure;
}

struct AblateArgs {
    std::string data;
    std::string config;
    std::string modes = "impdrop,product,none";
    double fraction = 1.0;
    std::size_t seeds = 5;
    double margin = 0.0;
    int epochs = -1;
    std::string attention = "oracle_mask";
    std::string k = "1,5,10,20";
    std::uint64_t seed = 1;
    std::string report;
    unsigned threads = 0;
};

int cmd_ablate(const AblateArgs& a) {
    RunConfig cfg = read_config(a.config);
    const Dataset dataset = open_dataset(a.data);
    cfg.dataset = a.data;
    std::vector<GateMode> modes;
    try {
        for (const auto& m : split_list(a.modes)) modes.push_back(gate_mode_from_string(m));
        cfg.train.attention_source = attention_source_from_string(a.attention);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    if (modes.empty()) throw UsageError("--modes is empty");
    if (a.seeds < 1) throw UsageError("--seeds must be >= 1");
    cfg.train.train_fraction = a.fraction;
    if (a.margin > 0.0) cfg.train.margin = a.margin;
    if (a.epochs >= 0) cfg.train.epochs = a.epochs;
    try {
        validate(cfg.train);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    const std::vector<std::uint64_t> seeds = ablation_seeds(a.seed, a.seeds);
    const std::vector<std::size_t> ks = parse_ks(a.k);
    const AblationReport report = run_ablation(dataset, cfg, modes, seeds, ks, a.threads,
                                               [](const std::string& line) { std::cerr << line << "\n"; });
    std::cout << report.text_table();
    const fs::path out = a.report.empty() ? fs::path("ablation_report.json") : fs::path(a.report);
    write_report(out, report.to_json());
    std::cout << "report written to " << out.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vamkit: attention-gated two-branch embeddings for cross-domain retrieval"};
    app.require_subcommand(1);
    unsigned threads = 0;
    app.add_option("--threads", threads, "worker threads (default: $VAMKIT_THREADS or all cores)");

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic shop/consumer dataset");
    gen_cmd->add_option("--out", gen.out, "output directory")->required();
    gen_cmd->add_option("--items", gen.items, "number of items");
    gen_cmd->add_option("--consumers", gen.consumers, "consumer images per item");
    gen_cmd->add_option("--shops", gen.shops, "shop images per item");
    gen_cmd->add_option("--size", gen.size, "image extents HxW");
    gen_cmd->add_option("--seed", gen.seed, "generation seed");
    gen_cmd->add_option("--train-ratio", gen.train_ratio, "fraction of items assigned to training");

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "train an embedding network");
    train_cmd->add_option("--data", tr.data, "dataset directory")->required();
    train_cmd->add_option("--config", tr.config, "run config JSON");
    train_cmd->add_option("--out", tr.out, "checkpoint directory")->required();
    train_cmd->add_option("--seed", tr.seed, "override the config seed");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand("eval", "top-k retrieval accuracy of a checkpoint");
    eval_cmd->add_option("--ckpt", ev.ckpt, "checkpoint directory")->required();
    eval_cmd->add_option("--data", ev.data, "dataset directory")->required();
    eval_cmd->add_option("--k", ev.k, "comma-separated k values");
    eval_cmd->add_option("--task", ev.task, "c2s or inshop");
    eval_cmd->add_option("--report", ev.report, "report JSON path (default <ckpt>/eval_report.json)");

    GradcheckArgs gc;
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    gc_cmd->add_option("--seed", gc.seed, "seed");
    gc_cmd->add_option("--scope", gc.scope, "layer, network or all");
    gc_cmd->add_option("--params", gc.params, "sampled parameters for the network check");

    AblateArgs ab;
    auto* ab_cmd = app.add_subcommand("ablate", "train and evaluate every gate mode over several seeds");
    ab_cmd->add_option("--data", ab.data, "dataset directory")->required();
    ab_cmd->add_option("--config", ab.config, "base run config JSON");
    ab_cmd->add_option("--modes", ab.modes, "comma-separated gate modes");
    ab_cmd->add_option("--fraction", ab.fraction, "fraction of training items");
    ab_cmd->add_option("--seeds", ab.seeds, "number of seeds");
    ab_cmd->add_option("--margin", ab.margin, "triplet margin override");
    ab_cmd->add_option("--epochs", ab.epochs, "epoch override");
    ab_cmd->add_option("--attention", ab.attention, "oracle_mask or learned_head");
    ab_cmd->add_option("--k", ab.k, "comma-separated k values");
    ab_cmd->add_option("--seed", ab.seed, "base seed");
    ab_cmd->add_option("--report", ab.report, "report JSON path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*gen_cmd) return cmd_gen_data(gen);
        if (*train_cmd) {
            tr.threads = threads;
            return cmd_train(tr);
        }
        if (*eval_cmd) {
            ev.threads = threads;
            return cmd_eval(ev);
        }
        if (*gc_cmd) return cmd_gradcheck(gc);
        if (*ab_cmd) {
            ab.threads = threads;
            return cmd_ablate(ab);
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}
