#include "vamkit/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "vamkit/checkpoint.hpp"
#include "vamkit/error.hpp"
#include "vamkit/parallel.hpp"
#include "vamkit/rng.hpp"

namespace vamkit {

OptimizerState OptimizerState::for_network(const EmbeddingNet& net) {
    return {net.zero_grads().tensors};
}

void sgd_step(EmbeddingNet& net, const ParamGrads& grads, OptimizerState& state, double learning_rate, double momentum) {
    const std::size_t n = net.slots().size();
    if (grads.tensors.size() != n || state.velocity.size() != n)
        throw Error("sgd_step: gradient/optimizer state does not match the network");
    for (std::size_t s = 0; s < n; ++s) {
        Tensor& w = net.param(s);
        const Tensor& g = grads.tensors[s];
        Tensor& v = state.velocity[s];
        check_same_shape(w, g, "sgd_step");
        check_same_shape(w, v, "sgd_step");
        for (float x : g.data())
            if (!std::isfinite(x))
                throw Error("sgd_step: non-finite gradient in layer " + net.slots()[s].name() + " (" +
                            net.slots()[s].section + ")");
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = static_cast<float>(momentum * v[i] - learning_rate * g[i]);
            w[i] = static_cast<float>(double(w[i]) + double(v[i]));
        }
    }
}

std::vector<std::size_t> select_training_items(const DatasetManifest& manifest, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("train_fraction must lie in (0, 1]");
    std::vector<std::size_t> items = manifest.item_indices(ItemSplit::train);
    if (fraction >= 1.0) return items;
    const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(items.size()) - 1e-9));
    Stream rng(derive_seed(seed, "train-subset"));
    rng.shuffle(items);
    items.resize(keep);
    std::sort(items.begin(), items.end());
    return items;
}

std::vector<Triplet> sample_epoch_triplets(const DatasetManifest& manifest, std::span<const std::size_t> items,
                                           const TrainConfig& config, std::uint64_t seed) {
    try {
        return config.task == Task::c2s
                   ? sample_triplets_cross_domain(manifest, items, config.negatives_per_pair, seed)
                   : sample_triplets_inshop(manifest, items, config.pairs_per_class, seed);
    } catch (const Error& e) {
        throw Error(std::string("empty triplet set: ") + e.what());
    }
}

EmbeddingVector embed_image(const EmbeddingNet& net, const Dataset& dataset, const std::string& id) {
    const Tensor image = dataset.image(id);
    if (net.config().attention_source == AttentionSource::oracle_mask) {
        const AttentionMap map = oracle_attention(dataset.mask(id), net.shapes().attention.h, net.shapes().attention.w);
        return embed(net, image, Mode::eval, {}, &map).embedding;
    }
    return embed(net, image, Mode::eval, {}).embedding;
}

namespace {

// Images and oracle maps of the training items, held in memory for the run.
struct ImageBank {
    std::vector<std::string> ids;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<Tensor> images;
    std::vector<std::optional<AttentionMap>> maps;

    const AttentionMap* map(std::size_t i) const { return maps[i] ? &*maps[i] : nullptr; }
};

ImageBank load_bank(const Dataset& dataset, const EmbeddingNet& net, std::span<const std::size_t> items, Task task) {
    ImageBank bank;
    const bool oracle = net.config().attention_source == AttentionSource::oracle_mask;
    for (std::size_t idx : items) {
        const ItemRecord& rec = dataset.manifest().item(idx);
        std::vector<std::string> ids = rec.shop;
        if (task == Task::c2s) ids.insert(ids.end(), rec.consumer.begin(), rec.consumer.end());
        for (const auto& id : ids) {
            bank.index[id] = bank.ids.size();
            bank.ids.push_back(id);
            bank.images.push_back(dataset.image(id));
            if (oracle)
                bank.maps.emplace_back(
                    oracle_attention(dataset.mask(id), net.shapes().attention.h, net.shapes().attention.w));
            else
                bank.maps.emplace_back(std::nullopt);
        }
    }
    return bank;
}

struct IndexedTriplet {
    std::size_t a, p, n;
};

std::vector<IndexedTriplet> index_triplets(const ImageBank& bank, const std::vector<Triplet>& triplets) {
    std::vector<IndexedTriplet> out;
    out.reserve(triplets.size());
    for (const Triplet& t : triplets) out.push_back({bank.index.at(t.anchor), bank.index.at(t.positive), bank.index.at(t.negative)});
    return out;
}

double eval_loss(const EmbeddingNet& net, const ImageBank& bank, const std::vector<IndexedTriplet>& triplets,
                 double margin, unsigned threads) {
    std::vector<char> used(bank.ids.size(), 0);
    for (const auto& t : triplets) used[t.a] = used[t.p] = used[t.n] = 1;
    std::vector<EmbeddingVector> emb(bank.ids.size());
    parallel_for(bank.ids.size(), threads, [&](std::size_t i) {
        if (used[i]) emb[i] = embed(net, bank.images[i], Mode::eval, {}, bank.map(i)).embedding;
    });
    double sum = 0.0;
    for (const auto& t : triplets) sum += triplet_loss(emb[t.a].values, emb[t.p].values, emb[t.n].values, margin);
    return sum / static_cast<double>(triplets.size());
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

TrainResult train(const Dataset& dataset, const RunConfig& config, const TrainOptions& options) {
    const TrainConfig& tc = config.train;
    validate(tc);
    const unsigned threads = resolve_threads(options.threads);
    const DatasetManifest& manifest = dataset.manifest();
    if (manifest.extents.height != config.network.in_height || manifest.extents.width != config.network.in_width)
        throw Error("dataset extents do not match the network input");

    TrainResult result;
    result.net = build_network(config.resolved_network(), tc.seed);
    EmbeddingNet& net = result.net;
    result.items = select_training_items(manifest, tc.train_fraction, tc.seed);
    const ImageBank bank = load_bank(dataset, net, result.items, tc.task);

    const auto fixed =
        index_triplets(bank, sample_epoch_triplets(manifest, result.items, tc, derive_seed(tc.seed, "eval-triplets")));
    result.initial_eval_loss = eval_loss(net, bank, fixed, tc.margin, threads);

    std::ofstream metrics;
    if (options.checkpoint_dir) {
        std::filesystem::create_directories(*options.checkpoint_dir);
        metrics.open(*options.checkpoint_dir / "metrics.jsonl", std::ios::trunc);
        if (!metrics) throw IoError("cannot write " + (*options.checkpoint_dir / "metrics.jsonl").string());
    }
    auto write_checkpoint = [&](int epoch) {
        if (!options.checkpoint_dir) return;
        save_checkpoint(*options.checkpoint_dir, Checkpoint{config, net, epoch, result.initial_eval_loss, result.history});
    };

    OptimizerState state = OptimizerState::for_network(net);
    const Shape& fs = net.shapes().features;
    const std::uint64_t mask_stride = fs.c * fs.h * fs.w;
    double initial_batch_loss = -1.0;

    for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
        auto triplets = index_triplets(
            bank, sample_epoch_triplets(manifest, result.items, tc, derive_seed(tc.seed, "epoch-triplets", epoch)));
        Stream order(derive_seed(tc.seed, "epoch-order", epoch));
        order.shuffle(triplets);

        double epoch_loss = 0.0;
        const auto batch_size = static_cast<std::size_t>(tc.batch_triplets);
        for (std::size_t start = 0, batch = 0; start < triplets.size(); start += batch_size, ++batch) {
            const std::size_t end = std::min(start + batch_size, triplets.size());
            const auto count = static_cast<double>(end - start);

            // Each distinct image is embedded once per batch, as sample `slot` of the batch.
            std::vector<std::size_t> unique;
            std::unordered_map<std::size_t, std::size_t> slot_of;
            for (std::size_t t = start; t < end; ++t)
                for (std::size_t id : {triplets[t].a, triplets[t].p, triplets[t].n})
                    if (slot_of.emplace(id, unique.size()).second) unique.push_back(id);

            const std::uint64_t key = mask_stream_key(tc.seed, static_cast<std::uint64_t>(epoch), batch, 0);
            std::vector<EmbedResult> fwd(unique.size());
            parallel_for(unique.size(), threads, [&](std::size_t u) {
                fwd[u] = embed(net, bank.images[unique[u]], Mode::train, MaskStream{key, u * mask_stride},
                               bank.map(unique[u]));
            });

            const std::size_t dim = fwd.front().embedding.size();
            std::vector<std::vector<double>> d_emb(unique.size(), std::vector<double>(dim, 0.0));
            std::vector<char> active(unique.size(), 0);
            double batch_loss = 0.0;
            for (std::size_t t = start; t < end; ++t) {
                const std::size_t ua = slot_of[triplets[t].a];
                const std::size_t up = slot_of[triplets[t].p];
                const std::size_t un = slot_of[triplets[t].n];
                const auto& a = fwd[ua].embedding.values;
                const auto& p = fwd[up].embedding.values;
                const auto& n = fwd[un].embedding.values;
                const double loss = triplet_loss(a, p, n, tc.margin);
                batch_loss += loss;
                if (loss <= 0.0) continue;
                const TripletGrads g = triplet_loss_grad(a, p, n, tc.margin);
                for (std::size_t i = 0; i < dim; ++i) {
                    d_emb[ua][i] += g.da[i] / count;
                    d_emb[up][i] += g.dp[i] / count;
                    d_emb[un][i] += g.dn[i] / count;
                }
                active[ua] = active[up] = active[un] = 1;
            }
            batch_loss /= count;
            if (!std::isfinite(batch_loss)) throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch));
            if (initial_batch_loss < 0.0) initial_batch_loss = batch_loss;
            if (initial_batch_loss > 0.0 && batch_loss > 10.0 * initial_batch_loss)
                throw Error("training diverged: batch loss " + std::to_string(batch_loss) + " exceeds 10x the initial " +
                            std::to_string(initial_batch_loss));
            epoch_loss += batch_loss * count;

            std::vector<std::optional<ParamGrads>> parts(unique.size());
            parallel_for(unique.size(), threads, [&](std::size_t u) {
                if (!active[u]) return;
                std::vector<float> d(d_emb[u].begin(), d_emb[u].end());
                parts[u] = network_backward(net, fwd[u].trace, d);
            });
            ParamGrads grads = net.zero_grads();
            for (const auto& part : parts)
                if (part) grads.accumulate(*part);
            sgd_step(net, grads, state, tc.learning_rate, tc.momentum);
        }

        EpochMetrics m{epoch, epoch_loss / static_cast<double>(triplets.size()),
                       eval_loss(net, bank, fixed, tc.margin, threads), tc.learning_rate};
        result.history.push_back(m);
        if (metrics.is_open()) {
            const nlohmann::json line{{"epoch", m.epoch},
                                      {"mean_loss", m.mean_loss},
                                      {"eval_loss", m.eval_loss},
                                      {"lr", m.learning_rate},
                                      {"timestamp", utc_timestamp()}};
            metrics << line.dump() << "\n" << std::flush;
        }
        if (options.on_epoch) options.on_epoch(m);
        if (tc.checkpoint_every > 0 && epoch % tc.checkpoint_every == 0 && epoch != tc.epochs) write_checkpoint(epoch);
    }
    write_checkpoint(tc.epochs);
    return result;
}

}  // namespace vamkit
