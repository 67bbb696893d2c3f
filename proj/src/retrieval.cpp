#include "vamkit/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "vamkit/error.hpp"
#include "vamkit/parallel.hpp"
#include "vamkit/training.hpp"

namespace vamkit {

void Gallery::add(GalleryEntry entry) {
    if (entry.embedding.size() != dim_)
        throw Error("gallery: embedding length " + std::to_string(entry.embedding.size()) + " != " + std::to_string(dim_));
    for (const auto& e : entries_)
        if (e.image_id == entry.image_id) throw Error("gallery: duplicate image id " + entry.image_id);
    entries_.push_back(std::move(entry));
}

Gallery build_gallery(const EmbeddingNet& net, const Dataset& dataset, SampleSplit split, unsigned threads) {
    const auto ids = dataset.manifest().samples(split);
    if (ids.empty()) throw Error("build_gallery: empty gallery split");
    std::vector<EmbeddingVector> emb(ids.size());
    parallel_for(ids.size(), resolve_threads(threads), [&](std::size_t i) { emb[i] = embed_image(net, dataset, ids[i]); });
    Gallery gallery(static_cast<std::size_t>(net.config().embedding_dim));
    for (std::size_t i = 0; i < ids.size(); ++i)
        gallery.add({ids[i], dataset.manifest().item(dataset.manifest().item_of(ids[i])).id, std::move(emb[i])});
    return gallery;
}

RetrievalResult topk_search(const Gallery& gallery, const EmbeddingVector& query, std::size_t k,
                            const std::string& query_id, const std::string& exclude_id) {
    if (k < 1) throw Error("topk_search: k must be >= 1");
    if (gallery.empty()) throw Error("topk_search: empty gallery");
    if (query.size() != gallery.embedding_dim())
        throw Error("topk_search: query length " + std::to_string(query.size()) + " != gallery dim " +
                    std::to_string(gallery.embedding_dim()));
    struct Candidate {
        double sq;
        const std::string* id;
    };
    std::vector<Candidate> candidates;
    candidates.reserve(gallery.size());
    for (const GalleryEntry& e : gallery.entries()) {
        if (!exclude_id.empty() && e.image_id == exclude_id) continue;
        double sq = 0.0;
        for (std::size_t i = 0; i < query.size(); ++i) {
            const double d = double(query.values[i]) - e.embedding.values[i];
            sq += d * d;
        }
        candidates.push_back({sq, &e.image_id});
    }
    const std::size_t take = std::min(k, candidates.size());
    auto closer = [](const Candidate& a, const Candidate& b) { return a.sq != b.sq ? a.sq < b.sq : *a.id < *b.id; };
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take), candidates.end(), closer);
    RetrievalResult r{query_id, {}};
    r.ranked.reserve(take);
    for (std::size_t i = 0; i < take; ++i) r.ranked.push_back({*candidates[i].id, std::sqrt(candidates[i].sq)});
    return r;
}

double topk_accuracy(const std::vector<RetrievalResult>& results, const DatasetManifest& manifest, std::size_t k) {
    if (results.empty()) throw Error("topk_accuracy: no queries");
    std::unordered_map<std::string, std::size_t> owner;
    for (std::size_t i = 0; i < manifest.items.size(); ++i) {
        for (const auto& id : manifest.items[i].shop) owner[id] = i;
        for (const auto& id : manifest.items[i].consumer) owner[id] = i;
    }
    std::size_t hits = 0;
    for (const RetrievalResult& r : results) {
        const auto q = owner.find(r.query_id);
        if (q == owner.end()) throw Error("topk_accuracy: unknown query " + r.query_id);
        const ItemRecord& item = manifest.items[q->second];
        const bool matchable = item.split == ItemSplit::test &&
                               std::any_of(item.shop.begin(), item.shop.end(), [&](const auto& id) { return id != r.query_id; });
        if (!matchable) throw Error("topk_accuracy: query " + r.query_id + " has no same-item gallery image");
        const std::size_t depth = std::min(k, r.ranked.size());
        for (std::size_t i = 0; i < depth; ++i) {
            const auto g = owner.find(r.ranked[i].image_id);
            if (g != owner.end() && g->second == q->second) {
                ++hits;
                break;
            }
        }
    }
    return static_cast<double>(hits) / static_cast<double>(results.size());
}

std::vector<double> evaluate_retrieval(const EmbeddingNet& net, const Dataset& dataset, Task task,
                                       const std::vector<std::size_t>& ks, unsigned threads) {
    if (ks.empty()) throw Error("evaluate_retrieval: no k values");
    threads = resolve_threads(threads);
    const Gallery gallery = build_gallery(net, dataset, SampleSplit::gallery, threads);
    const std::size_t k_max = *std::max_element(ks.begin(), ks.end());
    const bool inshop = task == Task::inshop;
    std::vector<std::string> queries = dataset.manifest().samples(inshop ? SampleSplit::gallery : SampleSplit::query);
    if (inshop) {
        std::erase_if(queries, [&](const std::string& id) {
            return dataset.manifest().item(dataset.manifest().item_of(id)).shop.size() < 2;
        });
        if (queries.empty()) throw Error("in-shop evaluation needs items with at least 2 shop images");
    }
    std::vector<RetrievalResult> results(queries.size());
    parallel_for(queries.size(), threads, [&](std::size_t i) {
        EmbeddingVector q;
        if (inshop) {
            for (const auto& e : gallery.entries())
                if (e.image_id == queries[i]) q = e.embedding;
        } else {
            q = embed_image(net, dataset, queries[i]);
        }
        results[i] = topk_search(gallery, q, k_max, queries[i], inshop ? queries[i] : std::string{});
    });
    std::vector<double> acc;
    for (std::size_t k : ks) acc.push_back(topk_accuracy(results, dataset.manifest(), k));
    return acc;
}

}  // namespace vamkit
