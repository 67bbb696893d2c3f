#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vamkit/config.hpp"
#include "vamkit/dataset.hpp"
#include "vamkit/network.hpp"

namespace vamkit {

struct GalleryEntry {
    std::string image_id;
    std::string item_id;
    EmbeddingVector embedding;
};

class Gallery {
public:
    explicit Gallery(std::size_t embedding_dim) : dim_(embedding_dim) {}

    /// Throws on a length mismatch or a duplicate image id.
    void add(GalleryEntry entry);

    std::size_t embedding_dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<GalleryEntry>& entries() const { return entries_; }

private:
    std::size_t dim_;
    std::vector<GalleryEntry> entries_;
};

struct RankedImage {
    std::string image_id;
    double distance = 0.0;  // Euclidean
};

struct RetrievalResult {
    std::string query_id;
    std::vector<RankedImage> ranked;  // ascending distance, ties by image id
};

/// Embeds every image of `split` in eval mode.
Gallery build_gallery(const EmbeddingNet& net, const Dataset& dataset, SampleSplit split = SampleSplit::gallery,
                      unsigned threads = 0);

/// Exact k nearest gallery entries by Euclidean distance; ties go to the
/// lexicographically smaller image id. `exclude_id` (if non-empty) is skipped.
RetrievalResult topk_search(const Gallery& gallery, const EmbeddingVector& query, std::size_t k,
                            const std::string& query_id = {}, const std::string& exclude_id = {});

/// Fraction of queries whose top-k contains an image of the query's item.
/// Throws if a query's item has no other image it could be matched with.
double topk_accuracy(const std::vector<RetrievalResult>& results, const DatasetManifest& manifest, std::size_t k);

/// Runs the retrieval protocol of `task` on the held-out items and returns
/// one accuracy per k (in the order of `ks`).
///   c2s:    consumer queries against the shop gallery.
///   inshop: shop queries against the shop gallery, the query itself excluded.
std::vector<double> evaluate_retrieval(const EmbeddingNet& net, const Dataset& dataset, Task task,
                                       const std::vector<std::size_t>& ks, unsigned threads = 0);

struct AblationRow {
    GateMode mode = GateMode::none;
    std::uint64_t seed = 0;
    std::size_t k = 0;
    double accuracy = 0.0;
};

struct AblationMean {
    GateMode mode = GateMode::none;
    std::size_t k = 0;
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation; 0 for a single seed
};

struct AblationReport {
    std::string config_hash;
    std::vector<AblationRow> rows;
    std::vector<AblationMean> means;

    std::string to_json() const;
    std::string text_table() const;
    /// Mean accuracy of (mode, k); throws if absent.
    double mean(GateMode mode, std::size_t k) const;
};

/// The `count` run seeds an ablation derives from one master seed.
std::vector<std::uint64_t> ablation_seeds(std::uint64_t seed, std::size_t count);

/// Trains and evaluates every (mode, seed) cell of the grid.
AblationReport run_ablation(const Dataset& dataset, const RunConfig& base, const std::vector<GateMode>& modes,
                            const std::vector<std::uint64_t>& seeds, const std::vector<std::size_t>& ks,
                            unsigned threads = 0,
                            const std::function<void(const std::string&)>& progress = {});

}  // namespace vamkit
