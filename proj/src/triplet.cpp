#include "vamkit/triplet.hpp"

#include "vamkit/error.hpp"
#include "vamkit/rng.hpp"

namespace vamkit {

namespace {

void check_lengths(std::span<const float> a, std::span<const float> p, std::span<const float> n) {
    if (a.size() != p.size() || a.size() != n.size())
        throw Error("triplet: embedding length mismatch (" + std::to_string(a.size()) + ", " + std::to_string(p.size()) +
                    ", " + std::to_string(n.size()) + ")");
}

double hinge_argument(std::span<const float> a, std::span<const float> p, std::span<const float> n, double margin) {
    if (!(margin > 0.0)) throw Error("triplet: margin must be positive");
    double ap = 0.0;
    double an = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double dp = double(a[i]) - p[i];
        const double dn = double(a[i]) - n[i];
        ap += dp * dp;
        an += dn * dn;
    }
    return ap - an + margin;
}

struct ShopEntry {
    std::string id;
    std::size_t item;
};

std::vector<ShopEntry> shop_pool(const DatasetManifest& manifest, std::span<const std::size_t> items) {
    if (items.size() < 2) throw Error("no negatives available: triplet sampling needs at least 2 items");
    std::vector<ShopEntry> pool;
    for (std::size_t idx : items) {
        const ItemRecord& rec = manifest.item(idx);
        if (rec.shop.empty()) throw Error("item " + rec.id + " has no shop images");
        for (const auto& id : rec.shop) pool.push_back({id, idx});
    }
    return pool;
}

const std::string& draw_negative(const std::vector<ShopEntry>& pool, std::size_t anchor_item, Stream& rng) {
    for (;;) {
        const ShopEntry& e = pool[rng.below(pool.size())];
        if (e.item != anchor_item) return e.id;
    }
}

}  // namespace

double triplet_loss(std::span<const float> a, std::span<const float> p, std::span<const float> n, double margin) {
    check_lengths(a, p, n);
    return std::max(0.0, hinge_argument(a, p, n, margin));
}

TripletGrads triplet_loss_grad(std::span<const float> a, std::span<const float> p, std::span<const float> n,
                               double margin) {
    check_lengths(a, p, n);
    TripletGrads g{std::vector<float>(a.size(), 0.0f), std::vector<float>(a.size(), 0.0f),
                   std::vector<float>(a.size(), 0.0f)};
    if (hinge_argument(a, p, n, margin) <= 0.0) return g;
    for (std::size_t i = 0; i < a.size(); ++i) {
        g.da[i] = 2.0f * (n[i] - p[i]);
        g.dp[i] = 2.0f * (p[i] - a[i]);
        g.dn[i] = 2.0f * (a[i] - n[i]);
    }
    return g;
}

std::vector<Triplet> sample_triplets_cross_domain(const DatasetManifest& manifest, std::span<const std::size_t> items,
                                                  int negatives_per_pair, std::uint64_t seed) {
    if (negatives_per_pair < 1) throw Error("negatives_per_pair must be >= 1");
    const auto pool = shop_pool(manifest, items);
    Stream rng(derive_seed(seed, "triplets-c2s"));
    std::vector<Triplet> out;
    for (std::size_t idx : items) {
        const ItemRecord& rec = manifest.item(idx);
        for (const auto& anchor : rec.consumer)
            for (const auto& positive : rec.shop)
                for (int k = 0; k < negatives_per_pair; ++k)
                    out.push_back({anchor, positive, draw_negative(pool, idx, rng)});
    }
    if (out.empty()) throw Error("no consumer-shop positive pairs among the selected items");
    return out;
}

std::vector<Triplet> sample_triplets_inshop(const DatasetManifest& manifest, std::span<const std::size_t> items,
                                            int pairs_per_class, std::uint64_t seed) {
    if (pairs_per_class < 1) throw Error("pairs_per_class must be >= 1");
    const auto pool = shop_pool(manifest, items);
    for (std::size_t idx : items)
        if (manifest.item(idx).shop.size() < 2)
            throw Error("item " + manifest.item(idx).id + " has a single shop image; in-shop pairs need 2");
    Stream rng(derive_seed(seed, "triplets-inshop"));
    std::vector<Triplet> out;
    for (std::size_t idx : items) {
        const auto& shop = manifest.item(idx).shop;
        for (int k = 0; k < pairs_per_class; ++k) {
            const std::size_t a = rng.below(shop.size());
            std::size_t p = rng.below(shop.size() - 1);
            if (p >= a) ++p;
            out.push_back({shop[a], shop[p], draw_negative(pool, idx, rng)});
        }
    }
    return out;
}

}  // namespace vamkit
