#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"
#include "vamkit/dataset.hpp"
#include "vamkit/error.hpp"
#include "vamkit/image_io.hpp"
#include "vamkit/rng.hpp"

using namespace vamkit;
using vamkit::testing::TempDir;

namespace {

GenerateOptions small(std::size_t items, std::size_t consumers, std::uint64_t seed) {
    GenerateOptions g;
    g.n_items = items;
    g.consumers_per_item = consumers;
    g.seed = seed;
    return g;
}

double mean(const Tensor& t) { return total(t) / static_cast<double>(t.size()); }

// Variance of background pixels (mask zero), pooled over the colour channels.
std::pair<double, std::size_t> background_variance(const Tensor& image, const Tensor& mask) {
    double s = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.shape().h; ++i)
        for (std::size_t j = 0; j < mask.shape().w; ++j) {
            if (mask.at(0, 0, i, j) != 0.0f) continue;
            for (std::size_t c = 0; c < 3; ++c) {
                const double v = image.at(0, c, i, j);
                s += v;
                sq += v * v;
                ++n;
            }
        }
    if (n == 0) return {0.0, 0};
    const double m = s / n;
    return {sq / n - m * m, n};
}

}  // namespace

TEST(GenerateDataset, TwoItemExample) {
    TempDir dir("synth");
    GenerateOptions g = small(2, 1, 7);
    g.train_ratio = 0.0;
    const DatasetManifest m = generate_dataset(g, dir.path());
    std::size_t images = 0, masks = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir / "images")) images += e.path().extension() == ".ppm";
    for (const auto& e : std::filesystem::directory_iterator(dir / "masks")) masks += e.path().extension() == ".pgm";
    EXPECT_EQ(images, 4u);
    EXPECT_EQ(masks, 4u);
    EXPECT_EQ(m.samples(SampleSplit::gallery).size(), 2u);
    EXPECT_EQ(m.samples(SampleSplit::query).size(), 2u);
    EXPECT_EQ(m.hashes.size(), 8u);
}

TEST(GenerateDataset, CountsAndDisjointSplits) {
    TempDir dir("synth");
    GenerateOptions g = small(10, 3, 2);
    g.shops_per_item = 2;
    const DatasetManifest m = generate_dataset(g, dir.path());
    EXPECT_EQ(m.items.size(), 10u);
    EXPECT_EQ(m.item_indices(ItemSplit::train).size(), 5u);
    const auto train = m.samples(SampleSplit::train);
    const auto query = m.samples(SampleSplit::query);
    const auto gallery = m.samples(SampleSplit::gallery);
    EXPECT_EQ(train.size() + query.size() + gallery.size(), 50u);
    std::set<std::string> all(train.begin(), train.end());
    all.insert(query.begin(), query.end());
    all.insert(gallery.begin(), gallery.end());
    EXPECT_EQ(all.size(), 50u);
    for (const auto& q : query) EXPECT_FALSE(m.items[m.item_of(q)].shop.empty());
}

TEST(GenerateDataset, Errors) {
    TempDir dir("synth");
    GenerateOptions g = small(2, 1, 1);
    g.extents = {12, 32};
    try {
        generate_dataset(g, dir.path());
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("extents too small"), std::string::npos);
    }
    EXPECT_THROW(generate_dataset(small(1, 1, 1), dir.path()), Error);
    EXPECT_THROW(generate_dataset(small(2, 0, 1), dir.path()), Error);
}

TEST(GenerateDataset, ByteIdenticalRegeneration) {
    TempDir a("synth"), b("synth"), c("synth");
    const DatasetManifest ma = generate_dataset(small(6, 2, 42), a.path());
    const DatasetManifest mb = generate_dataset(small(6, 2, 42), b.path());
    const DatasetManifest mc = generate_dataset(small(6, 2, 43), c.path());
    EXPECT_EQ(read_file(a / "manifest.json"), read_file(b / "manifest.json"));
    for (const auto& [rel, hash] : ma.hashes) {
        EXPECT_EQ(read_file(a / rel), read_file(b / rel)) << rel;
        EXPECT_EQ(sha256_hex(read_file(a / rel)), hash);
    }
    EXPECT_NE(ma.hashes, mc.hashes);
}

TEST(GenerateDataset, RoundTripIsBitExact) {
    TempDir dir("synth");
    const GenerateOptions g = small(3, 2, 5);
    generate_dataset(g, dir.path());
    const Dataset d = load_dataset(dir.path());
    EXPECT_EQ(d.manifest().extents, g.extents);
    EXPECT_EQ(manifest_from_json(manifest_to_json(d.manifest())).hashes, d.manifest().hashes);
    const ItemSpec spec = make_item_spec("item0001", derive_seed(5, "item", 1));
    const RenderedSample s = render_sample(spec, Domain::consumer, derive_seed(derive_seed(5, "item", 1), "consumer", 1),
                                           g.extents, 1);
    EXPECT_EQ(d.image("item0001_consumer_1"), decode_ppm(encode_ppm(s.image), "mem"));
    EXPECT_EQ(d.mask("item0001_consumer_1"), decode_pgm(encode_pgm(s.mask), "mem"));
    const Tensor img = d.image("item0000_shop_0");
    EXPECT_EQ(img.shape(), (Shape{1, 3, 32, 32}));
    for (float v : img.data()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
        EXPECT_EQ(std::round(v * 255.0f) / 255.0f, v);
    }
}

TEST(LoadDataset, DeletedMaskNamed) {
    TempDir dir("synth");
    generate_dataset(small(2, 1, 7), dir.path());
    std::filesystem::remove(dir / "masks/item0001_consumer_0.pgm");
    try {
        load_dataset(dir.path());
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("masks/item0001_consumer_0.pgm"), std::string::npos) << e.what();
    }
}

TEST(LoadDataset, TruncatedImageIsShortRead) {
    TempDir dir("synth");
    generate_dataset(small(2, 1, 7), dir.path());
    const auto file = dir / "images/item0000_shop_0.ppm";
    std::string bytes = read_file(file);
    write_file(file, bytes.substr(0, bytes.size() / 2));
    const Dataset d = load_dataset(dir.path());
    try {
        d.image("item0000_shop_0");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("short read"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("item0000_shop_0.ppm"), std::string::npos);
    }
}

TEST(LoadDataset, TamperedImageIsHashMismatch) {
    TempDir dir("synth");
    generate_dataset(small(2, 1, 7), dir.path());
    const auto file = dir / "images/item0000_shop_0.ppm";
    std::string bytes = read_file(file);
    bytes.back() = static_cast<char>(bytes.back() ^ 1);
    write_file(file, bytes);
    try {
        load_dataset(dir.path()).image("item0000_shop_0");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("hash mismatch"), std::string::npos);
    }
}

TEST(LoadDataset, MissingManifest) {
    TempDir dir("synth");
    EXPECT_THROW(load_dataset(dir.path()), Error);
}

TEST(Render, ShopMaskCoverageOver100Items) {
    double sum = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
        const ItemSpec spec = make_item_spec("it", derive_seed(99, "item", i));
        const RenderedSample s = render_sample(spec, Domain::shop, derive_seed(99, "shop", i), {32, 32});
        const double coverage = mean(s.mask);
        EXPECT_GE(coverage, 0.15) << i;
        EXPECT_LE(coverage, 0.6) << i;
        sum += coverage;
    }
    EXPECT_GE(sum / 100.0, 0.15);
    EXPECT_LE(sum / 100.0, 0.6);
}

TEST(Render, DomainGapInBackgroundVariance) {
    double shop = 0.0, consumer = 0.0;
    for (std::size_t i = 0; i < 100; ++i) {
        const ItemSpec spec = make_item_spec("it", derive_seed(3, "item", i));
        const RenderedSample s = render_sample(spec, Domain::shop, derive_seed(3, "shop", i), {32, 32});
        const RenderedSample c = render_sample(spec, Domain::consumer, derive_seed(3, "consumer", i), {32, 32});
        shop += background_variance(s.image, s.mask).first;
        consumer += background_variance(c.image, c.mask).first;
    }
    EXPECT_GT(consumer / 100.0, shop / 100.0);
}

TEST(Render, MaskValidity) {
    for (std::size_t i = 0; i < 100; ++i) {
        const ItemSpec spec = make_item_spec("it", derive_seed(4, "item", i));
        for (Domain d : {Domain::shop, Domain::consumer}) {
            const RenderedSample s = render_sample(spec, d, derive_seed(4, to_string(d), i), {32, 32});
            for (float v : s.mask.data()) EXPECT_TRUE(v == 0.0f || v == 1.0f);
            for (float v : s.image.data()) EXPECT_TRUE(v >= 0.0f && v <= 1.0f);
            if (d == Domain::shop) {
                // Shop backgrounds are flat near-white wherever the mask is zero.
                for (std::size_t r = 0; r < 32; ++r)
                    for (std::size_t q = 0; q < 32; ++q)
                        if (s.mask.at(0, 0, r, q) == 0.0f) EXPECT_NEAR(s.image.at(0, 0, r, q), 0.96f, 1e-6);
            }
        }
    }
}

TEST(Render, Deterministic) {
    const ItemSpec spec = make_item_spec("x", 11);
    const RenderedSample a = render_sample(spec, Domain::consumer, 5, {32, 32});
    const RenderedSample b = render_sample(spec, Domain::consumer, 5, {32, 32});
    EXPECT_EQ(a.image, b.image);
    EXPECT_EQ(a.mask, b.mask);
}

TEST(OracleAttention, Examples) {
    const AttentionMap ones = oracle_attention(Tensor({1, 1, 32, 32}, 1.0f), 8, 8);
    for (float v : ones.values().data()) EXPECT_EQ(v, 1.0f);

    Tensor checker({1, 1, 8, 8});
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j) checker.at(0, 0, i, j) = ((i + j) % 2 == 0) ? 1.0f : 0.0f;
    const AttentionMap half = oracle_attention(checker, 4, 4);
    for (float v : half.values().data()) EXPECT_EQ(v, 0.5f);

    EXPECT_THROW(oracle_attention(Tensor({1, 1, 4, 4}, 1.0f), 8, 8), Error);
}

TEST(OracleAttention, MassPreservation) {
    Stream rng(8);
    for (const auto& [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {5, 7}, {3, 3}, {32, 32}}) {
        Tensor mask({1, 1, 32, 32});
        for (float& v : mask.data()) v = rng.bernoulli(0.4) ? 1.0f : 0.0f;
        const AttentionMap m = oracle_attention(mask, h, w);
        const double ratio = (32.0 / h) * (32.0 / w);
        EXPECT_NEAR(total(m.values()) * ratio, total(mask), 1e-4 * total(mask));
    }
}
