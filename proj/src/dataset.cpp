#include "vamkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "vamkit/error.hpp"
#include "vamkit/image_io.hpp"
#include "vamkit/rng.hpp"

namespace vamkit {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::string> DatasetManifest::samples(SampleSplit split) const {
    std::vector<std::string> out;
    for (const ItemRecord& item : items) {
        if (split == SampleSplit::train) {
            if (item.split != ItemSplit::train) continue;
            out.insert(out.end(), item.shop.begin(), item.shop.end());
            out.insert(out.end(), item.consumer.begin(), item.consumer.end());
        } else if (item.split == ItemSplit::test) {
            const auto& ids = split == SampleSplit::query ? item.consumer : item.shop;
            out.insert(out.end(), ids.begin(), ids.end());
        }
    }
    return out;
}

std::vector<std::size_t> DatasetManifest::item_indices(ItemSplit split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].split == split) out.push_back(i);
    return out;
}

std::size_t DatasetManifest::item_of(const std::string& id) const {
    for (std::size_t i = 0; i < items.size(); ++i) {
        const ItemRecord& item = items[i];
        if (std::find(item.shop.begin(), item.shop.end(), id) != item.shop.end() ||
            std::find(item.consumer.begin(), item.consumer.end(), id) != item.consumer.end())
            return i;
    }
    throw Error("unknown image id '" + id + "'");
}

std::string image_path(const std::string& id) { return "images/" + id + ".ppm"; }
std::string mask_path(const std::string& id) { return "masks/" + id + ".pgm"; }

std::string image_id(const std::string& item_id, Domain domain, std::size_t k) {
    return item_id + "_" + to_string(domain) + "_" + std::to_string(k);
}

std::string manifest_to_json(const DatasetManifest& m) {
    json j;
    j["seed"] = m.seed;
    j["extents"] = {m.extents.height, m.extents.width};
    j["items"] = json::array();
    for (const ItemRecord& item : m.items)
        j["items"].push_back({{"id", item.id}, {"shop", item.shop}, {"consumer", item.consumer}, {"split", to_string(item.split)}});
    j["hashes"] = m.hashes;
    return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
    DatasetManifest m;
    try {
        const json j = json::parse(text);
        m.seed = j.at("seed").get<std::uint64_t>();
        const auto& ext = j.at("extents");
        if (!ext.is_array() || ext.size() != 2) throw Error("manifest: extents must be [height, width]");
        m.extents = {ext[0].get<std::size_t>(), ext[1].get<std::size_t>()};
        for (const auto& it : j.at("items")) {
            ItemRecord rec;
            rec.id = it.at("id").get<std::string>();
            rec.shop = it.at("shop").get<std::vector<std::string>>();
            rec.consumer = it.at("consumer").get<std::vector<std::string>>();
            const auto split = it.at("split").get<std::string>();
            if (split == "train") rec.split = ItemSplit::train;
            else if (split == "test") rec.split = ItemSplit::test;
            else throw Error("manifest: unknown split '" + split + "' for item " + rec.id);
            m.items.push_back(std::move(rec));
        }
        m.hashes = j.at("hashes").get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
        throw IoError(std::string("manifest: ") + e.what());
    }
    for (const ItemRecord& item : m.items)
        if (item.split == ItemSplit::test && item.shop.empty())
            throw IoError("manifest: test item " + item.id + " has no gallery image");
    return m;
}

DatasetManifest generate_dataset(const GenerateOptions& options, const fs::path& out_dir) {
    if (options.n_items < 2) throw Error("generate_dataset: need at least 2 items");
    if (options.consumers_per_item < 1) throw Error("generate_dataset: consumers_per_item must be >= 1");
    if (options.shops_per_item < 1) throw Error("generate_dataset: shops_per_item must be >= 1");
    if (options.extents.height < 16 || options.extents.width < 16)
        throw Error("extents too small: " + std::to_string(options.extents.height) + "x" +
                    std::to_string(options.extents.width) + " (minimum 16x16)");
    if (!(options.train_ratio >= 0.0 && options.train_ratio <= 1.0))
        throw Error("generate_dataset: train_ratio must lie in [0, 1]");

    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    fs::create_directories(out_dir / "masks", ec);
    if (ec || !fs::is_directory(out_dir / "images") || !fs::is_directory(out_dir / "masks"))
        throw IoError("cannot create dataset directories under " + out_dir.string());

    DatasetManifest m;
    m.seed = options.seed;
    m.extents = options.extents;

    std::vector<std::size_t> order(options.n_items);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Stream split_rng(derive_seed(options.seed, "split"));
    split_rng.shuffle(order);
    const auto n_train = static_cast<std::size_t>(std::floor(options.train_ratio * static_cast<double>(options.n_items)));
    std::vector<ItemSplit> split(options.n_items, ItemSplit::test);
    for (std::size_t r = 0; r < n_train; ++r) split[order[r]] = ItemSplit::train;

    char name[32];
    for (std::size_t idx = 0; idx < options.n_items; ++idx) {
        std::snprintf(name, sizeof(name), "item%04zu", idx);
        const std::uint64_t item_seed = derive_seed(options.seed, "item", idx);
        const ItemSpec spec = make_item_spec(name, item_seed);
        ItemRecord rec{name, {}, {}, split[idx]};
        auto emit = [&](Domain domain, std::size_t k) {
            const RenderedSample s = render_sample(spec, domain, derive_seed(item_seed, to_string(domain), k), options.extents, k);
            const std::string id = image_id(rec.id, domain, k);
            const std::string ppm = encode_ppm(s.image);
            const std::string pgm = encode_pgm(s.mask);
            write_file(out_dir / image_path(id), ppm);
            write_file(out_dir / mask_path(id), pgm);
            m.hashes[image_path(id)] = sha256_hex(ppm);
            m.hashes[mask_path(id)] = sha256_hex(pgm);
            (domain == Domain::shop ? rec.shop : rec.consumer).push_back(id);
        };
        for (std::size_t k = 0; k < options.shops_per_item; ++k) emit(Domain::shop, k);
        for (std::size_t k = 0; k < options.consumers_per_item; ++k) emit(Domain::consumer, k);
        m.items.push_back(std::move(rec));
    }
    write_file(out_dir / "manifest.json", manifest_to_json(m));
    return m;
}

Dataset::Dataset(DatasetManifest manifest, fs::path root) : manifest_(std::move(manifest)), root_(std::move(root)) {}

void Dataset::verify_hash(const std::string& relative, const std::string& bytes) const {
    const fs::path path = root_ / relative;
    const auto it = manifest_.hashes.find(relative);
    if (it == manifest_.hashes.end()) throw IoError("no manifest hash for " + path.string());
    if (sha256_hex(bytes) != it->second) throw IoError("hash mismatch for " + path.string());
}

Tensor Dataset::image(const std::string& id) const {
    const std::string rel = image_path(id);
    const std::string bytes = read_file(root_ / rel);
    Tensor t = decode_ppm(bytes, (root_ / rel).string());
    verify_hash(rel, bytes);
    if (t.shape().h != manifest_.extents.height || t.shape().w != manifest_.extents.width)
        throw IoError((root_ / rel).string() + ": extents differ from manifest");
    return t;
}

Tensor Dataset::mask(const std::string& id) const {
    const std::string rel = mask_path(id);
    const std::string bytes = read_file(root_ / rel);
    Tensor t = decode_pgm(bytes, (root_ / rel).string());
    verify_hash(rel, bytes);
    if (t.shape().h != manifest_.extents.height || t.shape().w != manifest_.extents.width)
        throw IoError((root_ / rel).string() + ": extents differ from manifest");
    return t;
}

Dataset load_dataset(const fs::path& dir) {
    const fs::path manifest_file = dir / "manifest.json";
    if (!fs::exists(manifest_file)) throw IoError("dataset manifest not found: " + manifest_file.string());
    DatasetManifest m = manifest_from_json(read_file(manifest_file));
    for (const ItemRecord& item : m.items)
        for (const auto* ids : {&item.shop, &item.consumer})
            for (const std::string& id : *ids)
                for (const std::string& rel : {image_path(id), mask_path(id)})
                    if (!fs::exists(dir / rel)) throw IoError("missing dataset file: " + (dir / rel).string());
    return Dataset(std::move(m), dir);
}

namespace {

// weights[t][s]: overlap of source cell s with target cell t, in source-pixel units.
std::vector<std::vector<double>> overlap_weights(std::size_t source, std::size_t target) {
    std::vector<std::vector<double>> w(target, std::vector<double>(source, 0.0));
    const double ratio = static_cast<double>(source) / static_cast<double>(target);
    for (std::size_t t = 0; t < target; ++t) {
        const double lo = static_cast<double>(t) * ratio;
        const double hi = static_cast<double>(t + 1) * ratio;
        for (std::size_t s = static_cast<std::size_t>(std::floor(lo)); s < source && static_cast<double>(s) < hi; ++s)
            w[t][s] = std::max(0.0, std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s)));
    }
    return w;
}

}  // namespace

AttentionMap oracle_attention(const Tensor& mask, std::size_t height, std::size_t width) {
    check_nonempty(mask, "oracle_attention");
    const Shape s = mask.shape();
    if (s.n != 1 || s.c != 1) throw Error("oracle_attention: mask must be (1,1,H,W), got " + s.str());
    if (height == 0 || width == 0 || height > s.h || width > s.w)
        throw Error("oracle_attention: target " + std::to_string(height) + "x" + std::to_string(width) +
                    " larger than source " + std::to_string(s.h) + "x" + std::to_string(s.w));
    const auto rows = overlap_weights(s.h, height);
    const auto cols = overlap_weights(s.w, width);
    const double cell = (static_cast<double>(s.h) / height) * (static_cast<double>(s.w) / width);
    Tensor out(Shape{1, 1, height, width});
    for (std::size_t a = 0; a < height; ++a)
        for (std::size_t b = 0; b < width; ++b) {
            double acc = 0.0;
            for (std::size_t i = 0; i < s.h; ++i) {
                if (rows[a][i] == 0.0) continue;
                for (std::size_t j = 0; j < s.w; ++j) {
                    if (cols[b][j] == 0.0) continue;
                    acc += rows[a][i] * cols[b][j] * mask.at(0, 0, i, j);
                }
            }
            out.at(0, 0, a, b) = static_cast<float>(std::clamp(acc / cell, 0.0, 1.0));
        }
    return AttentionMap(std::move(out));
}

}  // namespace vamkit
