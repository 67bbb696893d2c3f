#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vamkit/gating.hpp"
#include "vamkit/tensor.hpp"

namespace vamkit {

enum class Domain { shop, consumer };
enum class ItemSplit { train, test };
/// Per-sample role: train items supply `train`; test items supply `query`
/// (consumer images) and `gallery` (shop images).
enum class SampleSplit { train, query, gallery };

std::string to_string(Domain domain);
std::string to_string(ItemSplit split);

enum class ShapeKind { tee, dress, skirt, trousers, top };
inline constexpr int kShapeKindCount = 5;

using Color = std::array<float, 3>;

/// Parametric garment: silhouette, two-colour stripe texture and base scale.
struct ItemSpec {
    std::string item_id;
    ShapeKind shape = ShapeKind::tee;
    Color primary{};
    Color secondary{};
    double stripe_period = 0.4;  // in garment-space units; the garment spans [-1, 1]
    double stripe_angle = 0.0;   // radians
    double scale = 0.8;          // garment half-extent as a fraction of the image half-extent
};

/// Draws an item from the documented parameter ranges.
ItemSpec make_item_spec(const std::string& item_id, std::uint64_t seed);

struct Extents {
    std::size_t height = 32;
    std::size_t width = 32;
    friend bool operator==(const Extents&, const Extents&) = default;
};

struct RenderedSample {
    Tensor image;  // (1, 3, H, W) in [0, 1]
    Tensor mask;   // (1, 1, H, W) in [0, 1]; 1 on visible garment pixels
    Domain domain = Domain::shop;
    std::string item_id;
};

inline constexpr double kOcclusionProbability = 0.3;

/// Renders one view. Shop views sit centred on a flat near-white background;
/// consumer views get a cluttered background, affine jitter, lighting change
/// and, with probability kOcclusionProbability, an occluder over 10-25% of the
/// garment's bounding box (masked out). Shop view 0 is the canonical centred
/// pose; later shop views get a small pose jitter.
RenderedSample render_sample(const ItemSpec& item, Domain domain, std::uint64_t seed, Extents extents,
                             std::size_t view = 0);

struct ItemRecord {
    std::string id;
    std::vector<std::string> shop;      // image ids
    std::vector<std::string> consumer;  // image ids
    ItemSplit split = ItemSplit::train;
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    Extents extents;
    std::vector<ItemRecord> items;
    std::map<std::string, std::string> hashes;  // relative path -> sha256 hex

    /// Image ids in the given split, in manifest order.
    std::vector<std::string> samples(SampleSplit split) const;
    std::vector<std::size_t> item_indices(ItemSplit split) const;
    /// Item index owning an image id; throws if unknown.
    std::size_t item_of(const std::string& image_id) const;
    const ItemRecord& item(std::size_t index) const { return items.at(index); }
};

std::string image_path(const std::string& image_id);  // images/<id>.ppm
std::string mask_path(const std::string& image_id);   // masks/<id>.pgm
std::string image_id(const std::string& item_id, Domain domain, std::size_t k);

struct GenerateOptions {
    std::size_t n_items = 64;
    std::size_t consumers_per_item = 4;
    std::size_t shops_per_item = 1;
    Extents extents;
    std::uint64_t seed = 1;
    /// Fraction of items assigned to training; the rest are held out for retrieval.
    double train_ratio = 0.5;
};

/// Writes manifest.json, images/ and masks/ under `out_dir`.
DatasetManifest generate_dataset(const GenerateOptions& options, const std::filesystem::path& out_dir);

/// A dataset on disk. Images are read on demand, decoded, then checked against the manifest hashes.
class Dataset {
public:
    Dataset(DatasetManifest manifest, std::filesystem::path root);

    const DatasetManifest& manifest() const { return manifest_; }
    const std::filesystem::path& root() const { return root_; }

    Tensor image(const std::string& image_id) const;
    Tensor mask(const std::string& image_id) const;

private:
    void verify_hash(const std::string& relative, const std::string& bytes) const;

    DatasetManifest manifest_;
    std::filesystem::path root_;
};

Dataset load_dataset(const std::filesystem::path& dir);

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const std::string& text);

/// Area-averaged downsample of a (1, 1, H, W) mask to (1, 1, h, w), clamped to [0, 1].
AttentionMap oracle_attention(const Tensor& mask, std::size_t height, std::size_t width);

}  // namespace vamkit
