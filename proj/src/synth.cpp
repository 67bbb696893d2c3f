#include "vamkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vamkit/error.hpp"
#include "vamkit/rng.hpp"

namespace vamkit {

namespace {

constexpr std::array<Color, 8> kPalette{{
    {0.85f, 0.15f, 0.15f},
    {0.15f, 0.65f, 0.20f},
    {0.15f, 0.25f, 0.85f},
    {0.90f, 0.80f, 0.10f},
    {0.80f, 0.20f, 0.75f},
    {0.10f, 0.75f, 0.80f},
    {0.95f, 0.50f, 0.10f},
    {0.25f, 0.20f, 0.30f},
}};
constexpr std::array<double, 3> kStripePeriods{0.25, 0.4, 0.6};
constexpr float kShopBackground = 0.96f;
constexpr std::size_t kMinExtent = 16;

bool inside(ShapeKind shape, double u, double v) {
    const double au = std::abs(u);
    switch (shape) {
        case ShapeKind::tee:
            return (au < 0.45 && v > -0.55 && v < 0.85) || (v > -0.55 && v < -0.15 && au < 0.9);
        case ShapeKind::dress:
            return v > -0.85 && v < 0.85 && au < 0.22 + 0.5 * (v + 0.85) / 1.7;
        case ShapeKind::skirt:
            return v > -0.5 && v < 0.7 && au < 0.35 + 0.4 * (v + 0.5) / 1.2;
        case ShapeKind::trousers:
            return v > -0.85 && v < 0.9 && au < 0.5 && (v < -0.4 || au > 0.06);
        case ShapeKind::top:
            return (u / 0.6) * (u / 0.6) + (v / 0.75) * (v / 0.75) < 1.0;
    }
    return false;
}

Color stripe_color(double u, double v, double period, double angle, const Color& a, const Color& b) {
    const double t = (u * std::cos(angle) + v * std::sin(angle)) / period;
    return (t - std::floor(t)) < 0.5 ? a : b;
}

Color random_color(Stream& rng) {
    return {static_cast<float>(rng.uniform(0.1, 0.95)), static_cast<float>(rng.uniform(0.1, 0.95)),
            static_cast<float>(rng.uniform(0.1, 0.95))};
}

struct Placement {
    double cx = 0.0;
    double cy = 0.0;
    double rotation = 0.0;
    double scale = 0.8;
};

// Pixel centre in [-1, 1] image coordinates.
double to_unit(std::size_t index, std::size_t extent) {
    return (static_cast<double>(index) + 0.5) / static_cast<double>(extent) * 2.0 - 1.0;
}

void set_pixel(Tensor& image, std::size_t i, std::size_t j, const Color& c) {
    for (std::size_t ch = 0; ch < 3; ++ch) image.at(0, ch, i, j) = std::clamp(c[ch], 0.0f, 1.0f);
}

void paint_clutter(Tensor& image, Stream& rng) {
    const Shape s = image.shape();
    const Color base = random_color(rng);
    for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j) set_pixel(image, i, j, base);
    const auto patches = 3 + rng.below(4);
    for (std::uint64_t k = 0; k < patches; ++k) {
        const double x0 = rng.uniform(-1.1, 0.6);
        const double y0 = rng.uniform(-1.1, 0.6);
        const double x1 = x0 + rng.uniform(0.3, 0.9);
        const double y1 = y0 + rng.uniform(0.3, 0.9);
        const Color a = kPalette[rng.below(kPalette.size())];
        const Color b = rng.bernoulli(0.5) ? kPalette[rng.below(kPalette.size())] : random_color(rng);
        const double period = kStripePeriods[rng.below(kStripePeriods.size())];
        const double angle = static_cast<double>(rng.below(4)) * std::numbers::pi / 4.0;
        for (std::size_t i = 0; i < s.h; ++i)
            for (std::size_t j = 0; j < s.w; ++j) {
                const double x = to_unit(j, s.w);
                const double y = to_unit(i, s.h);
                if (x >= x0 && x < x1 && y >= y0 && y < y1) set_pixel(image, i, j, stripe_color(x, y, period, angle, a, b));
            }
    }
    for (float& v : image.data()) v = std::clamp(v + static_cast<float>(rng.uniform(-0.06, 0.06)), 0.0f, 1.0f);
}

void draw_garment(const ItemSpec& item, const Placement& place, float gain, float offset, Tensor& image, Tensor& mask) {
    const Shape s = image.shape();
    const double cr = std::cos(place.rotation);
    const double sr = std::sin(place.rotation);
    for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j) {
            const double dx = to_unit(j, s.w) - place.cx;
            const double dy = to_unit(i, s.h) - place.cy;
            const double u = (cr * dx + sr * dy) / place.scale;
            const double v = (-sr * dx + cr * dy) / place.scale;
            if (!inside(item.shape, u, v)) continue;
            Color c = stripe_color(u, v, item.stripe_period, item.stripe_angle, item.primary, item.secondary);
            for (float& ch : c) ch = ch * gain + offset;
            set_pixel(image, i, j, c);
            mask.at(0, 0, i, j) = 1.0f;
        }
}

void occlude(Tensor& image, Tensor& mask, Stream& rng) {
    const Shape s = mask.shape();
    std::size_t top = s.h, bottom = 0, left = s.w, right = 0;
    for (std::size_t i = 0; i < s.h; ++i)
        for (std::size_t j = 0; j < s.w; ++j)
            if (mask.at(0, 0, i, j) > 0.5f) {
                top = std::min(top, i);
                bottom = std::max(bottom, i + 1);
                left = std::min(left, j);
                right = std::max(right, j + 1);
            }
    if (top >= bottom || left >= right) return;
    const double bw = static_cast<double>(right - left);
    const double bh = static_cast<double>(bottom - top);
    const double area = rng.uniform(0.10, 0.25) * bw * bh;
    const double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
    const auto ow = static_cast<std::size_t>(std::clamp(std::round(std::sqrt(area * aspect)), 1.0, bw));
    const auto oh = static_cast<std::size_t>(std::clamp(std::round(area / static_cast<double>(ow)), 1.0, bh));
    const std::size_t oi = top + rng.below(bottom - top - oh + 1);
    const std::size_t oj = left + rng.below(right - left - ow + 1);
    const Color fill = random_color(rng);
    for (std::size_t i = oi; i < oi + oh; ++i)
        for (std::size_t j = oj; j < oj + ow; ++j) {
            set_pixel(image, i, j, fill);
            mask.at(0, 0, i, j) = 0.0f;
        }
}

}  // namespace

std::string to_string(Domain domain) { return domain == Domain::shop ? "shop" : "consumer"; }
std::string to_string(ItemSplit split) { return split == ItemSplit::train ? "train" : "test"; }

ItemSpec make_item_spec(const std::string& item_id, std::uint64_t seed) {
    Stream rng(seed);
    ItemSpec item;
    item.item_id = item_id;
    item.shape = static_cast<ShapeKind>(rng.below(kShapeKindCount));
    const auto a = rng.below(kPalette.size());
    auto b = rng.below(kPalette.size() - 1);
    if (b >= a) ++b;
    item.primary = kPalette[a];
    item.secondary = kPalette[b];
    item.stripe_period = kStripePeriods[rng.below(kStripePeriods.size())];
    item.stripe_angle = static_cast<double>(rng.below(4)) * std::numbers::pi / 4.0;
    item.scale = rng.uniform(0.75, 0.9);
    return item;
}

RenderedSample render_sample(const ItemSpec& item, Domain domain, std::uint64_t seed, Extents extents,
                             std::size_t view) {
    if (extents.height < kMinExtent || extents.width < kMinExtent)
        throw Error("extents too small: " + std::to_string(extents.height) + "x" + std::to_string(extents.width) +
                    " (minimum 16x16)");
    Stream rng(seed);
    RenderedSample r{Tensor(Shape{1, 3, extents.height, extents.width}, kShopBackground),
                     Tensor(Shape{1, 1, extents.height, extents.width}, 0.0f), domain, item.item_id};
    Placement place;
    place.scale = item.scale;
    if (domain == Domain::shop) {
        if (view > 0) {
            place.cx = rng.uniform(-0.08, 0.08);
            place.cy = rng.uniform(-0.08, 0.08);
            place.rotation = rng.uniform(-0.1, 0.1);
            place.scale = item.scale * rng.uniform(0.95, 1.05);
        }
        draw_garment(item, place, 1.0f, 0.0f, r.image, r.mask);
        return r;
    }
    paint_clutter(r.image, rng);
    place.cx = rng.uniform(-0.15, 0.15);
    place.cy = rng.uniform(-0.15, 0.15);
    place.rotation = rng.uniform(-0.35, 0.35);
    place.scale = item.scale * rng.uniform(0.8, 1.05);
    const auto gain = static_cast<float>(rng.uniform(0.75, 1.1));
    const auto offset = static_cast<float>(rng.uniform(-0.05, 0.05));
    draw_garment(item, place, gain, offset, r.image, r.mask);
    if (rng.bernoulli(kOcclusionProbability)) occlude(r.image, r.mask, rng);
    return r;
}

}  // namespace vamkit
