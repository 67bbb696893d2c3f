#include "vamkit/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "vamkit/error.hpp"
#include "vamkit/gating.hpp"
#include "vamkit/rng.hpp"

namespace vamkit {

bool GradcheckReport::all_pass() const {
    return std::all_of(entries.begin(), entries.end(), [](const GradcheckEntry& e) { return e.pass; });
}

std::string GradcheckReport::text() const {
    std::ostringstream out;
    out << std::scientific << std::setprecision(3);
    for (const GradcheckEntry& e : entries) {
        out << (e.pass ? "PASS " : "FAIL ") << std::left << std::setw(34) << e.name << std::right
            << " n=" << std::setw(4) << e.checked << " skipped=" << e.skipped << "  max_rel=" << e.max_rel_error << "  max_abs=" << e.max_abs_error
            << "  tol=rel " << e.rel_tolerance << " / abs " << e.abs_tolerance << "\n";
    }
    return out.str();
}

void record(GradcheckEntry& entry, double analytic, double numeric) {
    const double abs_err = std::abs(analytic - numeric);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
    ++entry.checked;
    entry.max_abs_error = std::max(entry.max_abs_error, abs_err);
    entry.max_rel_error = std::max(entry.max_rel_error, rel_err);
    if (rel_err > entry.rel_tolerance && abs_err > entry.abs_tolerance) entry.pass = false;
}

namespace {

// Checks run in double precision; the float32 code path is the same template.
using Layer64 = BasicLayer<double>;
using Map64 = BasicAttentionMap<double>;

TensorD random_tensor(Shape s, Stream& rng, double lo = -1.0, double hi = 1.0) {
    TensorD t(s);
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

double dot(const TensorD& a, const TensorD& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
    return s;
}

// Central difference of `objective` w.r.t. every element of `target`, compared with `analytic`.
double central_difference(double& value, const std::function<double()>& objective) {
    const double saved = value;
    value = saved + kFiniteDifferenceStep;
    const double up = objective();
    value = saved - kFiniteDifferenceStep;
    const double down = objective();
    value = saved;
    return (up - down) / (2.0 * kFiniteDifferenceStep);
}

// Central difference of `objective` w.r.t. every element of `target`, compared with `analytic`.
void check_all(GradcheckEntry& entry, TensorD& target, const TensorD& analytic, const std::function<double()>& objective) {
    for (std::size_t i = 0; i < target.size(); ++i) record(entry, analytic[i], central_difference(target[i], objective));
}

// Relu signs and maxpool choices along every stack of a forward trace.
std::vector<std::uint32_t> activation_pattern(const BasicForwardTrace<double>& trace) {
    std::vector<std::uint32_t> pattern;
    for (const auto* stack : {&trace.lower, &trace.head, &trace.upper_global, &trace.upper_attention})
        for (const auto& cache : *stack) {
            if (cache.kind == LayerKind::relu)
                for (double v : cache.input.data()) pattern.push_back(v > 0.0 ? 1u : 0u);
            else if (cache.kind == LayerKind::maxpool2)
                pattern.insert(pattern.end(), cache.argmax.begin(), cache.argmax.end());
        }
    return pattern;
}

GradcheckEntry layer_entry(const std::string& name) {
    GradcheckEntry e;
    e.name = name;
    e.rel_tolerance = kLayerRelTolerance;
    e.abs_tolerance = kLayerAbsTolerance;
    return e;
}

// Keeps inputs away from the relu kink so the central difference never straddles it.
void avoid_zero(TensorD& x) {
    for (double& v : x.data())
        if (std::abs(v) < 0.05) v = v < 0.0 ? -0.05 - std::abs(v) : 0.05 + v;
}

// Distinct values at least 2/count apart, so no 2x2 block has a near-tie.
void spread_values(TensorD& x, Stream& rng) {
    std::vector<std::size_t> order(x.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const double spacing = 2.0 / static_cast<double>(x.size());
    for (std::size_t r = 0; r < order.size(); ++r) x[order[r]] = -1.0 + spacing * (double(r) + 0.5);
}

void check_layer(GradcheckReport& report, const std::string& name, const LayerSpec& spec, TensorD x, Stream& rng) {
    Layer64 layer = layer_cast<double>(make_layer(spec, x.shape(), rng));
    if (layer.bias)
        for (double& b : layer.bias->data()) b = rng.uniform(-0.5, 0.5);
    const auto out = layer_forward(layer, x, Mode::eval);
    const TensorD r = random_tensor(out.y.shape(), rng);
    const auto g = layer_backward(layer, out.cache, r);
    auto objective = [&] { return dot(layer_forward(layer, x, Mode::eval).y, r); };

    GradcheckEntry ex = layer_entry(name + " dx");
    check_all(ex, x, g.dx, objective);
    report.entries.push_back(ex);
    if (layer.weights) {
        GradcheckEntry ew = layer_entry(name + " dweights");
        check_all(ew, *layer.weights, *g.dweights, objective);
        report.entries.push_back(ew);
        GradcheckEntry eb = layer_entry(name + " dbias");
        check_all(eb, *layer.bias, *g.dbias, objective);
        report.entries.push_back(eb);
    }
}

}  // namespace

GradcheckReport gradcheck_layers(std::uint64_t seed) {
    GradcheckReport report;
    Stream rng(derive_seed(seed, "gradcheck-layers"));

    check_layer(report, "conv2d k3 p1", {LayerKind::conv2d, 4, 3, 1, 1}, random_tensor({2, 3, 6, 6}, rng), rng);
    check_layer(report, "conv2d k3 s2", {LayerKind::conv2d, 3, 3, 2, 0}, random_tensor({1, 2, 7, 7}, rng), rng);
    check_layer(report, "dense", {LayerKind::dense, 5, 1, 1, 0}, random_tensor({2, 3, 2, 2}, rng), rng);
    TensorD xr = random_tensor({2, 3, 4, 4}, rng);
    avoid_zero(xr);
    check_layer(report, "relu", {LayerKind::relu}, xr, rng);
    TensorD xp = random_tensor({2, 2, 6, 6}, rng);
    spread_values(xp, rng);
    check_layer(report, "maxpool2", {LayerKind::maxpool2}, xp, rng);
    check_layer(report, "l2norm", {LayerKind::l2norm}, random_tensor({3, 2, 3, 3}, rng), rng);
    check_layer(report, "sigmoid", {LayerKind::sigmoid}, random_tensor({2, 3, 4, 4}, rng), rng);

    // Product gate: exact gradients of y = p * x, both w.r.t. x and the attention map.
    {
        TensorD x = random_tensor({2, 4, 3, 3}, rng);
        TensorD p = random_tensor({2, 1, 3, 3}, rng, 0.05, 0.95);
        const TensorD r = random_tensor(x.shape(), rng);
        const auto g = product_backward(x, Map64(p), r);
        auto objective = [&] { return dot(gate_forward_eval(x, Map64(p)), r); };
        GradcheckEntry ex = layer_entry("product gate dx");
        check_all(ex, x, g.dx, objective);
        report.entries.push_back(ex);
        GradcheckEntry ep = layer_entry("product gate dp");
        check_all(ep, p, g.dp, objective);
        report.entries.push_back(ep);
    }
    // Impdrop with a frozen mask is linear in x.
    {
        TensorD x = random_tensor({2, 4, 3, 3}, rng);
        const Map64 p(random_tensor({2, 1, 3, 3}, rng, 0.0, 1.0));
        const auto mask = impdrop_sample_mask(p, 4, rng.next_u64());
        const TensorD r = random_tensor(x.shape(), rng);
        const TensorD dx = impdrop_backward_x(mask, r);
        GradcheckEntry ex = layer_entry("impdrop gate dx (fixed mask)");
        check_all(ex, x, dx, [&] { return dot(impdrop_forward_train(x, mask), r); });
        report.entries.push_back(ex);
    }
    return report;
}

GradcheckReport gradcheck_network(const NetworkConfig& base, std::size_t n_params, std::uint64_t seed) {
    NetworkConfig config = base;
    config.gate_mode = GateMode::product;
    config.attention_source = AttentionSource::learned_head;
    auto net = network_cast<double>(build_network(config, derive_seed(seed, "gradcheck-net")));
    Stream rng(derive_seed(seed, "gradcheck-network"));
    // Non-zero biases so every parameter kind is exercised away from its initial value.
    for (std::size_t s = 0; s < net.slots().size(); ++s)
        if (net.slots()[s].role == "bias")
            for (double& b : net.param(s).data()) b = rng.uniform(-0.1, 0.1);

    const TensorD image = random_tensor(config.input_shape(), rng, 0.0, 1.0);
    const auto base_out = embed(net, image, Mode::eval, {});
    std::vector<double> r(base_out.embedding.size());
    for (double& v : r) v = rng.uniform(-1.0, 1.0);
    const auto grads = network_backward(net, base_out.trace, r);
    const auto base_pattern = activation_pattern(base_out.trace);
    bool kink_crossed = false;
    auto objective = [&] {
        const auto out = embed(net, image, Mode::eval, {});
        if (activation_pattern(out.trace) != base_pattern) kink_crossed = true;
        const auto& e = out.embedding.values;
        double s = 0.0;
        for (std::size_t i = 0; i < e.size(); ++i) s += e[i] * r[i];
        return s;
    };

    auto sample = [&](const std::string& name, bool head_only) {
        GradcheckEntry entry;
        entry.name = name;
        entry.rel_tolerance = kNetworkRelTolerance;
        entry.abs_tolerance = kNetworkAbsTolerance;
        std::vector<std::pair<std::size_t, std::size_t>> pool;  // (slot, element)
        for (std::size_t s = 0; s < net.slots().size(); ++s) {
            if (head_only && net.slots()[s].section != "head") continue;
            for (std::size_t i = 0; i < net.param(s).size(); ++i) pool.emplace_back(s, i);
        }
        if (pool.empty()) throw Error("gradcheck_network: no parameters to sample");
        const std::size_t max_draws = 20 * n_params + 100;
        for (std::size_t draws = 0; entry.checked < n_params; ++draws) {
            if (draws == max_draws) throw Error("gradcheck_network: too many samples cross activation kinks");
            const auto [s, i] = pool[rng.below(pool.size())];
            kink_crossed = false;
            const double numeric = central_difference(net.param(s)[i], objective);
            if (kink_crossed) {
                ++entry.skipped;
                continue;
            }
            record(entry, grads.tensors[s][i], numeric);
        }
        return entry;
    };
    GradcheckReport report;
    report.entries.push_back(sample("network (eval, product gate)", false));
    report.entries.push_back(sample("network attention head", true));
    return report;
}

}  // namespace vamkit
