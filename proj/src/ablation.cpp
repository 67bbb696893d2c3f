#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "vamkit/error.hpp"
#include "vamkit/rng.hpp"
#include "vamkit/retrieval.hpp"
#include "vamkit/training.hpp"

namespace vamkit {

std::string AblationReport::to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["rows"] = nlohmann::json::array();
    for (const AblationRow& r : rows)
        j["rows"].push_back({{"mode", vamkit::to_string(r.mode)}, {"seed", r.seed}, {"k", r.k}, {"accuracy", r.accuracy}});
    j["means"] = nlohmann::json::array();
    for (const AblationMean& m : means)
        j["means"].push_back({{"mode", vamkit::to_string(m.mode)}, {"k", m.k}, {"mean", m.mean}, {"stddev", m.stddev}});
    return j.dump(2) + "\n";
}

double AblationReport::mean(GateMode mode, std::size_t k) const {
    for (const AblationMean& m : means)
        if (m.mode == mode && m.k == k) return m.mean;
    throw Error("ablation report has no mean for mode " + vamkit::to_string(mode) + " at k=" + std::to_string(k));
}

std::string AblationReport::text_table() const {
    std::vector<std::size_t> ks;
    for (const AblationRow& r : rows)
        if (std::find(ks.begin(), ks.end(), r.k) == ks.end()) ks.push_back(r.k);
    std::ostringstream out;
    out << "config " << config_hash << "\n";
    out << std::left << std::setw(10) << "mode" << std::setw(22) << "seed";
    for (std::size_t k : ks) out << std::right << std::setw(9) << ("top-" + std::to_string(k));
    out << "\n" << std::fixed << std::setprecision(4);
    for (std::size_t i = 0; i < rows.size(); i += ks.size()) {
        out << std::left << std::setw(10) << vamkit::to_string(rows[i].mode) << std::setw(22) << rows[i].seed;
        for (std::size_t j = 0; j < ks.size(); ++j) out << std::right << std::setw(9) << rows[i + j].accuracy;
        out << "\n";
    }
    for (std::size_t i = 0; i < means.size(); i += ks.size()) {
        out << std::left << std::setw(10) << vamkit::to_string(means[i].mode) << std::setw(22) << "mean";
        for (std::size_t j = 0; j < ks.size(); ++j) out << std::right << std::setw(9) << means[i + j].mean;
        out << "\n" << std::left << std::setw(10) << "" << std::setw(22) << "stddev";
        for (std::size_t j = 0; j < ks.size(); ++j) out << std::right << std::setw(9) << means[i + j].stddev;
        out << "\n";
    }
    return out.str();
}

std::vector<std::uint64_t> ablation_seeds(std::uint64_t seed, std::size_t count) {
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = 0; i < count; ++i) seeds.push_back(derive_seed(seed, "ablation-seed", i));
    return seeds;
}

AblationReport run_ablation(const Dataset& dataset, const RunConfig& base, const std::vector<GateMode>& modes,
                            const std::vector<std::uint64_t>& seeds, const std::vector<std::size_t>& ks,
                            unsigned threads, const std::function<void(const std::string&)>& progress) {
    if (modes.empty() || seeds.empty() || ks.empty()) throw Error("run_ablation: modes, seeds and ks must be non-empty");
    AblationReport report;
    report.config_hash = config_hash(base);
    for (GateMode mode : modes) {
        std::vector<std::vector<double>> per_seed;
        for (std::uint64_t seed : seeds) {
            RunConfig cfg = base;
            cfg.train.gate_mode = mode;
            cfg.train.seed = seed;
            std::vector<double> acc;
            try {
                TrainOptions options;
                options.threads = threads;
                const TrainResult trained = train(dataset, cfg, options);
                acc = evaluate_retrieval(trained.net, dataset, cfg.train.task, ks, threads);
            } catch (const Error& e) {
                throw Error("ablation cell mode=" + vamkit::to_string(mode) + " seed=" + std::to_string(seed) + ": " + e.what());
            }
            for (std::size_t j = 0; j < ks.size(); ++j) report.rows.push_back({mode, seed, ks[j], acc[j]});
            if (progress) {
                std::ostringstream msg;
                msg << "mode=" << vamkit::to_string(mode) << " seed=" << seed;
                for (std::size_t j = 0; j < ks.size(); ++j) msg << " top-" << ks[j] << "=" << acc[j];
                progress(msg.str());
            }
            per_seed.push_back(std::move(acc));
        }
        for (std::size_t j = 0; j < ks.size(); ++j) {
            double sum = 0.0;
            for (const auto& a : per_seed) sum += a[j];
            const double mean = sum / static_cast<double>(per_seed.size());
            double var = 0.0;
            for (const auto& a : per_seed) var += (a[j] - mean) * (a[j] - mean);
            const double stddev = per_seed.size() > 1 ? std::sqrt(var / static_cast<double>(per_seed.size() - 1)) : 0.0;
            report.means.push_back({mode, ks[j], mean, stddev});
        }
    }
    return report;
}

}  // namespace vamkit
