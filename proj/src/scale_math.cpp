#include "sgp/scale_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

namespace sgp {

void ScaleConfig::validate() const {
    if (b_max <= b_min) throw Error("ScaleConfig: b_max must exceed b_min");
    if (sigma < 1) throw Error("ScaleConfig: sigma must be >= 1");
    if (!(ideal_size > 0.0)) throw Error("ScaleConfig: ideal_size must be positive");
}

ObjectSize::ObjectSize(double m, const ScaleConfig& cfg) : m_(m) {
    cfg.validate();
    if (!(m > 0.0)) throw Error("ObjectSize: size must be positive");
    double x = bin_coordinate(cfg.ideal_size / m, cfg);
    if (!(x > cfg.b_min && x < cfg.b_max))
        throw OutOfRangeError("ObjectSize: bin coordinate " + std::to_string(x) +
                              " outside (" + std::to_string(cfg.b_min) + ", " +
                              std::to_string(cfg.b_max) + ")");
}

double object_scale(const ObjectSize& m, const ScaleConfig& cfg) {
    return cfg.ideal_size / m.value();
}

double bin_coordinate(double g, const ScaleConfig& cfg) {
    return -static_cast<double>(cfg.sigma) * std::log2(g);
}

ScaleDistribution::ScaleDistribution(ScaleConfig cfg, std::vector<double> probs)
    : cfg_(cfg), probs_(std::move(probs)) {
    cfg_.validate();
    if (probs_.size() != static_cast<std::size_t>(cfg_.bin_count()))
        throw Error("ScaleDistribution: expected " + std::to_string(cfg_.bin_count()) +
                    " probabilities, got " + std::to_string(probs_.size()));
    double total = 0.0;
    for (double p : probs_) {
        if (!(p >= 0.0)) throw Error("ScaleDistribution: negative probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw Error("ScaleDistribution: probabilities sum to " + std::to_string(total));
}

std::string ScaleDistribution::to_json() const {
    nlohmann::json j;
    j["b_min"] = cfg_.b_min;
    j["b_max"] = cfg_.b_max;
    j["sigma"] = cfg_.sigma;
    j["ideal_size"] = cfg_.ideal_size;
    j["probs"] = probs_;
    return j.dump();
}

ScaleDistribution ScaleDistribution::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    ScaleConfig cfg;
    cfg.b_min = j.at("b_min").get<int>();
    cfg.b_max = j.at("b_max").get<int>();
    cfg.sigma = j.at("sigma").get<int>();
    cfg.ideal_size = j.at("ideal_size").get<double>();
    return ScaleDistribution(cfg, j.at("probs").get<std::vector<double>>());
}

ScaleDistribution ground_truth_distribution(const std::vector<ObjectSize>& sizes,
                                            const ScaleConfig& cfg) {
    cfg.validate();
    if (sizes.empty()) throw EmptyAnnotationSetError();

    // Each object lands at bin coordinate x_j = -sigma*log2(g_j) and spreads
    // triangular weight max(0, 1 - |b - x_j|) onto the (at most two) bins
    // within distance 1.
    const int l = cfg.bin_count();
    std::vector<double> weights(static_cast<std::size_t>(l), 0.0);
    for (const ObjectSize& m : sizes) {
        double x = bin_coordinate(object_scale(m, cfg), cfg);
        int lo = static_cast<int>(std::ceil(x - 1.0));
        int hi = static_cast<int>(std::floor(x + 1.0));
        lo = std::max(lo, cfg.b_min);
        hi = std::min(hi, cfg.b_max);
        for (int b = lo; b <= hi; ++b) {
            double w = 1.0 - std::abs(static_cast<double>(b) - x);
            if (w > 0.0) weights[static_cast<std::size_t>(b - cfg.b_min)] += w;
        }
    }

    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw Error("ground_truth_distribution: zero total weight");
    for (double& w : weights) w /= total;
    return ScaleDistribution(cfg, std::move(weights));
}

double kl_divergence(const ScaleDistribution& q, const ScaleDistribution& p) {
    const auto& qc = q.config();
    const auto& pc = p.config();
    if (qc.b_min != pc.b_min || qc.b_max != pc.b_max || qc.sigma != pc.sigma)
        throw Error("kl_divergence: configurations differ");

    double d = 0.0;
    const auto& qs = q.probs();
    const auto& ps = p.probs();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (ps[i] <= 0.0) continue;
        if (qs[i] <= 0.0)
            throw SupportMismatchError("kl_divergence: p has mass at bin " +
                                       std::to_string(pc.b_min + static_cast<int>(i)) +
                                       " where q is zero");
        d += ps[i] * (std::log(ps[i]) - std::log(qs[i]));
    }
    return std::max(d, 0.0);
}

ScaleDistribution smooth(const ScaleDistribution& q, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error("smooth: lambda must be in [0, 1]");

    std::vector<double> out(q.probs().size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        double qi = q.probs()[i];
        if (qi > 0.0) {
            out[i] = std::pow(qi, lambda);
            total += out[i];
        }
    }
    if (!(total > 0.0)) throw DegenerateDistributionError("smooth: all-zero after exponentiation");
    for (double& v : out) v /= total;
    return ScaleDistribution(q.config(), std::move(out));
}

ScaleSet sample_scales(const ScaleDistribution& q, int h) {
    if (h < 1) throw Error("sample_scales: h must be >= 1");
    const auto& cfg = q.config();
    const auto& probs = q.probs();

    ScaleSet out;
    out.scales.reserve(static_cast<std::size_t>(h));
    double cum = 0.0;
    std::size_t bin = 0;
    for (int i = 1; i <= h; ++i) {
        double target = static_cast<double>(i) / static_cast<double>(h + 1);
        // Advance to the bin whose cumulative mass reaches the target. Zero
        // bins are skipped, which pins flat CDF stretches to their left edge.
        while (bin + 1 < probs.size() && cum + probs[bin] < target) {
            cum += probs[bin];
            ++bin;
        }
        double left = static_cast<double>(cfg.b_min + static_cast<int>(bin)) - 0.5;
        double x = probs[bin] > 0.0
                       ? left + (target - cum) / probs[bin]
                       : left;
        out.scales.push_back(std::exp2(-x / static_cast<double>(cfg.sigma)));
    }
    return out;
}

ScaleSet uniform_scale_set(int h, double s_lo, double s_hi) {
    if (h < 2) throw Error("uniform_scale_set: h must be >= 2");
    if (!(s_lo > 0.0) || s_lo >= s_hi) throw BadRangeError("uniform_scale_set: need 0 < s_lo < s_hi");

    ScaleSet out;
    out.scales.reserve(static_cast<std::size_t>(h));
    double ratio = std::log(s_hi / s_lo) / static_cast<double>(h - 1);
    for (int i = 0; i < h; ++i)
        out.scales.push_back(s_hi * std::exp(-ratio * static_cast<double>(i)));
    return out;
}

}  // namespace sgp
