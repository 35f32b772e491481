#pragma once

#include <string>
#include <vector>

#include "sgp/error.hpp"

namespace sgp {

// Shared discretization frame for all scale computations. Bins are the
// consecutive integers b_min..b_max; an object of size m maps to the bin
// coordinate -sigma*log2(ideal_size/m).
struct ScaleConfig {
    int b_min = -32;
    int b_max = 32;
    int sigma = 1;
    double ideal_size = 640.0 / 7.0;

    int bin_count() const { return b_max - b_min + 1; }
    void validate() const;
};

// max(width, height) of an object's bounding box, in pixels.
class ObjectSize {
public:
    ObjectSize(double m, const ScaleConfig& cfg);
    double value() const { return m_; }

private:
    double m_;
};

double object_scale(const ObjectSize& m, const ScaleConfig& cfg);

// Bin coordinate of a resize factor g: -sigma * log2(g).
double bin_coordinate(double g, const ScaleConfig& cfg);

class ScaleDistribution {
public:
    ScaleDistribution(ScaleConfig cfg, std::vector<double> probs);

    const ScaleConfig& config() const { return cfg_; }
    const std::vector<double>& probs() const { return probs_; }
    double prob_at_bin(int bin) const { return probs_.at(static_cast<std::size_t>(bin - cfg_.b_min)); }

    std::string to_json() const;
    static ScaleDistribution from_json(const std::string& text);

private:
    ScaleConfig cfg_;
    std::vector<double> probs_;
};

// Resize factors, sorted descending.
struct ScaleSet {
    std::vector<double> scales;
};

ScaleDistribution ground_truth_distribution(const std::vector<ObjectSize>& sizes,
                                            const ScaleConfig& cfg);

// KL(p || q) in nats, with 0*log 0 = 0. Throws SupportMismatchError when some
// p_i > 0 has q_i = 0 (the divergence would be +inf).
double kl_divergence(const ScaleDistribution& q, const ScaleDistribution& p);

// q'_i = q_i^lambda / sum_k q_k^lambda, with 0^lambda = 0 for all lambda in
// [0, 1] so zero bins stay zero (lambda = 0 gives uniform over the support).
ScaleDistribution smooth(const ScaleDistribution& q, double lambda);

// Quantile sampling: q is a piecewise-constant density on [b_i-0.5, b_i+0.5);
// the h quantiles at i/(h+1) are inverted exactly and mapped to resize
// factors via s = 2^(-x/sigma). Flat CDF stretches resolve to their left edge.
ScaleSet sample_scales(const ScaleDistribution& q, int h);

// Exhaustive-search baseline: h geometrically spaced scales from s_lo to s_hi
// inclusive, returned descending.
ScaleSet uniform_scale_set(int h, double s_lo, double s_hi);

}  // namespace sgp
