#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgp/predictor.hpp"
#include "sgp/scale_math.hpp"
#include "sgp/scenegen.hpp"

namespace sgp {

struct Proposal {
    Rect bbox;  // original-image coordinates
    double score = 0.0;
    double source_scale = 1.0;
};

// Scale-band oracle modeling the scale sensitivity of a CNN proposer: an
// object of size m is detectable at scale s only when the resized size s*m
// lands within tau bin units of the ideal size.
struct OracleConfig {
    double tau = 0.5;                 // band half-width, bin units
    double localization_noise = 0.05; // multiplicative jitter at the band edge
    double false_positive_rate = 0.5; // expected spurious boxes per scale pass
    double miss_rate = 0.1;
    std::uint64_t rng_seed = 0;
};

std::vector<Proposal> oracle_propose(const Scene& scene, const ScaleSet& scales,
                                     const OracleConfig& cfg, const ScaleConfig& scale_cfg,
                                     Rng& rng);

enum class PipelineMode { guided_gt, guided_predictor, exhaustive };

struct PipelineConfig {
    PipelineMode mode = PipelineMode::guided_gt;
    int h = 6;
    double lambda = 0.9;
    double exhaustive_lo = 1.0 / 16.0;
    double exhaustive_hi = 2.0;
    ScaleConfig scale_cfg;
    OracleConfig oracle;
    FeatureConfig features;
    const PredictorParams* params = nullptr;        // guided_predictor only
    std::optional<std::string> external_proposer;   // executable path
    std::string work_dir = ".";                     // scratch for external runs
};

// Chooses the scale set per mode (quantiles of the ground-truth or predicted
// distribution, or the fixed geometric baseline) and runs the proposer.
std::vector<Proposal> run_pipeline(const Scene& scene, const PipelineConfig& cfg, Rng& rng);

std::string proposals_to_json(const std::vector<Proposal>& proposals);
std::vector<Proposal> proposals_from_json(const std::string& text);
std::string scales_to_json(const ScaleSet& scales);

// External proposer contract: argv = (scene.json, scales.json, out.json),
// exit 0 on success. Throws ProtocolViolationError on malformed output and
// Error (with captured stderr) on a non-zero exit.
std::vector<Proposal> external_propose(const std::string& exe, const Scene& scene,
                                       const ScaleSet& scales, const std::string& work_dir);

}  // namespace sgp
