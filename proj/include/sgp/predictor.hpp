#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sgp/scale_math.hpp"
#include "sgp/scenegen.hpp"

namespace sgp {

struct FeatureConfig {
    int grid_w = 6;
    int grid_h = 6;
    int feat_dim = 16;
    int raster = 96;  // letterbox canvas resolution, pixels per side
};

struct PatchGrid {
    int grid_w = 0;
    int grid_h = 0;
    int feat_dim = 0;
    bool empty_scene = false;
    std::vector<double> features;  // cell-major, row-major cells

    int cells() const { return grid_w * grid_h; }
    const double* cell(int c) const { return features.data() + static_cast<std::size_t>(c) * feat_dim; }
};

// Letterboxes the viewport into a square canvas, rasterizes annotation box
// boundaries, and reads off per-cell multi-octave edge statistics: cell
// occupancy plus the fraction of cell pixels within log-spaced distances of
// the nearest edge pixel. Stands in for a learned backbone; invariant under
// joint rescaling of the viewport and all boxes.
PatchGrid featurize(const Scene& scene, const FeatureConfig& cfg = {});

struct PredictorParams {
    ScaleConfig scale_cfg;
    int feat_dim = 16;
    int d1 = 64;
    int d2 = 64;
    // Row-major weights: w1 is d1 x feat_dim, w2 is d2 x d1, w3 is l x d2.
    std::vector<double> w1, b1, w2, b2, w3, b3;

    int bins() const { return scale_cfg.bin_count(); }
    void validate() const;
    std::string to_json() const;
    static PredictorParams from_json(const std::string& text);
};

PredictorParams init_params(const ScaleConfig& scale_cfg, int feat_dim, int d1, int d2,
                            std::uint64_t seed);

// Shared two-stage rectified transform at every cell, global average pooling
// over cells in fixed row-major order, then softmax.
ScaleDistribution forward(const PatchGrid& grid, const PredictorParams& params);

struct Gradients {
    std::vector<double> w1, b1, w2, b2, w3, b3;
};

struct LossAndGradient {
    double loss = 0.0;
    Gradients grad;
};

// KL(target || forward(grid)) with exact analytic gradients.
LossAndGradient loss_and_gradient(const PatchGrid& grid, const ScaleDistribution& target,
                                  const PredictorParams& params);

enum class SamplingMode { per_image, per_annotation };

struct TrainConfig {
    double learning_rate = 0.01;
    int epochs = 100;
    int batch_size = 8;
    std::uint64_t rng_seed = 0;
    SamplingMode sampling_mode = SamplingMode::per_annotation;
};

struct TrainExample {
    PatchGrid grid;
    ScaleDistribution target;
    int annotation_count = 1;
};

struct TrainResult {
    PredictorParams params;
    std::vector<double> loss_trace;  // mean loss per epoch

    std::string loss_trace_csv() const;
};

TrainResult train(const std::vector<TrainExample>& dataset, const TrainConfig& cfg,
                  const PredictorParams& initial);

// Cumulative-weight sampler used by train; exposed so the sampling-frequency
// contract can be tested directly.
class WeightedSampler {
public:
    explicit WeightedSampler(const std::vector<double>& weights);
    std::size_t draw(Rng& rng) const;

private:
    std::vector<double> cum_;
};

}  // namespace sgp
