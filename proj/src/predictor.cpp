#include "sgp/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "sgp/error.hpp"
#include "sgp/kernels.hpp"

namespace sgp {

namespace {

constexpr int kParamsVersion = 1;

// Chebyshev distance transform to the nearest set pixel, two-pass.
void distance_transform(const std::vector<std::uint8_t>& mask, int n, std::vector<int>& dist) {
    const int inf = 2 * n;
    dist.assign(static_cast<std::size_t>(n) * n, inf);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            std::size_t i = static_cast<std::size_t>(y) * n + x;
            if (mask[i]) {
                dist[i] = 0;
                continue;
            }
            int d = inf;
            if (x > 0) d = std::min(d, dist[i - 1] + 1);
            if (y > 0) {
                d = std::min(d, dist[i - n] + 1);
                if (x > 0) d = std::min(d, dist[i - n - 1] + 1);
                if (x + 1 < n) d = std::min(d, dist[i - n + 1] + 1);
            }
            dist[i] = d;
        }
    for (int y = n - 1; y >= 0; --y)
        for (int x = n - 1; x >= 0; --x) {
            std::size_t i = static_cast<std::size_t>(y) * n + x;
            int d = dist[i];
            if (x + 1 < n) d = std::min(d, dist[i + 1] + 1);
            if (y + 1 < n) {
                d = std::min(d, dist[i + n] + 1);
                if (x + 1 < n) d = std::min(d, dist[i + n + 1] + 1);
                if (x > 0) d = std::min(d, dist[i + n - 1] + 1);
            }
            dist[i] = d;
        }
}

void softmax_inplace(std::vector<double>& v) {
    double mx = *std::max_element(v.begin(), v.end());
    double total = 0.0;
    for (double& x : v) {
        x = std::exp(x - mx);
        total += x;
    }
    for (double& x : v) x /= total;
}

struct ForwardCache {
    // Per cell: hidden activations and logits, in row-major cell order.
    std::vector<std::vector<double>> z1, z2;
    std::vector<double> pooled_logits;
    std::vector<double> probs;
};

ForwardCache run_forward(const PatchGrid& grid, const PredictorParams& params) {
    params.validate();
    if (grid.feat_dim != params.feat_dim)
        throw ShapeMismatchError("forward: grid feat_dim " + std::to_string(grid.feat_dim) +
                                 " != params feat_dim " + std::to_string(params.feat_dim));
    const auto& k = kernels::active();
    const int f = params.feat_dim, d1 = params.d1, d2 = params.d2, l = params.bins();
    const int cells = grid.cells();

    ForwardCache cache;
    cache.z1.resize(static_cast<std::size_t>(cells));
    cache.z2.resize(static_cast<std::size_t>(cells));
    cache.pooled_logits.assign(static_cast<std::size_t>(l), 0.0);
    for (int c = 0; c < cells; ++c) {
        const double* x = grid.cell(c);
        auto& z1 = cache.z1[static_cast<std::size_t>(c)];
        auto& z2 = cache.z2[static_cast<std::size_t>(c)];
        z1.resize(static_cast<std::size_t>(d1));
        z2.resize(static_cast<std::size_t>(d2));
        for (int i = 0; i < d1; ++i)
            z1[static_cast<std::size_t>(i)] =
                k.dot(params.w1.data() + static_cast<std::size_t>(i) * f, x,
                      static_cast<std::size_t>(f)) +
                params.b1[static_cast<std::size_t>(i)];
        k.relu(z1.data(), z1.size());
        for (int i = 0; i < d2; ++i)
            z2[static_cast<std::size_t>(i)] =
                k.dot(params.w2.data() + static_cast<std::size_t>(i) * d1, z1.data(),
                      static_cast<std::size_t>(d1)) +
                params.b2[static_cast<std::size_t>(i)];
        k.relu(z2.data(), z2.size());
        for (int i = 0; i < l; ++i)
            cache.pooled_logits[static_cast<std::size_t>(i)] +=
                k.dot(params.w3.data() + static_cast<std::size_t>(i) * d2, z2.data(),
                      static_cast<std::size_t>(d2)) +
                params.b3[static_cast<std::size_t>(i)];
    }
    for (double& v : cache.pooled_logits) v /= static_cast<double>(cells);
    cache.probs = cache.pooled_logits;
    softmax_inplace(cache.probs);
    return cache;
}

}  // namespace

PatchGrid featurize(const Scene& scene, const FeatureConfig& cfg) {
    if (!(scene.viewport.w > 0.0 && scene.viewport.h > 0.0))
        throw Error("featurize: scene has no viewport");
    const int n = cfg.raster;

    PatchGrid grid;
    grid.grid_w = cfg.grid_w;
    grid.grid_h = cfg.grid_h;
    grid.feat_dim = cfg.feat_dim;
    grid.features.assign(static_cast<std::size_t>(cfg.grid_w) * cfg.grid_h * cfg.feat_dim, 0.0);
    if (scene.annotations.empty()) {
        grid.empty_scene = true;
        return grid;
    }

    // Letterbox: viewport centered in a square canvas of side max(w, h),
    // then scaled to the raster resolution. Padding stays zero.
    double side = std::max(scene.viewport.w, scene.viewport.h);
    double scale = static_cast<double>(n) / side;
    double ox = (side - scene.viewport.w) / 2.0;
    double oy = (side - scene.viewport.h) / 2.0;

    std::vector<std::uint8_t> edges(static_cast<std::size_t>(n) * n, 0);
    std::vector<std::uint8_t> interior(static_cast<std::size_t>(n) * n, 0);
    auto clampi = [n](int v) { return std::clamp(v, 0, n - 1); };
    for (const Annotation& a : scene.annotations) {
        int x0 = clampi(static_cast<int>(std::floor((a.bbox.x + ox) * scale)));
        int y0 = clampi(static_cast<int>(std::floor((a.bbox.y + oy) * scale)));
        int x1 = clampi(static_cast<int>(std::floor((a.bbox.x2() + ox) * scale)));
        int y1 = clampi(static_cast<int>(std::floor((a.bbox.y2() + oy) * scale)));
        for (int x = x0; x <= x1; ++x) {
            edges[static_cast<std::size_t>(y0) * n + x] = 1;
            edges[static_cast<std::size_t>(y1) * n + x] = 1;
        }
        for (int y = y0; y <= y1; ++y) {
            edges[static_cast<std::size_t>(y) * n + x0] = 1;
            edges[static_cast<std::size_t>(y) * n + x1] = 1;
            for (int x = x0; x <= x1; ++x) interior[static_cast<std::size_t>(y) * n + x] = 1;
        }
    }

    std::vector<int> dist;
    distance_transform(edges, n, dist);

    // Feature 0: occupancy; features 1..f-1: fraction of cell pixels within
    // distance 2^((j-1)/2) of an edge. Coarse radii saturate on big objects,
    // which is what carries the scale signal.
    std::vector<double> radii;
    for (int j = 1; j < cfg.feat_dim; ++j) radii.push_back(std::exp2((j - 1) / 2.0));

    const int cw = n / cfg.grid_w, ch = n / cfg.grid_h;
    for (int gy = 0; gy < cfg.grid_h; ++gy)
        for (int gx = 0; gx < cfg.grid_w; ++gx) {
            double* cell = grid.features.data() +
                           (static_cast<std::size_t>(gy) * cfg.grid_w + gx) * cfg.feat_dim;
            int count = 0, occ = 0;
            std::vector<int> within(radii.size(), 0);
            for (int y = gy * ch; y < (gy + 1) * ch; ++y)
                for (int x = gx * cw; x < (gx + 1) * cw; ++x) {
                    std::size_t i = static_cast<std::size_t>(y) * n + x;
                    ++count;
                    occ += interior[i];
                    for (std::size_t j = 0; j < radii.size(); ++j)
                        if (static_cast<double>(dist[i]) <= radii[j]) ++within[j];
                }
            cell[0] = static_cast<double>(occ) / count;
            for (std::size_t j = 0; j < radii.size(); ++j)
                cell[j + 1] = static_cast<double>(within[j]) / count;
        }
    return grid;
}

void PredictorParams::validate() const {
    scale_cfg.validate();
    const auto expect = [](const std::vector<double>& v, std::size_t size, const char* name) {
        if (v.size() != size)
            throw ShapeMismatchError(std::string("PredictorParams: bad shape for ") + name);
        for (double x : v)
            if (!std::isfinite(x))
                throw Error(std::string("PredictorParams: non-finite value in ") + name);
    };
    std::size_t f = static_cast<std::size_t>(feat_dim);
    std::size_t l = static_cast<std::size_t>(bins());
    expect(w1, static_cast<std::size_t>(d1) * f, "w1");
    expect(b1, static_cast<std::size_t>(d1), "b1");
    expect(w2, static_cast<std::size_t>(d2) * d1, "w2");
    expect(b2, static_cast<std::size_t>(d2), "b2");
    expect(w3, l * static_cast<std::size_t>(d2), "w3");
    expect(b3, l, "b3");
}

std::string PredictorParams::to_json() const {
    nlohmann::json j;
    j["version"] = kParamsVersion;
    j["b_min"] = scale_cfg.b_min;
    j["b_max"] = scale_cfg.b_max;
    j["sigma"] = scale_cfg.sigma;
    j["ideal_size"] = scale_cfg.ideal_size;
    j["feat_dim"] = feat_dim;
    j["d1"] = d1;
    j["d2"] = d2;
    j["w1"] = w1;
    j["b1"] = b1;
    j["w2"] = w2;
    j["b2"] = b2;
    j["w3"] = w3;
    j["b3"] = b3;
    return j.dump();
}

PredictorParams PredictorParams::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != kParamsVersion)
        throw Error("PredictorParams: unsupported version");
    PredictorParams p;
    p.scale_cfg.b_min = j.at("b_min").get<int>();
    p.scale_cfg.b_max = j.at("b_max").get<int>();
    p.scale_cfg.sigma = j.at("sigma").get<int>();
    p.scale_cfg.ideal_size = j.at("ideal_size").get<double>();
    p.feat_dim = j.at("feat_dim").get<int>();
    p.d1 = j.at("d1").get<int>();
    p.d2 = j.at("d2").get<int>();
    p.w1 = j.at("w1").get<std::vector<double>>();
    p.b1 = j.at("b1").get<std::vector<double>>();
    p.w2 = j.at("w2").get<std::vector<double>>();
    p.b2 = j.at("b2").get<std::vector<double>>();
    p.w3 = j.at("w3").get<std::vector<double>>();
    p.b3 = j.at("b3").get<std::vector<double>>();
    p.validate();
    return p;
}

PredictorParams init_params(const ScaleConfig& scale_cfg, int feat_dim, int d1, int d2,
                            std::uint64_t seed) {
    PredictorParams p;
    p.scale_cfg = scale_cfg;
    p.feat_dim = feat_dim;
    p.d1 = d1;
    p.d2 = d2;
    Rng rng(seed);
    auto fill = [&rng](std::vector<double>& v, std::size_t size) {
        v.resize(size);
        for (double& x : v) x = rng.uniform(-0.05, 0.05);
    };
    std::size_t l = static_cast<std::size_t>(p.bins());
    fill(p.w1, static_cast<std::size_t>(d1) * feat_dim);
    fill(p.w2, static_cast<std::size_t>(d2) * d1);
    fill(p.w3, l * static_cast<std::size_t>(d2));
    p.b1.assign(static_cast<std::size_t>(d1), 0.0);
    p.b2.assign(static_cast<std::size_t>(d2), 0.0);
    p.b3.assign(l, 0.0);
    return p;
}

ScaleDistribution forward(const PatchGrid& grid, const PredictorParams& params) {
    ForwardCache cache = run_forward(grid, params);
    return ScaleDistribution(params.scale_cfg, std::move(cache.probs));
}

LossAndGradient loss_and_gradient(const PatchGrid& grid, const ScaleDistribution& target,
                                  const PredictorParams& params) {
    if (target.config().bin_count() != params.bins())
        throw ShapeMismatchError("loss_and_gradient: target bin count mismatch");
    ForwardCache cache = run_forward(grid, params);
    const auto& k = kernels::active();
    const int f = params.feat_dim, d1 = params.d1, d2 = params.d2, l = params.bins();
    const int cells = grid.cells();
    const auto& p = target.probs();
    const auto& q = cache.probs;

    LossAndGradient out;
    for (int i = 0; i < l; ++i) {
        if (p[static_cast<std::size_t>(i)] <= 0.0) continue;
        if (q[static_cast<std::size_t>(i)] <= 0.0) {
            out.loss = std::numeric_limits<double>::infinity();
            break;
        }
        out.loss += p[static_cast<std::size_t>(i)] *
                    (std::log(p[static_cast<std::size_t>(i)]) -
                     std::log(q[static_cast<std::size_t>(i)]));
    }
    out.loss = std::max(out.loss, 0.0);

    Gradients& g = out.grad;
    g.w1.assign(params.w1.size(), 0.0);
    g.b1.assign(params.b1.size(), 0.0);
    g.w2.assign(params.w2.size(), 0.0);
    g.b2.assign(params.b2.size(), 0.0);
    g.w3.assign(params.w3.size(), 0.0);
    g.b3.assign(params.b3.size(), 0.0);
    if (!std::isfinite(out.loss)) return out;

    // dL/d(pooled logit) = q - p; each cell contributes (q - p)/cells.
    std::vector<double> dlogit(static_cast<std::size_t>(l));
    for (int i = 0; i < l; ++i)
        dlogit[static_cast<std::size_t>(i)] =
            q[static_cast<std::size_t>(i)] - p[static_cast<std::size_t>(i)];
    for (int i = 0; i < l; ++i) g.b3[static_cast<std::size_t>(i)] = dlogit[static_cast<std::size_t>(i)];
    std::vector<double> du(static_cast<std::size_t>(l));
    for (int i = 0; i < l; ++i)
        du[static_cast<std::size_t>(i)] = dlogit[static_cast<std::size_t>(i)] / cells;

    std::vector<double> dz2(static_cast<std::size_t>(d2));
    std::vector<double> dz1(static_cast<std::size_t>(d1));
    for (int c = 0; c < cells; ++c) {  // fixed row-major reduction order
        const double* x = grid.cell(c);
        const auto& z1 = cache.z1[static_cast<std::size_t>(c)];
        const auto& z2 = cache.z2[static_cast<std::size_t>(c)];

        std::fill(dz2.begin(), dz2.end(), 0.0);
        for (int i = 0; i < l; ++i) {
            double d = du[static_cast<std::size_t>(i)];
            k.axpy(d, z2.data(), g.w3.data() + static_cast<std::size_t>(i) * d2,
                   static_cast<std::size_t>(d2));
            k.axpy(d, params.w3.data() + static_cast<std::size_t>(i) * d2, dz2.data(),
                   static_cast<std::size_t>(d2));
        }
        for (int i = 0; i < d2; ++i)
            if (z2[static_cast<std::size_t>(i)] <= 0.0) dz2[static_cast<std::size_t>(i)] = 0.0;

        std::fill(dz1.begin(), dz1.end(), 0.0);
        for (int i = 0; i < d2; ++i) {
            double d = dz2[static_cast<std::size_t>(i)];
            if (d == 0.0) continue;
            g.b2[static_cast<std::size_t>(i)] += d;
            k.axpy(d, z1.data(), g.w2.data() + static_cast<std::size_t>(i) * d1,
                   static_cast<std::size_t>(d1));
            k.axpy(d, params.w2.data() + static_cast<std::size_t>(i) * d1, dz1.data(),
                   static_cast<std::size_t>(d1));
        }
        for (int i = 0; i < d1; ++i)
            if (z1[static_cast<std::size_t>(i)] <= 0.0) dz1[static_cast<std::size_t>(i)] = 0.0;

        for (int i = 0; i < d1; ++i) {
            double d = dz1[static_cast<std::size_t>(i)];
            if (d == 0.0) continue;
            g.b1[static_cast<std::size_t>(i)] += d;
            k.axpy(d, x, g.w1.data() + static_cast<std::size_t>(i) * f,
                   static_cast<std::size_t>(f));
        }
    }
    return out;
}

WeightedSampler::WeightedSampler(const std::vector<double>& weights) {
    cum_.reserve(weights.size());
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw Error("WeightedSampler: negative weight");
        total += w;
        cum_.push_back(total);
    }
    if (!(total > 0.0)) throw Error("WeightedSampler: zero total weight");
    for (double& c : cum_) c /= total;
}

std::size_t WeightedSampler::draw(Rng& rng) const {
    double u = rng.uniform();
    auto it = std::upper_bound(cum_.begin(), cum_.end(), u);
    if (it == cum_.end()) --it;
    return static_cast<std::size_t>(it - cum_.begin());
}

std::string TrainResult::loss_trace_csv() const {
    std::string out = "epoch,mean_loss\n";
    for (std::size_t e = 0; e < loss_trace.size(); ++e) {
        char line[64];
        std::snprintf(line, sizeof(line), "%zu,%.17g\n", e, loss_trace[e]);
        out += line;
    }
    return out;
}

TrainResult train(const std::vector<TrainExample>& dataset, const TrainConfig& cfg,
                  const PredictorParams& initial) {
    if (dataset.empty()) throw Error("train: empty dataset");
    if (!(cfg.learning_rate > 0.0)) throw Error("train: learning_rate must be positive");
    if (cfg.batch_size < 1) throw Error("train: batch_size must be >= 1");
    initial.validate();

    std::vector<double> weights;
    weights.reserve(dataset.size());
    for (const TrainExample& ex : dataset)
        weights.push_back(cfg.sampling_mode == SamplingMode::per_annotation
                              ? static_cast<double>(std::max(ex.annotation_count, 0))
                              : 1.0);
    WeightedSampler sampler(weights);

    TrainResult result;
    result.params = initial;
    Rng rng(cfg.rng_seed);
    const int steps_per_epoch =
        std::max(1, static_cast<int>(dataset.size()) / cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        int epoch_items = 0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            Gradients acc;
            for (int b = 0; b < cfg.batch_size; ++b) {
                std::size_t idx = sampler.draw(rng);
                LossAndGradient lg =
                    loss_and_gradient(dataset[idx].grid, dataset[idx].target, result.params);
                if (!std::isfinite(lg.loss)) throw DivergedError("train: non-finite loss");
                epoch_loss += lg.loss;
                ++epoch_items;
                if (b == 0) {
                    acc = std::move(lg.grad);
                } else {
                    const auto& k = kernels::active();
                    k.axpy(1.0, lg.grad.w1.data(), acc.w1.data(), acc.w1.size());
                    k.axpy(1.0, lg.grad.b1.data(), acc.b1.data(), acc.b1.size());
                    k.axpy(1.0, lg.grad.w2.data(), acc.w2.data(), acc.w2.size());
                    k.axpy(1.0, lg.grad.b2.data(), acc.b2.data(), acc.b2.size());
                    k.axpy(1.0, lg.grad.w3.data(), acc.w3.data(), acc.w3.size());
                    k.axpy(1.0, lg.grad.b3.data(), acc.b3.data(), acc.b3.size());
                }
            }
            double step_lr = -cfg.learning_rate / cfg.batch_size;
            const auto& k = kernels::active();
            k.axpy(step_lr, acc.w1.data(), result.params.w1.data(), acc.w1.size());
            k.axpy(step_lr, acc.b1.data(), result.params.b1.data(), acc.b1.size());
            k.axpy(step_lr, acc.w2.data(), result.params.w2.data(), acc.w2.size());
            k.axpy(step_lr, acc.b2.data(), result.params.b2.data(), acc.b2.size());
            k.axpy(step_lr, acc.w3.data(), result.params.w3.data(), acc.w3.size());
            k.axpy(step_lr, acc.b3.data(), result.params.b3.data(), acc.b3.size());
        }
        result.params.validate();
        result.loss_trace.push_back(epoch_loss / std::max(epoch_items, 1));
    }
    return result;
}

}  // namespace sgp
