#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sgp/predictor.hpp"
#include "sgp/scale_math.hpp"

using namespace sgp;

namespace {

ScaleConfig small_cfg() {
    ScaleConfig cfg;
    cfg.b_min = -4;
    cfg.b_max = 4;
    return cfg;
}

Scene scene_with_boxes(const std::vector<Rect>& boxes, double vw = 640, double vh = 480) {
    Scene s;
    s.viewport = Rect{0, 0, vw, vh};
    int i = 0;
    for (const Rect& b : boxes) {
        Annotation a;
        a.bbox = b;
        a.area = b.area();
        a.object_id = std::to_string(i++);
        s.annotations.push_back(a);
    }
    return s;
}

PatchGrid random_grid(const FeatureConfig& cfg, Rng& rng) {
    PatchGrid g;
    g.grid_w = cfg.grid_w;
    g.grid_h = cfg.grid_h;
    g.feat_dim = cfg.feat_dim;
    g.features.resize(static_cast<std::size_t>(g.cells()) * cfg.feat_dim);
    for (auto& v : g.features) v = rng.uniform();
    return g;
}

ScaleDistribution random_target(const ScaleConfig& cfg, Rng& rng) {
    std::vector<double> p(static_cast<std::size_t>(cfg.bin_count()));
    double total = 0.0;
    for (auto& v : p) {
        v = rng.uniform();
        total += v;
    }
    for (auto& v : p) v /= total;
    return ScaleDistribution(cfg, p);
}

}  // namespace

TEST_CASE("featurize basics") {
    FeatureConfig fc;

    SUBCASE("empty scene flags and zeroes the grid") {
        auto g = featurize(scene_with_boxes({}), fc);
        CHECK(g.empty_scene);
        for (double v : g.features) CHECK(v == 0.0);
    }

    SUBCASE("one box in one cell only touches that cell's occupancy") {
        // Cell (0,0) of a 6x6 grid over a 640-wide letterboxed canvas covers
        // x,y in [0, 640/6); box placed near the canvas origin. The viewport
        // is square so no letterbox offset shifts rows.
        auto g = featurize(scene_with_boxes({Rect{10, 10, 40, 40}}, 600, 600), fc);
        CHECK(g.features[0] > 0.0);  // occupancy of cell 0
        for (int c = 1; c < g.cells(); ++c)
            CHECK(g.cell(c)[0] == 0.0);
    }

    SUBCASE("joint rescaling of boxes and viewport is exact invariance") {
        std::vector<Rect> boxes{{30, 40, 100, 120}, {300, 200, 60, 60}, {500, 360, 90, 80}};
        std::vector<Rect> doubled;
        for (const Rect& b : boxes) doubled.push_back(Rect{2 * b.x, 2 * b.y, 2 * b.w, 2 * b.h});
        auto a = featurize(scene_with_boxes(boxes, 640, 480), fc);
        auto b = featurize(scene_with_boxes(doubled, 1280, 960), fc);
        REQUIRE(a.features.size() == b.features.size());
        for (std::size_t i = 0; i < a.features.size(); ++i)
            CHECK(a.features[i] == b.features[i]);
    }

    SUBCASE("features are finite and in [0,1]") {
        auto g = featurize(scene_with_boxes({{0, 0, 640, 480}, {100, 100, 5, 5}}), fc);
        for (double v : g.features) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("forward") {
    ScaleConfig cfg = small_cfg();
    FeatureConfig fc;
    Rng rng(1);

    SUBCASE("all-zero params give the uniform distribution") {
        auto params = init_params(cfg, fc.feat_dim, 8, 8, 0);
        for (auto* v : {&params.w1, &params.w2, &params.w3})
            std::fill(v->begin(), v->end(), 0.0);
        auto g = random_grid(fc, rng);
        auto q = forward(g, params);
        for (double p : q.probs())
            CHECK(p == doctest::Approx(1.0 / cfg.bin_count()).epsilon(1e-12));
    }

    SUBCASE("identical cells equal single-cell softmax; output is a distribution") {
        auto params = init_params(cfg, fc.feat_dim, 8, 8, 42);
        PatchGrid g = random_grid(fc, rng);
        // Copy cell 0 everywhere.
        for (int c = 1; c < g.cells(); ++c)
            std::copy(g.cell(0), g.cell(0) + g.feat_dim,
                      g.features.begin() + static_cast<std::size_t>(c) * g.feat_dim);
        PatchGrid single = g;
        single.grid_w = 1;
        single.grid_h = 1;
        single.features.resize(static_cast<std::size_t>(g.feat_dim));
        auto qa = forward(g, params);
        auto qb = forward(single, params);
        double sum = 0.0;
        for (std::size_t i = 0; i < qa.probs().size(); ++i) {
            CHECK(qa.probs()[i] == doctest::Approx(qb.probs()[i]).epsilon(1e-12));
            CHECK(qa.probs()[i] > 0.0);
            sum += qa.probs()[i];
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("permuting cells leaves the output unchanged bit for bit") {
        auto params = init_params(cfg, fc.feat_dim, 8, 8, 7);
        auto g = random_grid(fc, rng);
        PatchGrid permuted = g;
        // Reverse the cell order.
        for (int c = 0; c < g.cells(); ++c)
            std::copy(g.cell(g.cells() - 1 - c), g.cell(g.cells() - 1 - c) + g.feat_dim,
                      permuted.features.begin() + static_cast<std::size_t>(c) * g.feat_dim);
        auto qa = forward(g, params);
        auto qb = forward(permuted, params);
        for (std::size_t i = 0; i < qa.probs().size(); ++i)
            CHECK(qa.probs()[i] == qb.probs()[i]);
    }

    SUBCASE("shape mismatch throws") {
        auto params = init_params(cfg, fc.feat_dim + 1, 8, 8, 0);
        CHECK_THROWS_AS(forward(random_grid(fc, rng), params), ShapeMismatchError);
    }
}

TEST_CASE("loss_and_gradient") {
    ScaleConfig cfg = small_cfg();
    FeatureConfig fc;
    fc.grid_w = 3;
    fc.grid_h = 3;
    Rng rng(2);

    SUBCASE("loss is zero when the target equals the prediction") {
        auto params = init_params(cfg, fc.feat_dim, 8, 8, 3);
        auto g = random_grid(fc, rng);
        auto target = forward(g, params);
        auto lg = loss_and_gradient(g, target, params);
        CHECK(lg.loss == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("zero grid, uniform target, zero params give zero loss") {
        auto params = init_params(cfg, fc.feat_dim, 8, 8, 0);
        for (auto* v : {&params.w1, &params.w2, &params.w3})
            std::fill(v->begin(), v->end(), 0.0);
        PatchGrid g;
        g.grid_w = fc.grid_w;
        g.grid_h = fc.grid_h;
        g.feat_dim = fc.feat_dim;
        g.features.assign(static_cast<std::size_t>(g.cells()) * fc.feat_dim, 0.0);
        std::vector<double> u(static_cast<std::size_t>(cfg.bin_count()),
                              1.0 / cfg.bin_count());
        auto lg = loss_and_gradient(g, ScaleDistribution(cfg, u), params);
        CHECK(lg.loss == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("analytic gradient matches central finite differences") {
        for (int pair = 0; pair < 5; ++pair) {
            auto params = init_params(cfg, fc.feat_dim, 6, 6, 100 + pair);
            auto g = random_grid(fc, rng);
            auto target = random_target(cfg, rng);
            auto lg = loss_and_gradient(g, target, params);

            auto check_tensor = [&](std::vector<double> PredictorParams::*field,
                                    const std::vector<double>& grad) {
                auto& vec = params.*field;
                for (int k = 0; k < 20; ++k) {
                    std::size_t i = rng.uniform_index(vec.size());
                    const double h = 1e-5;
                    double saved = vec[i];
                    vec[i] = saved + h;
                    double up = loss_and_gradient(g, target, params).loss;
                    vec[i] = saved - h;
                    double down = loss_and_gradient(g, target, params).loss;
                    vec[i] = saved;
                    double fd = (up - down) / (2.0 * h);
                    double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
                    CHECK(std::abs(fd - grad[i]) / denom < 1e-4);
                }
            };
            check_tensor(&PredictorParams::w1, lg.grad.w1);
            check_tensor(&PredictorParams::w2, lg.grad.w2);
            check_tensor(&PredictorParams::w3, lg.grad.w3);
            check_tensor(&PredictorParams::b3, lg.grad.b3);
        }
    }
}

TEST_CASE("weighted sampling frequencies") {
    SUBCASE("per-annotation weights 1:9") {
        WeightedSampler sampler({1.0, 9.0});
        Rng rng(3);
        int counts[2] = {0, 0};
        const int draws = 20000;
        for (int i = 0; i < draws; ++i) ++counts[sampler.draw(rng)];
        // Chi-squared against the 1:9 expectation, 1 dof, alpha ~ 1e-3.
        double e0 = draws * 0.1, e1 = draws * 0.9;
        double chi2 = (counts[0] - e0) * (counts[0] - e0) / e0 +
                      (counts[1] - e1) * (counts[1] - e1) / e1;
        CHECK(chi2 < 10.83);
    }
    SUBCASE("per-image weights 1:1") {
        WeightedSampler sampler({1.0, 1.0});
        Rng rng(4);
        int counts[2] = {0, 0};
        const int draws = 20000;
        for (int i = 0; i < draws; ++i) ++counts[sampler.draw(rng)];
        double e = draws * 0.5;
        double chi2 = (counts[0] - e) * (counts[0] - e) / e +
                      (counts[1] - e) * (counts[1] - e) / e;
        CHECK(chi2 < 10.83);
    }
}

TEST_CASE("training") {
    ScaleConfig cfg = small_cfg();
    FeatureConfig fc;
    fc.grid_w = 3;
    fc.grid_h = 3;
    Rng rng(5);

    std::vector<TrainExample> dataset;
    auto g = random_grid(fc, rng);
    dataset.push_back({g, random_target(cfg, rng), 3});

    TrainConfig tc;
    tc.epochs = 40;
    tc.batch_size = 1;
    tc.learning_rate = 0.5;
    tc.rng_seed = 9;

    auto initial = init_params(cfg, fc.feat_dim, 8, 8, 11);

    SUBCASE("loss decreases on a single example") {
        auto result = train(dataset, tc, initial);
        REQUIRE(result.loss_trace.size() == 40);
        CHECK(result.loss_trace.back() < result.loss_trace.front());
    }

    SUBCASE("fixed seed reproduces the loss trace exactly") {
        auto a = train(dataset, tc, initial);
        auto b = train(dataset, tc, initial);
        REQUIRE(a.loss_trace.size() == b.loss_trace.size());
        for (std::size_t i = 0; i < a.loss_trace.size(); ++i)
            CHECK(a.loss_trace[i] == b.loss_trace[i]);
        CHECK(a.params.w1 == b.params.w1);
        CHECK(a.params.w3 == b.params.w3);
    }

    SUBCASE("empty dataset throws") { CHECK_THROWS_AS(train({}, tc, initial), Error); }
}

TEST_CASE("params JSON round trip") {
    auto params = init_params(small_cfg(), 16, 8, 8, 77);
    auto back = PredictorParams::from_json(params.to_json());
    CHECK(back.w1 == params.w1);
    CHECK(back.w2 == params.w2);
    CHECK(back.w3 == params.w3);
    CHECK(back.b3 == params.b3);
    CHECK(back.scale_cfg.b_min == params.scale_cfg.b_min);
}
