#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "sgp/proposer.hpp"

using namespace sgp;

namespace {

Scene scene_with_sizes(const std::vector<double>& sizes) {
    Scene s;
    s.viewport = Rect{0, 0, 640, 480};
    double x = 5.0;
    int i = 0;
    for (double m : sizes) {
        Annotation a;
        a.bbox = Rect{x, 50.0, m, m * 0.8};
        a.area = a.bbox.area();
        a.object_id = std::to_string(i++);
        s.annotations.push_back(a);
        x += m + 5.0;
    }
    return s;
}

OracleConfig noiseless() {
    OracleConfig cfg;
    cfg.localization_noise = 0.0;
    cfg.false_positive_rate = 0.0;
    cfg.miss_rate = 0.0;
    return cfg;
}

}  // namespace

TEST_CASE("band detectability") {
    ScaleConfig scale_cfg;
    const double d = scale_cfg.ideal_size;

    SUBCASE("m = 100 at scale 1 is inside the band") {
        Scene s = scene_with_sizes({100.0});
        Rng rng(1);
        auto props = oracle_propose(s, ScaleSet{{1.0}}, noiseless(), scale_cfg, rng);
        REQUIRE(props.size() == 1);
        CHECK(std::abs(std::log2(100.0 * 7.0 / 640.0)) <= 0.5);
    }

    SUBCASE("object 4x the ideal size is invisible at scale 1") {
        Scene s = scene_with_sizes({4.0 * d});
        Rng rng(2);
        auto props = oracle_propose(s, ScaleSet{{1.0}}, noiseless(), scale_cfg, rng);
        CHECK(props.empty());
    }

    SUBCASE("noiseless in-band proposals equal the ground truth boxes") {
        Scene s = scene_with_sizes({d, d * 1.1, d * 0.9});
        Rng rng(3);
        auto props = oracle_propose(s, ScaleSet{{1.0}}, noiseless(), scale_cfg, rng);
        REQUIRE(props.size() == 3);
        for (const Proposal& p : props) {
            bool exact = false;
            for (const Annotation& a : s.annotations)
                if (a.bbox == p.bbox) exact = true;
            CHECK(exact);
        }
    }
}

TEST_CASE("noiseless recall equals closed-form band coverage") {
    ScaleConfig scale_cfg;
    const double d = scale_cfg.ideal_size;
    // Sizes at bin coordinates 0, 1, 3; scales covering bins 0 and 1 only.
    Scene s = scene_with_sizes({d, 2.0 * d, 8.0 * d});
    ScaleSet scales{{1.0, 0.5}};
    Rng rng(4);
    auto props = oracle_propose(s, scales, noiseless(), scale_cfg, rng);

    int covered = 0;
    for (const Annotation& a : s.annotations) {
        double m = std::max(a.bbox.w, a.bbox.h);
        for (double sc : scales.scales)
            if (std::abs(std::log2(sc * m / d)) <= 0.5) {
                ++covered;
                break;
            }
    }
    CHECK(covered == 2);
    std::set<std::pair<double, double>> boxes;
    for (const Proposal& p : props) boxes.insert({p.bbox.x, p.bbox.y});
    CHECK(static_cast<int>(boxes.size()) == covered);
}

TEST_CASE("enlarging the scale set never loses detectable objects") {
    ScaleConfig scale_cfg;
    const double d = scale_cfg.ideal_size;
    Scene s = scene_with_sizes({d, 2.0 * d, 4.0 * d, 0.5 * d});
    Rng rng_a(5), rng_b(5);
    auto small = oracle_propose(s, ScaleSet{{1.0}}, noiseless(), scale_cfg, rng_a);
    auto large = oracle_propose(s, ScaleSet{{1.0, 0.5, 0.25, 2.0}}, noiseless(), scale_cfg, rng_b);
    CHECK(large.size() >= small.size());
    for (const Proposal& p : small) {
        bool found = false;
        for (const Proposal& q : large)
            if (p.bbox == q.bbox) found = true;
        CHECK(found);
    }
}

TEST_CASE("output is deduplicated and sorted by score") {
    ScaleConfig scale_cfg;
    Scene s = scene_with_sizes({scale_cfg.ideal_size});
    // Two scales both inside the object's band produce the identical noiseless
    // box; only one survives.
    Rng rng(6);
    auto props = oracle_propose(s, ScaleSet{{1.0, std::exp2(0.25)}}, noiseless(), scale_cfg, rng);
    CHECK(props.size() == 1);

    OracleConfig noisy;
    noisy.rng_seed = 1;
    Rng rng2(7);
    auto noisy_props =
        oracle_propose(scene_with_sizes({80, 90, 100, 110}), ScaleSet{{1.0, 0.8}}, noisy,
                       scale_cfg, rng2);
    for (std::size_t i = 1; i < noisy_props.size(); ++i)
        CHECK(noisy_props[i].score <= noisy_props[i - 1].score);
    std::set<std::tuple<double, double, double, double>> keys;
    for (const Proposal& p : noisy_props)
        CHECK(keys.insert({p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h}).second);
}

TEST_CASE("determinism under a fixed seed") {
    ScaleConfig scale_cfg;
    Scene s = scene_with_sizes({70, 90, 120, 150});
    OracleConfig cfg;
    Rng a(9), b(9);
    auto pa = oracle_propose(s, ScaleSet{{1.0, 0.7}}, cfg, scale_cfg, a);
    auto pb = oracle_propose(s, ScaleSet{{1.0, 0.7}}, cfg, scale_cfg, b);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].bbox == pb[i].bbox);
        CHECK(pa[i].score == pb[i].score);
    }
}

TEST_CASE("run_pipeline modes") {
    ScaleConfig scale_cfg;
    const double d = scale_cfg.ideal_size;
    PipelineConfig cfg;
    cfg.oracle = noiseless();

    SUBCASE("guided_gt on a single-bin scene samples inside that bin") {
        Scene s = scene_with_sizes({2.0 * d, 2.0 * d});  // all objects at bin 1
        cfg.mode = PipelineMode::guided_gt;
        Rng rng(1);
        auto props = run_pipeline(s, cfg, rng);
        CHECK(props.size() == s.annotations.size());
    }

    SUBCASE("exhaustive ignores scene content") {
        cfg.mode = PipelineMode::exhaustive;
        Rng a(2), b(2);
        auto pa = run_pipeline(scene_with_sizes({d}), cfg, a);
        auto pb = run_pipeline(scene_with_sizes({3.0 * d}), cfg, b);
        // Both ran the same fixed geometric scale set.
        auto expected = uniform_scale_set(cfg.h, cfg.exhaustive_lo, cfg.exhaustive_hi);
        CHECK(expected.scales.size() == 6);
    }

    SUBCASE("guided_predictor requires params") {
        cfg.mode = PipelineMode::guided_predictor;
        Rng rng(3);
        CHECK_THROWS_AS(run_pipeline(scene_with_sizes({d}), cfg, rng), MissingPredictorError);
    }

    SUBCASE("zero predictor gives the uniform-quantile scale set") {
        cfg.mode = PipelineMode::guided_predictor;
        auto params = init_params(scale_cfg, cfg.features.feat_dim, 8, 8, 0);
        for (auto* v : {&params.w1, &params.w2, &params.w3})
            std::fill(v->begin(), v->end(), 0.0);
        cfg.params = &params;
        cfg.lambda = 1.0;
        Rng rng(4);
        // Uniform over 65 bins spans scales far outside every band; with a
        // single mid-size object almost surely nothing is detected.
        auto props = run_pipeline(scene_with_sizes({d}), cfg, rng);
        CHECK(props.size() <= 1);
    }
}

TEST_CASE("proposals JSON round trip and validation") {
    std::vector<Proposal> props{{Rect{1, 2, 3, 4}, 0.9, 1.0}, {Rect{5, 6, 7, 8}, 0.4, 0.5}};
    auto back = proposals_from_json(proposals_to_json(props));
    REQUIRE(back.size() == 2);
    CHECK(back[0].bbox == props[0].bbox);
    CHECK(back[1].score == props[1].score);

    CHECK_THROWS_AS(proposals_from_json("{\"not\": \"a list\"}"), ProtocolViolationError);
    CHECK_THROWS_AS(proposals_from_json("[{\"bbox\": [1,2,3], \"score\": 1}]"),
                    ProtocolViolationError);
    CHECK_THROWS_AS(proposals_from_json("[{\"bbox\": [1,2,0,4], \"score\": 1}]"),
                    ProtocolViolationError);
    CHECK_THROWS_AS(proposals_from_json("not json"), ProtocolViolationError);
}

TEST_CASE("external proposer contract") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "sgp_external";
    fs::create_directories(dir);
    ScaleConfig scale_cfg;
    Scene s = scene_with_sizes({scale_cfg.ideal_size});
    s.image_id = "0";

    SUBCASE("well-behaved proposer round trips") {
        fs::path exe = dir / "ok.sh";
        {
            std::ofstream out(exe);
            out << "#!/bin/sh\n"
                << "echo '[{\"bbox\": [1,2,3,4], \"score\": 0.5, \"source_scale\": 1.0}]' > \"$3\"\n";
        }
        fs::permissions(exe, fs::perms::owner_all);
        auto props = external_propose(exe.string(), s, ScaleSet{{1.0}}, dir.string());
        REQUIRE(props.size() == 1);
        CHECK(props[0].bbox == Rect{1, 2, 3, 4});
    }

    SUBCASE("non-zero exit surfaces stderr") {
        fs::path exe = dir / "fail.sh";
        {
            std::ofstream out(exe);
            out << "#!/bin/sh\necho boom >&2\nexit 3\n";
        }
        fs::permissions(exe, fs::perms::owner_all);
        bool threw_with_stderr = false;
        try {
            external_propose(exe.string(), s, ScaleSet{{1.0}}, dir.string());
        } catch (const Error& e) {
            threw_with_stderr = std::string(e.what()).find("boom") != std::string::npos;
        }
        CHECK(threw_with_stderr);
    }

    SUBCASE("malformed output is a protocol violation") {
        fs::path exe = dir / "bad.sh";
        {
            std::ofstream out(exe);
            out << "#!/bin/sh\necho 'garbage' > \"$3\"\n";
        }
        fs::permissions(exe, fs::perms::owner_all);
        CHECK_THROWS_AS(external_propose(exe.string(), s, ScaleSet{{1.0}}, dir.string()),
                        ProtocolViolationError);
    }

    fs::remove_all(dir);
}
