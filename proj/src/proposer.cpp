#include "sgp/proposer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <tuple>

#include <nlohmann/json.hpp>

#include "sgp/dataset_io.hpp"
#include "sgp/error.hpp"

namespace sgp {

namespace {

int poisson_draw(double lambda, Rng& rng) {
    if (lambda <= 0.0) return 0;
    double limit = std::exp(-lambda);
    double prod = rng.uniform();
    int k = 0;
    while (prod > limit) {
        prod *= rng.uniform();
        ++k;
    }
    return k;
}

}  // namespace

std::vector<Proposal> oracle_propose(const Scene& scene, const ScaleSet& scales,
                                     const OracleConfig& cfg, const ScaleConfig& scale_cfg,
                                     Rng& rng) {
    if (scales.scales.empty()) throw Error("oracle_propose: empty scale set");
    if (!(cfg.tau > 0.0)) throw Error("oracle_propose: tau must be positive");

    std::vector<Proposal> out;
    const double sigma = static_cast<double>(scale_cfg.sigma);

    for (const Annotation& ann : scene.annotations) {
        double m = std::max(ann.bbox.w, ann.bbox.h);
        if (m <= 0.0) continue;
        for (double s : scales.scales) {
            double offset = std::abs(sigma * std::log2(s * m / scale_cfg.ideal_size));
            if (offset > cfg.tau) continue;
            if (rng.bernoulli(cfg.miss_rate)) continue;
            // Jitter grows from zero at the band center to localization_noise
            // at the band edge.
            double eta = cfg.localization_noise * (offset / cfg.tau);
            Proposal p;
            p.source_scale = s;
            double dw = eta * rng.uniform(-1.0, 1.0);
            double dh = eta * rng.uniform(-1.0, 1.0);
            double dx = eta * rng.uniform(-1.0, 1.0);
            double dy = eta * rng.uniform(-1.0, 1.0);
            p.bbox.w = ann.bbox.w * (1.0 + dw);
            p.bbox.h = ann.bbox.h * (1.0 + dh);
            p.bbox.x = ann.bbox.x + ann.bbox.w * dx + (ann.bbox.w - p.bbox.w) / 2.0;
            p.bbox.y = ann.bbox.y + ann.bbox.h * dy + (ann.bbox.h - p.bbox.h) / 2.0;
            p.score = (1.0 - offset / cfg.tau) * (1.0 - eta * rng.uniform());
            out.push_back(p);
        }
    }

    for (double s : scales.scales) {
        int spurious = poisson_draw(cfg.false_positive_rate, rng);
        for (int i = 0; i < spurious; ++i) {
            Proposal p;
            p.source_scale = s;
            p.bbox.w = rng.uniform(10.0, scene.viewport.w / 4.0);
            p.bbox.h = rng.uniform(10.0, scene.viewport.h / 4.0);
            p.bbox.x = rng.uniform(0.0, scene.viewport.w - p.bbox.w);
            p.bbox.y = rng.uniform(0.0, scene.viewport.h - p.bbox.h);
            p.score = rng.uniform(0.0, 0.5);
            out.push_back(p);
        }
    }

    // Deduplicate identical boxes (an object seen noiselessly at two in-band
    // scales) keeping the best score.
    std::map<std::tuple<double, double, double, double>, std::size_t> best;
    std::vector<Proposal> dedup;
    for (const Proposal& p : out) {
        auto key = std::make_tuple(p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h);
        auto it = best.find(key);
        if (it == best.end()) {
            best.emplace(key, dedup.size());
            dedup.push_back(p);
        } else if (p.score > dedup[it->second].score) {
            dedup[it->second] = p;
        }
    }

    std::stable_sort(dedup.begin(), dedup.end(),
                     [](const Proposal& a, const Proposal& b) { return a.score > b.score; });
    return dedup;
}

std::vector<Proposal> run_pipeline(const Scene& scene, const PipelineConfig& cfg, Rng& rng) {
    ScaleSet scales;
    switch (cfg.mode) {
        case PipelineMode::guided_gt: {
            std::vector<ObjectSize> sizes;
            for (const Annotation& a : scene.annotations)
                sizes.emplace_back(std::max(a.bbox.w, a.bbox.h), cfg.scale_cfg);
            if (sizes.empty()) return {};
            ScaleDistribution dist = ground_truth_distribution(sizes, cfg.scale_cfg);
            scales = sample_scales(smooth(dist, cfg.lambda), cfg.h);
            break;
        }
        case PipelineMode::guided_predictor: {
            if (!cfg.params)
                throw MissingPredictorError("run_pipeline: guided_predictor needs params");
            ScaleDistribution dist = forward(featurize(scene, cfg.features), *cfg.params);
            scales = sample_scales(smooth(dist, cfg.lambda), cfg.h);
            break;
        }
        case PipelineMode::exhaustive:
            scales = uniform_scale_set(cfg.h, cfg.exhaustive_lo, cfg.exhaustive_hi);
            break;
    }

    if (cfg.external_proposer)
        return external_propose(*cfg.external_proposer, scene, scales, cfg.work_dir);
    return oracle_propose(scene, scales, cfg.oracle, cfg.scale_cfg, rng);
}

std::string proposals_to_json(const std::vector<Proposal>& proposals) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Proposal& p : proposals)
        arr.push_back({{"bbox", {p.bbox.x, p.bbox.y, p.bbox.w, p.bbox.h}},
                       {"score", p.score},
                       {"source_scale", p.source_scale}});
    return arr.dump(2) + "\n";
}

std::vector<Proposal> proposals_from_json(const std::string& text) {
    nlohmann::json arr;
    try {
        arr = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolViolationError(std::string("proposals JSON parse error: ") + e.what());
    }
    if (!arr.is_array()) throw ProtocolViolationError("proposals JSON must be an array");
    std::vector<Proposal> out;
    for (const auto& j : arr) {
        if (!j.contains("bbox") || !j.at("bbox").is_array() || j.at("bbox").size() != 4 ||
            !j.contains("score"))
            throw ProtocolViolationError("proposal entry missing bbox[4] or score");
        Proposal p;
        p.bbox = Rect{j.at("bbox").at(0).get<double>(), j.at("bbox").at(1).get<double>(),
                      j.at("bbox").at(2).get<double>(), j.at("bbox").at(3).get<double>()};
        p.score = j.at("score").get<double>();
        p.source_scale = j.value("source_scale", 1.0);
        if (!(p.bbox.w > 0.0) || !(p.bbox.h > 0.0) || !std::isfinite(p.score))
            throw ProtocolViolationError("proposal entry has invalid geometry or score");
        out.push_back(p);
    }
    return out;
}

std::string scales_to_json(const ScaleSet& scales) {
    nlohmann::json j;
    j["scales"] = scales.scales;
    return j.dump() + "\n";
}

std::vector<Proposal> external_propose(const std::string& exe, const Scene& scene,
                                       const ScaleSet& scales, const std::string& work_dir) {
    std::string scene_path = work_dir + "/scene.json";
    std::string scales_path = work_dir + "/scales.json";
    std::string out_path = work_dir + "/proposals.json";
    std::string err_path = work_dir + "/proposer.stderr";
    write_coco({scene}, scene_path);
    write_text_file_atomic(scales_path, scales_to_json(scales));

    std::string cmd = "'" + exe + "' '" + scene_path + "' '" + scales_path + "' '" + out_path +
                      "' 2>'" + err_path + "'";
    int status = std::system(cmd.c_str());
    if (status != 0) {
        std::string stderr_text;
        try {
            stderr_text = read_text_file(err_path);
        } catch (const IoError&) {
        }
        throw Error("external proposer exited with status " + std::to_string(status) +
                    (stderr_text.empty() ? "" : ("; stderr: " + stderr_text)));
    }
    return proposals_from_json(read_text_file(out_path));
}

}  // namespace sgp
