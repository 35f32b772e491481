#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sgp/dataset_io.hpp"
#include "sgp/error.hpp"
#include "sgp/eval.hpp"
#include "sgp/kernels.hpp"
#include "sgp/predictor.hpp"
#include "sgp/proposer.hpp"
#include "sgp/scale_math.hpp"
#include "sgp/scenegen.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using nlohmann::json;
using Clock = std::chrono::steady_clock;

// Exit codes: 0 success, 2 usage, 3 IO, 4 external-proposer protocol.
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitProtocol = 4;

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    json cfg = json::parse(sgp::read_text_file(path));
    if (!cfg.is_object()) throw sgp::IoError("config file must hold a JSON object");
    return cfg;
}

// Precedence: flags > config file > defaults.
template <typename T>
void config_override(const CLI::App& app, const json& cfg, const std::string& flag,
                     const std::string& key, T& value) {
    if (app.count(flag) == 0 && cfg.contains(key)) value = cfg.at(key).get<T>();
}

struct ManifestWriter {
    std::string command;
    json config = json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    Clock::time_point start = Clock::now();

    // Written atomically, last, so a manifest's presence implies a complete run.
    void write(const std::string& out_dir) {
        json j = {{"command", command},
                  {"tool_version", kVersion},
                  {"config", config},
                  {"inputs", inputs},
                  {"outputs", outputs},
                  {"wall_clock_seconds",
                   std::chrono::duration<double>(Clock::now() - start).count()}};
        sgp::write_text_file_atomic(out_dir + "/run_manifest.json", j.dump(2) + "\n");
    }
};

std::vector<sgp::Scene> load_scenes(const std::string& dataset, const std::string& manifest,
                                    const std::string& split) {
    auto scenes = sgp::read_coco(dataset);
    if (manifest.empty() || split.empty()) return scenes;
    auto ids = sgp::manifest_split_ids(manifest, split);
    std::vector<sgp::Scene> filtered;
    for (auto& s : scenes)
        if (std::find(ids.begin(), ids.end(), s.image_id) != ids.end())
            filtered.push_back(std::move(s));
    return filtered;
}

int cmd_gen(const CLI::App& app, const json& cfg, std::vector<double> mu_grid,
            std::vector<double> nu_grid, double proximity, int images_per_config,
            std::uint64_t seed, std::string out_dir) {
    config_override(app, cfg, "--mu-grid", "mu_grid", mu_grid);
    config_override(app, cfg, "--nu-grid", "nu_grid", nu_grid);
    config_override(app, cfg, "--proximity", "proximity", proximity);
    config_override(app, cfg, "--images-per-config", "images_per_config", images_per_config);
    config_override(app, cfg, "--seed", "seed", seed);
    config_override(app, cfg, "--out", "out", out_dir);

    ManifestWriter manifest;
    manifest.command = "gen";
    manifest.config = {{"mu_grid", mu_grid},
                       {"nu_grid", nu_grid},
                       {"proximity", proximity},
                       {"images_per_config", images_per_config},
                       {"seed", seed}};

    std::vector<sgp::SceneConfig> grid;
    for (double mu : mu_grid)
        for (double nu : nu_grid) {
            sgp::SceneConfig c;
            c.mu = mu;
            c.nu = nu;
            c.proximity = proximity;
            c.rng_seed = seed;
            grid.push_back(c);
        }
    auto paths = sgp::generate_dataset(grid, images_per_config, out_dir, seed);
    manifest.outputs = {paths.coco_json, paths.manifest_json};
    manifest.write(out_dir);
    std::cout << "wrote " << paths.coco_json << " (" << grid.size() << " configs x "
              << images_per_config << " images)\n";
    return 0;
}

int cmd_gtdist(const CLI::App& app, const json& cfg, std::string dataset, std::string out_dir) {
    config_override(app, cfg, "--dataset", "dataset", dataset);
    config_override(app, cfg, "--out", "out", out_dir);

    ManifestWriter manifest;
    manifest.command = "gtdist";
    manifest.config = {{"dataset", dataset}};
    manifest.inputs = {dataset};

    sgp::ScaleConfig scale_cfg;
    auto scenes = sgp::read_coco(dataset);
    int written = 0, skipped = 0;
    for (const sgp::Scene& scene : scenes) {
        if (scene.annotations.empty()) {
            std::cerr << "warning: image " << scene.image_id << " has no annotations, skipped\n";
            ++skipped;
            continue;
        }
        std::vector<sgp::ObjectSize> sizes;
        for (const sgp::Annotation& a : scene.annotations)
            sizes.emplace_back(std::max(a.bbox.w, a.bbox.h), scale_cfg);
        auto dist = sgp::ground_truth_distribution(sizes, scale_cfg);
        std::string path = out_dir + "/" + scene.image_id + ".dist.json";
        sgp::write_text_file_atomic(path, dist.to_json() + "\n");
        manifest.outputs.push_back(path);
        ++written;
    }
    manifest.write(out_dir);
    std::cout << "wrote " << written << " distributions (" << skipped << " empty images skipped)\n";
    return 0;
}

int cmd_train(const CLI::App& app, const json& cfg, std::string dataset, std::string manifest_path,
              std::string split, std::string sampling, int epochs, double lr, int batch,
              std::uint64_t seed, std::string out_dir) {
    config_override(app, cfg, "--dataset", "dataset", dataset);
    config_override(app, cfg, "--manifest", "manifest", manifest_path);
    config_override(app, cfg, "--split", "split", split);
    config_override(app, cfg, "--sampling", "sampling", sampling);
    config_override(app, cfg, "--epochs", "epochs", epochs);
    config_override(app, cfg, "--lr", "lr", lr);
    config_override(app, cfg, "--batch-size", "batch_size", batch);
    config_override(app, cfg, "--seed", "seed", seed);
    config_override(app, cfg, "--out", "out", out_dir);

    ManifestWriter manifest;
    manifest.command = "train";
    manifest.config = {{"dataset", dataset}, {"manifest", manifest_path}, {"split", split},
                       {"sampling", sampling}, {"epochs", epochs},       {"lr", lr},
                       {"batch_size", batch}, {"seed", seed}};
    manifest.inputs = {dataset};

    sgp::ScaleConfig scale_cfg;
    sgp::FeatureConfig feat_cfg;
    auto scenes = load_scenes(dataset, manifest_path, split);
    std::vector<sgp::TrainExample> examples;
    for (const sgp::Scene& scene : scenes) {
        if (scene.annotations.empty()) continue;
        std::vector<sgp::ObjectSize> sizes;
        for (const sgp::Annotation& a : scene.annotations)
            sizes.emplace_back(std::max(a.bbox.w, a.bbox.h), scale_cfg);
        examples.push_back({sgp::featurize(scene, feat_cfg),
                            sgp::ground_truth_distribution(sizes, scale_cfg),
                            static_cast<int>(scene.annotations.size())});
    }
    if (examples.empty()) throw sgp::Error("train: no usable images in dataset");

    sgp::TrainConfig train_cfg;
    train_cfg.epochs = epochs;
    train_cfg.learning_rate = lr;
    train_cfg.batch_size = batch;
    train_cfg.rng_seed = seed;
    train_cfg.sampling_mode = sampling == "per-image" ? sgp::SamplingMode::per_image
                                                      : sgp::SamplingMode::per_annotation;
    auto initial = sgp::init_params(scale_cfg, feat_cfg.feat_dim, 64, 64, seed);
    auto result = sgp::train(examples, train_cfg, initial);

    std::string params_path = out_dir + "/params.json";
    std::string loss_path = out_dir + "/loss.csv";
    sgp::write_text_file_atomic(params_path, result.params.to_json() + "\n");
    sgp::write_text_file_atomic(loss_path, result.loss_trace_csv());
    manifest.outputs = {params_path, loss_path};
    manifest.write(out_dir);
    std::cout << "trained on " << examples.size() << " images, final loss "
              << result.loss_trace.back() << " (kernels: " << sgp::kernels::active_name()
              << ")\n";
    return 0;
}

int cmd_run(const CLI::App& app, const json& cfg, std::string dataset, std::string manifest_path,
            std::string split, std::string mode_name, int h, double lambda,
            std::string params_path, std::string external, std::uint64_t seed,
            std::string out_dir) {
    config_override(app, cfg, "--dataset", "dataset", dataset);
    config_override(app, cfg, "--manifest", "manifest", manifest_path);
    config_override(app, cfg, "--split", "split", split);
    config_override(app, cfg, "--mode", "mode", mode_name);
    config_override(app, cfg, "--h", "h", h);
    config_override(app, cfg, "--lambda", "lambda", lambda);
    config_override(app, cfg, "--params", "params", params_path);
    config_override(app, cfg, "--external-proposer", "external_proposer", external);
    config_override(app, cfg, "--seed", "seed", seed);
    config_override(app, cfg, "--out", "out", out_dir);

    ManifestWriter manifest;
    manifest.command = "run";
    manifest.config = {{"dataset", dataset}, {"manifest", manifest_path},
                       {"split", split},     {"mode", mode_name},
                       {"h", h},             {"lambda", lambda},
                       {"params", params_path}, {"external_proposer", external},
                       {"seed", seed}};
    manifest.inputs = {dataset};

    sgp::PipelineConfig pipe;
    pipe.h = h;
    pipe.lambda = lambda;
    if (mode_name == "guided-gt") {
        pipe.mode = sgp::PipelineMode::guided_gt;
    } else if (mode_name == "guided-pred") {
        pipe.mode = sgp::PipelineMode::guided_predictor;
    } else if (mode_name == "exhaustive") {
        pipe.mode = sgp::PipelineMode::exhaustive;
    } else {
        throw CLI::ValidationError("--mode", "must be guided-gt, guided-pred or exhaustive");
    }
    std::optional<sgp::PredictorParams> params;
    if (pipe.mode == sgp::PipelineMode::guided_predictor) {
        if (params_path.empty())
            throw sgp::MissingPredictorError("run: guided-pred requires --params");
        params = sgp::PredictorParams::from_json(sgp::read_text_file(params_path));
        pipe.params = &*params;
        manifest.inputs.push_back(params_path);
    }
    if (!external.empty()) {
        pipe.external_proposer = external;
        pipe.work_dir = out_dir;
        std::filesystem::create_directories(out_dir);
    }

    auto scenes = load_scenes(dataset, manifest_path, split);
    json index = json::array();
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        sgp::Rng rng = sgp::Rng::stream(seed, static_cast<std::uint64_t>(i));
        auto proposals = sgp::run_pipeline(scenes[i], pipe, rng);
        std::string path = out_dir + "/proposals_" + scenes[i].image_id + ".json";
        sgp::write_text_file_atomic(path, sgp::proposals_to_json(proposals));
        index.push_back({{"image_id", scenes[i].image_id},
                         {"path", "proposals_" + scenes[i].image_id + ".json"},
                         {"count", proposals.size()}});
        manifest.outputs.push_back(path);
    }
    sgp::write_text_file_atomic(out_dir + "/proposals_index.json", index.dump(2) + "\n");
    manifest.outputs.push_back(out_dir + "/proposals_index.json");
    manifest.write(out_dir);
    std::cout << "ran " << mode_name << " on " << scenes.size() << " images\n";
    return 0;
}

int cmd_eval(const CLI::App& app, const json& cfg, std::string dataset,
             std::vector<std::string> methods, std::string out_prefix) {
    config_override(app, cfg, "--dataset", "dataset", dataset);
    config_override(app, cfg, "--method", "methods", methods);
    config_override(app, cfg, "--out", "out", out_prefix);

    ManifestWriter manifest;
    manifest.command = "eval";
    manifest.config = {{"dataset", dataset}, {"methods", methods}};
    manifest.inputs = {dataset};

    auto scenes = sgp::read_coco(dataset);
    std::map<std::string, std::map<std::string, std::vector<sgp::Proposal>>> by_method;
    for (const std::string& spec_str : methods) {
        auto eq = spec_str.find('=');
        if (eq == std::string::npos)
            throw CLI::ValidationError("--method", "expected name=proposals_dir");
        std::string name = spec_str.substr(0, eq);
        std::string dir = spec_str.substr(eq + 1);
        json index = json::parse(sgp::read_text_file(dir + "/proposals_index.json"));
        for (const auto& entry : index) {
            std::string image_id = entry.at("image_id").get<std::string>();
            std::string path = dir + "/" + entry.at("path").get<std::string>();
            by_method[name][image_id] = sgp::proposals_from_json(sgp::read_text_file(path));
        }
        manifest.inputs.push_back(dir);
    }

    auto report = sgp::evaluate(scenes, by_method);
    for (const auto& [k, v] : manifest.config.items()) report.config_echo[k] = v.dump();
    std::string report_path = out_prefix + "_report.json";
    sgp::write_text_file_atomic(report_path, report.to_json());
    auto curve_files = sgp::emit_curves(report, out_prefix);
    manifest.outputs = curve_files;
    manifest.outputs.push_back(report_path);

    std::filesystem::path prefix(out_prefix);
    std::string manifest_dir =
        prefix.has_parent_path() ? prefix.parent_path().string() : std::string(".");
    manifest.write(manifest_dir);
    for (const auto& [method, ar] : report.ar_micro) {
        std::cout << method << ":";
        for (std::size_t ki = 0; ki < report.ks.size(); ++ki)
            std::cout << " AR@" << report.ks[ki] << "=" << ar[ki];
        std::cout << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"scale-guided object proposal toolkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    int jobs = 1;
    app.add_option("--config", config_path, "JSON config file mirroring flag names");
    app.add_option("--jobs", jobs, "parallelism hint (currently single-threaded)");

    // gen
    auto* gen = app.add_subcommand("gen", "generate a synthetic shelf-scene dataset");
    std::vector<double> mu_grid{0.9, 0.8, 0.7, 0.6, 0.5};
    std::vector<double> nu_grid{1.0, 1.0 / 1.5, 1.0 / 2.0, 1.0 / 2.5, 1.0 / 3.0};
    double proximity = 0.5;
    int images_per_config = 200;
    std::string gen_out = "out";
    gen->add_option("--mu-grid", mu_grid, "occlusion thresholds");
    gen->add_option("--nu-grid", nu_grid, "camera distance ratios");
    gen->add_option("--proximity", proximity, "group placement proximity in [0,1]");
    gen->add_option("--images-per-config", images_per_config, "images per grid point");
    gen->add_option("--seed", seed, "master seed");
    gen->add_option("--out", gen_out, "output directory");

    // gtdist
    auto* gtdist = app.add_subcommand("gtdist", "ground-truth scale distributions per image");
    std::string gt_dataset, gt_out = "out";
    gtdist->add_option("--dataset", gt_dataset, "COCO-style dataset JSON");
    gtdist->add_option("--out", gt_out, "output directory");

    // train
    auto* train = app.add_subcommand("train", "train the scale-distribution predictor");
    std::string tr_dataset, tr_manifest, tr_split = "train", tr_sampling = "per-annotation";
    std::string tr_out = "out";
    int epochs = 100, batch = 8;
    double lr = 0.01;
    train->add_option("--dataset", tr_dataset, "COCO-style dataset JSON");
    train->add_option("--manifest", tr_manifest, "dataset manifest (for the split)");
    train->add_option("--split", tr_split, "split name from the manifest");
    train->add_option("--sampling", tr_sampling, "per-image or per-annotation")
        ->check(CLI::IsMember({"per-image", "per-annotation"}));
    train->add_option("--epochs", epochs, "training epochs");
    train->add_option("--lr", lr, "learning rate");
    train->add_option("--batch-size", batch, "minibatch size");
    train->add_option("--seed", seed, "training seed");
    train->add_option("--out", tr_out, "output directory");

    // run
    auto* run = app.add_subcommand("run", "generate proposals over a scale set");
    run->set_help_flag("--help", "print help");  // frees -h for the scale-count flag
    std::string rn_dataset, rn_manifest, rn_split, rn_mode = "guided-gt", rn_params, rn_external;
    std::string rn_out = "out";
    int h = 6;
    double lambda = 0.9;
    run->add_option("--dataset", rn_dataset, "COCO-style dataset JSON");
    run->add_option("--manifest", rn_manifest, "dataset manifest (for the split)");
    run->add_option("--split", rn_split, "split name from the manifest");
    run->add_option("--mode", rn_mode, "guided-gt, guided-pred or exhaustive");
    run->add_option("--h", h, "number of scales");
    run->add_option("--lambda", lambda, "smoothing exponent");
    run->add_option("--params", rn_params, "predictor params (guided-pred)");
    run->add_option("--external-proposer", rn_external, "external proposer executable");
    run->add_option("--seed", seed, "proposer seed");
    run->add_option("--out", rn_out, "output directory");

    // eval
    auto* eval = app.add_subcommand("eval", "recall/AR evaluation and plots");
    std::string ev_dataset, ev_out = "out/eval";
    std::vector<std::string> ev_methods;
    eval->add_option("--dataset", ev_dataset, "COCO-style dataset JSON");
    eval->add_option("--method", ev_methods, "name=proposals_dir (repeatable)");
    eval->add_option("--out", ev_out, "output path prefix");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        json cfg = load_config(config_path);
        if (gen->parsed())
            return cmd_gen(*gen, cfg, mu_grid, nu_grid, proximity, images_per_config, seed,
                           gen_out);
        if (gtdist->parsed()) return cmd_gtdist(*gtdist, cfg, gt_dataset, gt_out);
        if (train->parsed())
            return cmd_train(*train, cfg, tr_dataset, tr_manifest, tr_split, tr_sampling, epochs,
                             lr, batch, seed, tr_out);
        if (run->parsed())
            return cmd_run(*run, cfg, rn_dataset, rn_manifest, rn_split, rn_mode, h, lambda,
                           rn_params, rn_external, seed, rn_out);
        if (eval->parsed()) return cmd_eval(*eval, cfg, ev_dataset, ev_methods, ev_out);
    } catch (const CLI::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const sgp::ProtocolViolationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitProtocol;
    } catch (const sgp::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const sgp::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
