#include "sgp/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "sgp/dataset_io.hpp"
#include "sgp/error.hpp"

namespace sgp {

namespace {

constexpr double kViewportW = 640.0;
constexpr double kViewportH = 480.0;
constexpr double kShelfSpacing = 1.8;   // world units between shelf bases
constexpr double kDepthPeek = 0.5;      // vertical offset per depth row
constexpr double kMinWidth = 0.60, kMaxWidth = 0.95;
constexpr double kMinHeight = 0.80, kMaxHeight = 1.20;

std::vector<int> free_slots(const std::vector<bool>& occupied) {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(occupied.size()); ++i)
        if (!occupied[i]) out.push_back(i);
    return out;
}

}  // namespace

std::vector<SlotPlacement> arrange_shelf(const std::vector<std::vector<ProductModel>>& groups,
                                         const SceneConfig& cfg, Rng& rng, int* skipped) {
    if (cfg.slots_per_shelf <= 0) throw Error("arrange_shelf: shelf capacity must be positive");
    std::vector<bool> occupied(static_cast<std::size_t>(cfg.slots_per_shelf), false);
    std::vector<SlotPlacement> placements;
    int skip_count = 0;

    for (const auto& group : groups) {
        std::vector<int> group_slots;
        for (const ProductModel& product : group) {
            std::vector<int> free = free_slots(occupied);
            if (free.empty()) {
                ++skip_count;
                continue;
            }
            int slot;
            if (group_slots.empty()) {
                // Anchor slot for the group.
                slot = free[rng.uniform_index(free.size())];
            } else if (rng.bernoulli(cfg.proximity)) {
                // Next to the cluster: free slots adjacent to any member.
                std::vector<int> adjacent;
                for (int s : group_slots)
                    for (int n : {s - 1, s + 1})
                        if (n >= 0 && n < cfg.slots_per_shelf && !occupied[static_cast<std::size_t>(n)])
                            adjacent.push_back(n);
                std::sort(adjacent.begin(), adjacent.end());
                adjacent.erase(std::unique(adjacent.begin(), adjacent.end()), adjacent.end());
                slot = adjacent.empty() ? free[rng.uniform_index(free.size())]
                                        : adjacent[rng.uniform_index(adjacent.size())];
            } else {
                slot = free[rng.uniform_index(free.size())];
            }
            occupied[static_cast<std::size_t>(slot)] = true;
            group_slots.push_back(slot);
            placements.push_back({product, slot});
        }
    }
    if (skipped) *skipped += skip_count;
    return placements;
}

double occlusion_ratio(const Rect& target, const std::vector<Rect>& occluders) {
    if (target.area() <= 0.0) return 0.0;
    std::vector<Rect> clipped;
    clipped.reserve(occluders.size());
    for (const Rect& occ : occluders) {
        Rect inter = intersect(occ, target);
        if (inter.area() > 0.0) clipped.push_back(inter);
    }
    double covered = union_area(clipped);
    return std::clamp(covered / target.area(), 0.0, 1.0);
}

std::vector<ProductModel> make_catalog(int n, Rng& rng) {
    std::vector<ProductModel> catalog;
    catalog.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "prod_%03d", i);
        catalog.push_back({id, rng.uniform(kMinWidth, kMaxWidth),
                           rng.uniform(kMinHeight, kMaxHeight), 0});
    }
    return catalog;
}

namespace {

// Draw product groups from the catalog until they can overfill one shelf row.
std::vector<std::vector<ProductModel>> draw_groups(const std::vector<ProductModel>& catalog,
                                                   const SceneConfig& cfg, int depth, Rng& rng) {
    std::vector<std::vector<ProductModel>> groups;
    int total = 0;
    while (total < cfg.slots_per_shelf + 4) {
        const ProductModel& base = catalog[rng.uniform_index(catalog.size())];
        int k = rng.uniform_int(2, 8);  // group composition unspecified upstream
        std::vector<ProductModel> group(static_cast<std::size_t>(k), base);
        for (auto& p : group) p.depth_rank = depth;
        total += k;
        groups.push_back(std::move(group));
    }
    return groups;
}

// Literal sample-then-reject arrangement: continuous positions on the shelf,
// whole arrangements rejected while any two products overlap.
std::vector<SlotPlacement> arrange_shelf_rejection(
    const std::vector<std::vector<ProductModel>>& groups, const SceneConfig& cfg, Rng& rng,
    int* skipped, std::vector<double>* positions_out) {
    std::vector<const ProductModel*> flat;
    for (const auto& g : groups)
        for (const auto& p : g) flat.push_back(&p);
    // Cap the count so an overlap-free draw exists.
    std::size_t n = std::min(flat.size(), static_cast<std::size_t>(cfg.slots_per_shelf));
    double shelf_w = static_cast<double>(cfg.slots_per_shelf);

    std::vector<double> xs(n);
    for (int attempt = 0; attempt < cfg.max_rejection_attempts; ++attempt) {
        for (std::size_t i = 0; i < n; ++i)
            xs[i] = rng.uniform(0.0, shelf_w - flat[i]->width);
        bool overlap = false;
        for (std::size_t i = 0; i < n && !overlap; ++i)
            for (std::size_t j = i + 1; j < n && !overlap; ++j)
                overlap = xs[i] < xs[j] + flat[j]->width && xs[j] < xs[i] + flat[i]->width;
        if (!overlap) {
            if (skipped) *skipped += static_cast<int>(flat.size() - n);
            std::vector<SlotPlacement> out;
            for (std::size_t i = 0; i < n; ++i)
                out.push_back({*flat[i], static_cast<int>(xs[i])});
            if (positions_out) *positions_out = xs;
            return out;
        }
        // Shrink the arrangement when rejection keeps failing.
        if (attempt + 1 == cfg.max_rejection_attempts && n > 1) {
            --n;
            xs.resize(n);
            attempt = -1;
        }
    }
    if (skipped) *skipped += static_cast<int>(flat.size());
    return {};
}

}  // namespace

Scene render_scene(const SceneConfig& cfg, const std::vector<ProductModel>& catalog, Rng& rng) {
    if (catalog.empty()) throw Error("render_scene: catalog is empty");
    if (cfg.nu <= 0.0) throw Error("render_scene: nu must be positive");

    Scene scene;
    scene.viewport = Rect{0.0, 0.0, kViewportW, kViewportH};

    // Magnification: nu = 1 fits exactly one shelf width into the viewport.
    double shelf_world_w = static_cast<double>(cfg.slots_per_shelf);
    double mag = kViewportW / shelf_world_w / cfg.nu;
    double world_cx = shelf_world_w / 2.0;
    double world_cy = (static_cast<double>(cfg.shelf_count - 1) * kShelfSpacing +
                       kDepthPeek * static_cast<double>(cfg.depth_rows - 1) + kMaxHeight) /
                          2.0 +
                      0.0;

    for (int shelf = 0; shelf < cfg.shelf_count; ++shelf) {
        // Back rows first so the front row wins slot jitter independence; the
        // depth order of placements does not affect occlusion, which keys on
        // depth_rank only.
        for (int depth = 0; depth < cfg.depth_rows; ++depth) {
            auto groups = draw_groups(catalog, cfg, depth, rng);
            std::vector<double> xs;
            std::vector<SlotPlacement> row =
                cfg.rejection_mode
                    ? arrange_shelf_rejection(groups, cfg, rng, &scene.skipped_products, &xs)
                    : arrange_shelf(groups, cfg, rng, &scene.skipped_products);
            for (std::size_t i = 0; i < row.size(); ++i) {
                const SlotPlacement& sp = row[i];
                double w = sp.product.width;
                double x;
                if (cfg.rejection_mode) {
                    x = xs[i];
                } else {
                    double slack = 1.0 - w;
                    x = static_cast<double>(sp.slot) + slack / 2.0 +
                        rng.uniform(-0.4, 0.4) * slack;
                }
                double y = static_cast<double>(shelf) * kShelfSpacing +
                           static_cast<double>(depth) * kDepthPeek;
                Placement p;
                p.product = sp.product;
                p.shelf = shelf;
                p.slot = sp.slot;
                p.world = Rect{x, y, w, sp.product.height};
                p.appearance_jitter = rng.uniform();
                p.pixel = Rect{kViewportW / 2.0 + (p.world.x - world_cx) * mag,
                               kViewportH / 2.0 - (p.world.y + p.world.h - world_cy) * mag,
                               p.world.w * mag, p.world.h * mag};
                scene.placements.push_back(std::move(p));
            }
        }
    }

    // Visibility filter: occlusion by strictly nearer placements plus the
    // region outside the viewport, computed on unclipped projected boxes;
    // kept annotations are clipped afterwards.
    for (std::size_t i = 0; i < scene.placements.size(); ++i) {
        const Placement& p = scene.placements[i];
        std::vector<Rect> occluders;
        for (std::size_t j = 0; j < scene.placements.size(); ++j)
            if (j != i && scene.placements[j].product.depth_rank < p.product.depth_rank)
                occluders.push_back(scene.placements[j].pixel);
        const Rect& t = p.pixel;
        const Rect& v = scene.viewport;
        if (t.x < v.x) occluders.push_back(Rect{t.x, t.y, v.x - t.x, t.h});
        if (t.x2() > v.x2()) occluders.push_back(Rect{v.x2(), t.y, t.x2() - v.x2(), t.h});
        if (t.y < v.y) occluders.push_back(Rect{t.x, t.y, t.w, v.y - t.y});
        if (t.y2() > v.y2()) occluders.push_back(Rect{t.x, v.y2(), t.w, t.y2() - v.y2()});
        double occ = occlusion_ratio(p.pixel, occluders);

        Annotation a;
        a.bbox = intersect(p.pixel, scene.viewport);
        a.area = a.bbox.area();
        a.object_id = p.product.id + "#" + std::to_string(i);
        if (1.0 - occ >= cfg.mu) {
            if (a.area > 0.0) scene.annotations.push_back(std::move(a));
        } else {
            scene.occluded_out.push_back({std::move(a), occ});
        }
    }
    return scene;
}

std::vector<SceneConfig> default_config_grid(double proximity, std::uint64_t seed) {
    const double mus[] = {0.9, 0.8, 0.7, 0.6, 0.5};
    const double nus[] = {1.0, 1.0 / 1.5, 1.0 / 2.0, 1.0 / 2.5, 1.0 / 3.0};
    std::vector<SceneConfig> grid;
    for (double mu : mus)
        for (double nu : nus) {
            SceneConfig cfg;
            cfg.proximity = proximity;
            cfg.mu = mu;
            cfg.nu = nu;
            cfg.rng_seed = seed;
            grid.push_back(cfg);
        }
    return grid;
}

DatasetPaths generate_dataset(const std::vector<SceneConfig>& grid, int images_per_config,
                              const std::string& out_dir, std::uint64_t master_seed,
                              double train_fraction) {
    if (grid.empty()) throw Error("generate_dataset: empty config grid");
    if (images_per_config < 1) throw Error("generate_dataset: images_per_config must be >= 1");

    const int total = static_cast<int>(grid.size()) * images_per_config;
    const int train_total = static_cast<int>(std::lround(train_fraction * total));

    std::vector<Scene> scenes;
    nlohmann::json manifest_images = nlohmann::json::array();
    int train_assigned = 0;
    for (std::size_t ci = 0; ci < grid.size(); ++ci) {
        for (int k = 0; k < images_per_config; ++k) {
            int index = static_cast<int>(ci) * images_per_config + k;
            Rng rng = Rng::stream(master_seed, static_cast<std::uint64_t>(index));
            auto catalog = make_catalog(40, rng);
            Scene scene = render_scene(grid[ci], catalog, rng);
            scene.image_id = std::to_string(index);
            for (auto& a : scene.annotations) a.image_id = scene.image_id;

            // Stratified split: assigning in index order keeps the ratio exact
            // within every prefix, so every config contributes to both splits.
            int target = static_cast<int>(
                std::lround(train_fraction * static_cast<double>(index + 1)));
            bool is_train = train_assigned < target && train_assigned < train_total;
            if (is_train) ++train_assigned;

            manifest_images.push_back({{"id", index},
                                       {"config_index", ci},
                                       {"split", is_train ? "train" : "val"},
                                       {"n_annotations", scene.annotations.size()},
                                       {"n_occluded_out", scene.occluded_out.size()},
                                       {"skipped_products", scene.skipped_products}});
            scenes.push_back(std::move(scene));
        }
    }

    nlohmann::json grid_json = nlohmann::json::array();
    for (const SceneConfig& c : grid)
        grid_json.push_back({{"proximity", c.proximity},
                             {"mu", c.mu},
                             {"nu", c.nu},
                             {"shelf_count", c.shelf_count},
                             {"slots_per_shelf", c.slots_per_shelf},
                             {"depth_rows", c.depth_rows},
                             {"rejection_mode", c.rejection_mode},
                             {"max_rejection_attempts", c.max_rejection_attempts},
                             {"config_seed", c.rng_seed}});

    DatasetPaths paths{out_dir + "/dataset.json", out_dir + "/manifest.json"};
    write_coco(scenes, paths.coco_json);
    nlohmann::json manifest = {{"master_seed", master_seed},
                               {"images_per_config", images_per_config},
                               {"train_fraction", train_fraction},
                               {"seed_derivation", "stream(master_seed, image_index)"},
                               {"grid", grid_json},
                               {"images", manifest_images}};
    write_text_file_atomic(paths.manifest_json, manifest.dump(2) + "\n");
    return paths;
}

}  // namespace sgp
