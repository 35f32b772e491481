#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgp/geometry.hpp"
#include "sgp/rng.hpp"

namespace sgp {

struct ProductModel {
    std::string id;
    double width = 0.0;   // world units; slot width is 1
    double height = 0.0;  // world units
    int depth_rank = 0;   // 0 = front row
};

struct SceneConfig {
    double proximity = 0.5;
    double mu = 0.9;  // minimum visible fraction for a kept annotation
    double nu = 1.0;  // camera distance as a fraction of d_max
    int shelf_count = 3;
    int slots_per_shelf = 12;
    int depth_rows = 2;
    std::uint64_t rng_seed = 0;
    int max_rejection_attempts = 100;
    // Literal sample-then-reject placement instead of slot construction.
    bool rejection_mode = false;
};

struct Annotation {
    Rect bbox;  // pixels, clipped to the viewport
    double area = 0.0;
    std::string object_id;
    std::string image_id;
};

struct Placement {
    ProductModel product;
    int shelf = 0;
    int slot = 0;
    Rect world;   // shelf coordinates, y up
    Rect pixel;   // projected, unclipped
    double appearance_jitter = 0.0;  // lighting/material stand-in, unused by geometry
};

struct DroppedAnnotation {
    Annotation annotation;
    double occlusion = 0.0;
};

struct Scene {
    std::string image_id;
    Rect viewport;
    std::vector<Placement> placements;
    std::vector<Annotation> annotations;       // visibility-filtered
    std::vector<DroppedAnnotation> occluded_out;
    int skipped_products = 0;
};

struct SlotPlacement {
    ProductModel product;
    int slot = 0;
};

// One depth row of one shelf. Groups are placed one by one: the first product
// of a group takes a free anchor slot; each later product goes next to the
// group's occupied run with probability cfg.proximity, otherwise to a uniform
// free slot. Products that find no free slot are skipped and counted.
std::vector<SlotPlacement> arrange_shelf(const std::vector<std::vector<ProductModel>>& groups,
                                         const SceneConfig& cfg, Rng& rng,
                                         int* skipped = nullptr);

// Fraction of the target rectangle covered by the union of strictly nearer
// occluders, exact via rectangle-union sweep.
double occlusion_ratio(const Rect& target, const std::vector<Rect>& occluders);

std::vector<ProductModel> make_catalog(int n, Rng& rng);

Scene render_scene(const SceneConfig& cfg, const std::vector<ProductModel>& catalog, Rng& rng);

struct DatasetPaths {
    std::string coco_json;
    std::string manifest_json;
};

// Renders images_per_config scenes for every config and writes a COCO-style
// annotation file plus a manifest (grid, per-scene seeds, train/val split).
DatasetPaths generate_dataset(const std::vector<SceneConfig>& grid, int images_per_config,
                              const std::string& out_dir, std::uint64_t master_seed,
                              double train_fraction = 3307.0 / 5000.0);

// Default 5x5 grid of (mu, nu) settings.
std::vector<SceneConfig> default_config_grid(double proximity, std::uint64_t seed);

}  // namespace sgp
