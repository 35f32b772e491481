#include "sgp/dataset_io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sgp/error.hpp"

namespace sgp {

using nlohmann::json;

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file_atomic(const std::string& path, const std::string& content) {
    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp);
        out << content;
        if (!out.good()) throw IoError("write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename to " + path + " failed: " + ec.message());
}

void write_coco(const std::vector<Scene>& scenes, const std::string& path) {
    json images = json::array();
    json annotations = json::array();
    long long ann_id = 1;
    long long next_id = 0;
    for (const Scene& scene : scenes) {
        long long image_id = next_id++;
        try {
            image_id = std::stoll(scene.image_id);
        } catch (const std::exception&) {
        }
        char name[32];
        std::snprintf(name, sizeof(name), "synth_%06lld.png", image_id);
        images.push_back({{"id", image_id},
                          {"width", static_cast<int>(scene.viewport.w)},
                          {"height", static_cast<int>(scene.viewport.h)},
                          {"file_name", name}});
        for (const Annotation& a : scene.annotations) {
            annotations.push_back({{"id", ann_id++},
                                   {"image_id", image_id},
                                   {"bbox", {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h}},
                                   {"area", a.area},
                                   {"iscrowd", 0},
                                   {"category_id", 1}});
        }
    }
    json doc = {{"images", images},
                {"annotations", annotations},
                {"categories", json::array({{{"id", 1}, {"name", "product"}}})}};
    write_text_file_atomic(path, doc.dump(2) + "\n");
}

std::vector<Scene> read_coco(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw IoError("malformed COCO JSON in " + path + ": " + e.what());
    }

    std::vector<Scene> scenes;
    std::vector<long long> ids;
    for (const auto& img : doc.at("images")) {
        Scene s;
        long long id = img.at("id").get<long long>();
        s.image_id = std::to_string(id);
        s.viewport = Rect{0.0, 0.0, img.at("width").get<double>(), img.at("height").get<double>()};
        ids.push_back(id);
        scenes.push_back(std::move(s));
    }
    for (const auto& ann : doc.at("annotations")) {
        long long image_id = ann.at("image_id").get<long long>();
        auto it = std::find(ids.begin(), ids.end(), image_id);
        if (it == ids.end())
            throw IoError("annotation references unknown image " + std::to_string(image_id));
        const auto& b = ann.at("bbox");
        Annotation a;
        a.bbox = Rect{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                      b.at(3).get<double>()};
        a.area = ann.value("area", a.bbox.area());
        a.object_id = std::to_string(ann.at("id").get<long long>());
        a.image_id = std::to_string(image_id);
        scenes[static_cast<std::size_t>(it - ids.begin())].annotations.push_back(std::move(a));
    }
    return scenes;
}

std::vector<std::string> manifest_split_ids(const std::string& manifest_path,
                                            const std::string& split) {
    json doc = json::parse(read_text_file(manifest_path));
    std::vector<std::string> ids;
    for (const auto& img : doc.at("images"))
        if (img.at("split").get<std::string>() == split)
            ids.push_back(std::to_string(img.at("id").get<long long>()));
    return ids;
}

}  // namespace sgp
