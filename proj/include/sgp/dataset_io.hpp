#pragma once

#include <string>
#include <vector>

#include "sgp/scenegen.hpp"

namespace sgp {

// COCO-style annotation file: top-level "images", "annotations", "categories".
// Only the bounding-box subset is used; scenes read back carry annotations and
// a viewport but no placements.
void write_coco(const std::vector<Scene>& scenes, const std::string& path);
std::vector<Scene> read_coco(const std::string& path);

// Scene ids listed under the given split in a dataset manifest.
std::vector<std::string> manifest_split_ids(const std::string& manifest_path,
                                            const std::string& split);

std::string read_text_file(const std::string& path);
// Writes to a temp file in the same directory, then renames.
void write_text_file_atomic(const std::string& path, const std::string& content);

}  // namespace sgp
