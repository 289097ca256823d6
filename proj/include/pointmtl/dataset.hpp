#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pointmtl/geometry.hpp"

namespace pointmtl {

enum class Split { Train, Val, Test };

Split split_from_string(const std::string& token);
std::string to_string(Split split);

struct Dataset {
    std::vector<PointCloud> clouds;
    std::vector<std::string> ids;            // manifest-relative path per cloud
    std::vector<Split> splits;               // one per cloud
    std::vector<std::string> category_names; // shape_label -> name

    size_t size() const { return clouds.size(); }
    std::vector<size_t> split_indices(Split s) const;
};

// Manifest: one record per line, tab-separated:
//   <relpath> <category> <train|val|test> [<labelpath>]
// Point file: ASCII, one point per line, three floats plus an optional integer
// part label.
Dataset load_dataset(const std::filesystem::path& root, const std::filesystem::path& manifest);

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud);

struct ManifestRecord {
    std::string relpath;
    std::string category;
    Split split;
};

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

}  // namespace pointmtl
