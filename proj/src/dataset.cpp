#include "pointmtl/dataset.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace pointmtl {

Split split_from_string(const std::string& token) {
    if (token == "train") return Split::Train;
    if (token == "val") return Split::Val;
    if (token == "test") return Split::Test;
    throw_validation("unknown split token '" + token + "'");
}

std::string to_string(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    throw_validation("unknown split");
}

std::vector<size_t> Dataset::split_indices(Split s) const {
    std::vector<size_t> out;
    for (size_t i = 0; i < splits.size(); ++i) {
        if (splits[i] == s) out.push_back(i);
    }
    return out;
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    size_t start = 0;
    for (;;) {
        size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

std::vector<Point3> parse_point_file(const std::filesystem::path& path,
                                     std::vector<int>* inline_labels) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open point file " + path.string());
    std::vector<Point3> points;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        Point3 p;
        if (!(ls >> p[0] >> p[1] >> p[2])) {
            throw_parse("malformed point in " + path.string() + " at line " +
                        std::to_string(line_no));
        }
        int label;
        if (ls >> label) {
            inline_labels->push_back(label);
        }
        std::string trailing;
        if (ls >> trailing) {
            throw_parse("trailing tokens in " + path.string() + " at line " +
                        std::to_string(line_no));
        }
        points.push_back(p);
    }
    if (points.empty()) throw_parse("point file " + path.string() + " is empty");
    return points;
}

std::vector<int> parse_label_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw_io("cannot open label file " + path.string());
    std::vector<int> labels;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        int v;
        auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
        if (ec != std::errc{}) {
            throw_parse("malformed label in " + path.string() + " at line " +
                        std::to_string(line_no));
        }
        labels.push_back(v);
    }
    return labels;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& root, const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw_io("cannot open manifest " + manifest.string());

    Dataset ds;
    std::map<std::string, int> category_ids;
    std::set<std::string> seen_paths;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields = split_tabs(line);
        if (fields.size() < 3 || fields.size() > 4) {
            throw_parse("manifest " + manifest.string() + " line " + std::to_string(line_no) +
                        ": expected 3 or 4 tab-separated fields, got " +
                        std::to_string(fields.size()));
        }
        const std::string& relpath = fields[0];
        if (!seen_paths.insert(relpath).second) {
            throw_validation("manifest lists '" + relpath +
                             "' more than once; splits must be disjoint");
        }
        Split split = split_from_string(fields[2]);

        std::vector<int> inline_labels;
        PointCloud cloud;
        cloud.points = parse_point_file(root / relpath, &inline_labels);
        if (fields.size() == 4 && !fields[3].empty()) {
            cloud.part_labels = parse_label_file(root / fields[3]);
        } else if (!inline_labels.empty()) {
            cloud.part_labels = std::move(inline_labels);
        }
        if (cloud.has_parts() && cloud.part_labels.size() != cloud.points.size()) {
            throw_validation("part labels for '" + relpath + "' have length " +
                             std::to_string(cloud.part_labels.size()) + ", expected " +
                             std::to_string(cloud.points.size()));
        }
        auto [it, inserted] =
            category_ids.emplace(fields[1], static_cast<int>(ds.category_names.size()));
        if (inserted) ds.category_names.push_back(fields[1]);
        cloud.shape_label = it->second;

        ds.clouds.push_back(std::move(cloud));
        ds.ids.push_back(relpath);
        ds.splits.push_back(split);
    }
    if (ds.clouds.empty()) throw_validation("manifest " + manifest.string() + " lists no clouds");
    return ds;
}

void save_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
    std::ofstream out(path);
    if (!out) throw_io("cannot write point file " + path.string());
    char buf[128];
    for (size_t i = 0; i < cloud.points.size(); ++i) {
        const Point3& p = cloud.points[i];
        if (cloud.has_parts()) {
            std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g %d\n", p[0], p[1], p[2],
                          cloud.part_labels[i]);
        } else {
            std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
        }
        out << buf;
    }
    if (!out) throw_io("failed writing point file " + path.string());
}

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
    std::ofstream out(path);
    if (!out) throw_io("cannot write manifest " + path.string());
    for (const auto& r : records) {
        out << r.relpath << '\t' << r.category << '\t' << to_string(r.split) << '\n';
    }
    if (!out) throw_io("failed writing manifest " + path.string());
}

}  // namespace pointmtl
