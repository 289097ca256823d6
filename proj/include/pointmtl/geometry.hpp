#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pointmtl/errors.hpp"
#include "pointmtl/rng.hpp"

namespace pointmtl {

using Point3 = std::array<double, 3>;

struct PointCloud {
    std::vector<Point3> points;
    std::vector<int> part_labels;  // empty, or one id per point
    int shape_label = -1;          // -1 when absent
    bool degenerate = false;       // set when normalization hit an all-identical cloud

    size_t size() const { return points.size(); }
    bool has_parts() const { return !part_labels.empty(); }
};

// Exact k nearest neighbors per point, self excluded. Each row is sorted by
// ascending distance, ties by ascending index.
struct NeighborIndex {
    int64_t k = 0;
    std::vector<int32_t> ids;  // M x k row-major

    std::span<const int32_t> row(size_t i) const {
        return {ids.data() + static_cast<size_t>(k) * i, static_cast<size_t>(k)};
    }
    // Rows of a prefix index (smaller k) share the leading entries of this one.
    NeighborIndex prefix(int64_t k_small) const;
};

// Exact 3-d nearest-neighbor queries. Ties resolve to the lowest point index,
// matching the brute-force reference exactly.
class KdTree3 {
  public:
    explicit KdTree3(std::span<const Point3> pts);

    // Index and squared distance of the nearest point, optionally excluding one index.
    std::pair<int32_t, double> nearest(const Point3& q, int32_t exclude = -1) const;

    // k nearest as (squared distance, index), ascending.
    void knn(const Point3& q, int64_t k, int32_t exclude,
             std::vector<std::pair<double, int32_t>>& out) const;

  private:
    struct BuildNode {
        int32_t lo, hi;      // index range
        int32_t axis;        // -1 for leaf
        double split;
        int32_t left, right; // children, -1 for leaf
    };
    void build(int32_t lo, int32_t hi, int depth, int32_t node);
    template <typename Visit>
    void search(int32_t node, const Point3& q, double& bound, Visit&& visit) const;

    std::span<const Point3> pts_;
    std::vector<int32_t> order_;
    std::vector<BuildNode> nodes_;
};

double squared_distance(const Point3& a, const Point3& b);

// Centers the cloud and scales so the farthest point lies on the unit sphere.
// An all-identical cloud collapses to zeros with the degenerate flag set.
PointCloud normalize_unit_sphere(const PointCloud& cloud);

// m points drawn uniformly: without replacement when the cloud is large
// enough, with replacement otherwise. Part labels follow their points.
PointCloud sample_points(const PointCloud& cloud, size_t m, Rng& rng);

struct AugmentConfig {
    double noise_std = 0.01;
    double z_rot_deg = 180.0;
    double xy_rot_deg = 20.0;
};

struct AugmentResult {
    PointCloud noisy;  // encoder input
    PointCloud clean;  // reconstruction target: rotated but noise-free
};

// One random rotation (z in +-z_rot_deg, x and y in +-xy_rot_deg, applied z
// then y then x) produces `clean`; `noisy` adds i.i.d. Gaussian jitter per
// coordinate on top.
AugmentResult augment(const PointCloud& cloud, const AugmentConfig& cfg, Rng& rng);

// Row-major rotation matrix applying Rz first, then Ry, then Rx.
std::array<double, 9> rotation_zyx(double z_rad, double y_rad, double x_rad);

NeighborIndex knn(std::span<const Point3> points, int64_t k);
NeighborIndex knn_bruteforce(std::span<const Point3> points, int64_t k);

enum class SynthKind { Sphere, Cube, Cylinder, Torus };

SynthKind synth_kind_from_string(const std::string& name);
std::string to_string(SynthKind kind);

// Uniform surface samples, pre-noise and pre-normalization. Cylinders carry
// caps-vs-body part labels, cubes one-face-vs-rest.
PointCloud synth_surface(SynthKind kind, size_t m, Rng& rng);

// Surface samples plus optional Gaussian jitter, normalized to the unit sphere.
PointCloud synth_generate(SynthKind kind, size_t m, double noise_std, Rng& rng);

}  // namespace pointmtl
