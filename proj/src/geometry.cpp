#include "pointmtl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pointmtl/parallel.hpp"

namespace pointmtl {

double squared_distance(const Point3& a, const Point3& b) {
    double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

NeighborIndex NeighborIndex::prefix(int64_t k_small) const {
    if (k_small > k) throw_validation("NeighborIndex::prefix: requested k exceeds stored k");
    NeighborIndex p;
    p.k = k_small;
    size_t rows = ids.size() / static_cast<size_t>(k);
    p.ids.resize(rows * static_cast<size_t>(k_small));
    for (size_t r = 0; r < rows; ++r) {
        std::copy_n(ids.begin() + static_cast<int64_t>(r) * k, k_small,
                    p.ids.begin() + static_cast<int64_t>(r) * k_small);
    }
    return p;
}

// ---- KdTree3 ----

KdTree3::KdTree3(std::span<const Point3> pts) : pts_(pts) {
    order_.resize(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) order_[i] = static_cast<int32_t>(i);
    if (!pts.empty()) {
        nodes_.reserve(2 * pts.size() / 8 + 2);
        nodes_.push_back({});
        build(0, static_cast<int32_t>(pts.size()), 0, 0);
    }
}

void KdTree3::build(int32_t lo, int32_t hi, int depth, int32_t node) {
    constexpr int32_t kLeafSize = 8;
    if (hi - lo <= kLeafSize) {
        nodes_[node] = {lo, hi, -1, 0.0, -1, -1};
        return;
    }
    // Split on the widest axis; ties between equal coordinates are ordered by
    // index so construction is deterministic.
    double spread_max = -1.0;
    int axis = 0;
    for (int a = 0; a < 3; ++a) {
        double mn = pts_[order_[lo]][a], mx = mn;
        for (int32_t i = lo + 1; i < hi; ++i) {
            mn = std::min(mn, pts_[order_[i]][a]);
            mx = std::max(mx, pts_[order_[i]][a]);
        }
        if (mx - mn > spread_max) {
            spread_max = mx - mn;
            axis = a;
        }
    }
    int32_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](int32_t a, int32_t b) {
                         if (pts_[a][axis] != pts_[b][axis]) return pts_[a][axis] < pts_[b][axis];
                         return a < b;
                     });
    double split = pts_[order_[mid]][axis];
    int32_t left = static_cast<int32_t>(nodes_.size());
    nodes_.push_back({});
    int32_t right = static_cast<int32_t>(nodes_.size());
    nodes_.push_back({});
    nodes_[node] = {lo, hi, axis, split, left, right};
    build(lo, mid, depth + 1, left);
    build(mid, hi, depth + 1, right);
}

template <typename Visit>
void KdTree3::search(int32_t node, const Point3& q, double& bound, Visit&& visit) const {
    const BuildNode& n = nodes_[node];
    if (n.axis < 0) {
        for (int32_t i = n.lo; i < n.hi; ++i) visit(order_[i]);
        return;
    }
    double diff = q[n.axis] - n.split;
    int32_t near = diff < 0.0 ? n.left : n.right;
    int32_t far = diff < 0.0 ? n.right : n.left;
    search(near, q, bound, visit);
    // Equal squared distances may still improve the result through a lower
    // index, so prune only when strictly worse.
    if (diff * diff <= bound) search(far, q, bound, visit);
}

std::pair<int32_t, double> KdTree3::nearest(const Point3& q, int32_t exclude) const {
    if (pts_.empty()) throw_validation("KdTree3::nearest on empty point set");
    double best = std::numeric_limits<double>::infinity();
    int32_t best_idx = -1;
    double bound = best;
    search(0, q, bound, [&](int32_t idx) {
        if (idx == exclude) return;
        double d = squared_distance(pts_[idx], q);
        if (d < best || (d == best && idx < best_idx)) {
            best = d;
            best_idx = idx;
            bound = best;
        }
    });
    return {best_idx, best};
}

void KdTree3::knn(const Point3& q, int64_t k, int32_t exclude,
                  std::vector<std::pair<double, int32_t>>& out) const {
    out.clear();
    if (k <= 0) return;
    // Max-heap on (distance, index): the worst candidate sits on top.
    auto worse = [](const std::pair<double, int32_t>& a, const std::pair<double, int32_t>& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    };
    double bound = std::numeric_limits<double>::infinity();
    search(0, q, bound, [&](int32_t idx) {
        if (idx == exclude) return;
        double d = squared_distance(pts_[idx], q);
        std::pair<double, int32_t> cand{d, idx};
        if (out.size() < static_cast<size_t>(k)) {
            out.push_back(cand);
            std::push_heap(out.begin(), out.end(), worse);
            if (out.size() == static_cast<size_t>(k)) bound = out.front().first;
        } else if (worse(cand, out.front())) {
            std::pop_heap(out.begin(), out.end(), worse);
            out.back() = cand;
            std::push_heap(out.begin(), out.end(), worse);
            bound = out.front().first;
        }
    });
    std::sort_heap(out.begin(), out.end(), worse);
}

// ---- preprocessing ----

PointCloud normalize_unit_sphere(const PointCloud& cloud) {
    if (cloud.points.empty()) throw_validation("normalize_unit_sphere: empty cloud");
    for (const auto& p : cloud.points) {
        if (!std::isfinite(p[0]) || !std::isfinite(p[1]) || !std::isfinite(p[2])) {
            throw_validation("normalize_unit_sphere: non-finite coordinate");
        }
    }
    PointCloud out = cloud;
    bool all_identical = true;
    for (const auto& p : cloud.points) {
        if (p != cloud.points.front()) {
            all_identical = false;
            break;
        }
    }
    if (all_identical) {
        for (auto& p : out.points) p = {0.0, 0.0, 0.0};
        out.degenerate = true;
        return out;
    }
    double n = static_cast<double>(cloud.points.size());
    Point3 centroid{0.0, 0.0, 0.0};
    for (const auto& p : cloud.points) {
        centroid[0] += p[0];
        centroid[1] += p[1];
        centroid[2] += p[2];
    }
    centroid[0] /= n;
    centroid[1] /= n;
    centroid[2] /= n;
    double max_norm = 0.0;
    for (auto& p : out.points) {
        p[0] -= centroid[0];
        p[1] -= centroid[1];
        p[2] -= centroid[2];
        max_norm = std::max(max_norm, std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]));
    }
    if (max_norm == 0.0) {
        for (auto& p : out.points) p = {0.0, 0.0, 0.0};
        out.degenerate = true;
        return out;
    }
    for (auto& p : out.points) {
        p[0] /= max_norm;
        p[1] /= max_norm;
        p[2] /= max_norm;
    }
    return out;
}

PointCloud sample_points(const PointCloud& cloud, size_t m, Rng& rng) {
    if (m == 0) throw_validation("sample_points: requested zero points");
    if (cloud.points.empty()) throw_validation("sample_points: empty cloud");
    size_t M = cloud.points.size();
    std::vector<size_t> chosen;
    chosen.reserve(m);
    if (M >= m) {
        std::vector<size_t> idx(M);
        for (size_t i = 0; i < M; ++i) idx[i] = i;
        rng.shuffle(idx);
        chosen.assign(idx.begin(), idx.begin() + static_cast<int64_t>(m));
    } else {
        for (size_t i = 0; i < m; ++i) chosen.push_back(rng.uniform_index(M));
    }
    PointCloud out;
    out.shape_label = cloud.shape_label;
    out.degenerate = cloud.degenerate;
    out.points.reserve(m);
    if (cloud.has_parts()) out.part_labels.reserve(m);
    for (size_t i : chosen) {
        out.points.push_back(cloud.points[i]);
        if (cloud.has_parts()) out.part_labels.push_back(cloud.part_labels[i]);
    }
    return out;
}

std::array<double, 9> rotation_zyx(double z_rad, double y_rad, double x_rad) {
    double cz = std::cos(z_rad), sz = std::sin(z_rad);
    double cy = std::cos(y_rad), sy = std::sin(y_rad);
    double cx = std::cos(x_rad), sx = std::sin(x_rad);
    // R = Rx * Ry * Rz, row-major.
    std::array<double, 9> rz{cz, -sz, 0, sz, cz, 0, 0, 0, 1};
    std::array<double, 9> ry{cy, 0, sy, 0, 1, 0, -sy, 0, cy};
    std::array<double, 9> rx{1, 0, 0, 0, cx, -sx, 0, sx, cx};
    auto matmul3 = [](const std::array<double, 9>& a, const std::array<double, 9>& b) {
        std::array<double, 9> c{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int p = 0; p < 3; ++p) c[i * 3 + j] += a[i * 3 + p] * b[p * 3 + j];
        return c;
    };
    return matmul3(rx, matmul3(ry, rz));
}

AugmentResult augment(const PointCloud& cloud, const AugmentConfig& cfg, Rng& rng) {
    constexpr double deg = std::numbers::pi / 180.0;
    double z = rng.uniform(-cfg.z_rot_deg, cfg.z_rot_deg) * deg;
    double y = rng.uniform(-cfg.xy_rot_deg, cfg.xy_rot_deg) * deg;
    double x = rng.uniform(-cfg.xy_rot_deg, cfg.xy_rot_deg) * deg;
    std::array<double, 9> r = rotation_zyx(z, y, x);

    AugmentResult out;
    out.clean = cloud;
    for (auto& p : out.clean.points) {
        Point3 q;
        for (int i = 0; i < 3; ++i) q[i] = r[i * 3] * p[0] + r[i * 3 + 1] * p[1] + r[i * 3 + 2] * p[2];
        p = q;
    }
    out.noisy = out.clean;
    for (auto& p : out.noisy.points) {
        for (int i = 0; i < 3; ++i) p[i] += cfg.noise_std * rng.normal();
    }
    return out;
}

NeighborIndex knn(std::span<const Point3> points, int64_t k) {
    int64_t M = static_cast<int64_t>(points.size());
    if (k < 1) throw_validation("knn: k must be at least 1");
    if (k >= M) {
        throw_validation("knn: k=" + std::to_string(k) + " must be smaller than cloud size " +
                         std::to_string(M));
    }
    KdTree3 tree(points);
    NeighborIndex out;
    out.k = k;
    out.ids.resize(static_cast<size_t>(M * k));
    parallel_for(static_cast<size_t>(M), [&](size_t i) {
        std::vector<std::pair<double, int32_t>> found;
        tree.knn(points[i], k, static_cast<int32_t>(i), found);
        for (int64_t j = 0; j < k; ++j) out.ids[i * static_cast<size_t>(k) + j] = found[j].second;
    });
    return out;
}

NeighborIndex knn_bruteforce(std::span<const Point3> points, int64_t k) {
    int64_t M = static_cast<int64_t>(points.size());
    if (k < 1) throw_validation("knn: k must be at least 1");
    if (k >= M) {
        throw_validation("knn: k=" + std::to_string(k) + " must be smaller than cloud size " +
                         std::to_string(M));
    }
    NeighborIndex out;
    out.k = k;
    out.ids.resize(static_cast<size_t>(M * k));
    std::vector<std::pair<double, int32_t>> dists;
    dists.reserve(static_cast<size_t>(M - 1));
    for (int64_t i = 0; i < M; ++i) {
        dists.clear();
        for (int64_t j = 0; j < M; ++j) {
            if (j == i) continue;
            dists.emplace_back(squared_distance(points[i], points[j]), static_cast<int32_t>(j));
        }
        std::sort(dists.begin(), dists.end());
        for (int64_t j = 0; j < k; ++j) out.ids[static_cast<size_t>(i * k + j)] = dists[j].second;
    }
    return out;
}

// ---- synthetic shapes ----

SynthKind synth_kind_from_string(const std::string& name) {
    if (name == "sphere") return SynthKind::Sphere;
    if (name == "cube") return SynthKind::Cube;
    if (name == "cylinder") return SynthKind::Cylinder;
    if (name == "torus") return SynthKind::Torus;
    throw_validation("unknown shape kind '" + name + "'");
}

std::string to_string(SynthKind kind) {
    switch (kind) {
        case SynthKind::Sphere: return "sphere";
        case SynthKind::Cube: return "cube";
        case SynthKind::Cylinder: return "cylinder";
        case SynthKind::Torus: return "torus";
    }
    throw_validation("unknown shape kind");
}

PointCloud synth_surface(SynthKind kind, size_t m, Rng& rng) {
    if (m < 16) throw_validation("synth_surface: need at least 16 points");
    PointCloud out;
    out.points.reserve(m);
    switch (kind) {
        case SynthKind::Sphere: {
            for (size_t i = 0; i < m; ++i) {
                Point3 p{rng.normal(), rng.normal(), rng.normal()};
                double n = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
                if (n < 1e-12) {
                    p = {1.0, 0.0, 0.0};
                    n = 1.0;
                }
                out.points.push_back({p[0] / n, p[1] / n, p[2] / n});
            }
            break;
        }
        case SynthKind::Cube: {
            // Faces of [-1,1]^3 have equal area. Face 0 (z = +1) is the marked
            // part for segmentation probes.
            out.part_labels.reserve(m);
            for (size_t i = 0; i < m; ++i) {
                uint64_t face = rng.uniform_index(6);
                double u = rng.uniform(-1.0, 1.0);
                double v = rng.uniform(-1.0, 1.0);
                Point3 p;
                switch (face) {
                    case 0: p = {u, v, 1.0}; break;
                    case 1: p = {u, v, -1.0}; break;
                    case 2: p = {u, 1.0, v}; break;
                    case 3: p = {u, -1.0, v}; break;
                    case 4: p = {1.0, u, v}; break;
                    default: p = {-1.0, u, v}; break;
                }
                out.points.push_back(p);
                out.part_labels.push_back(face == 0 ? 1 : 0);
            }
            break;
        }
        case SynthKind::Cylinder: {
            // Radius 0.5, height 2. Lateral area 2*pi*r*h, caps 2*pi*r^2.
            constexpr double r = 0.5, h = 1.0;
            double lateral = 2.0 * std::numbers::pi * r * (2.0 * h);
            double caps = 2.0 * std::numbers::pi * r * r;
            double p_lateral = lateral / (lateral + caps);
            out.part_labels.reserve(m);
            for (size_t i = 0; i < m; ++i) {
                double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
                if (rng.uniform() < p_lateral) {
                    double z = rng.uniform(-h, h);
                    out.points.push_back({r * std::cos(phi), r * std::sin(phi), z});
                    out.part_labels.push_back(0);
                } else {
                    double rad = r * std::sqrt(rng.uniform());
                    double z = rng.uniform() < 0.5 ? h : -h;
                    out.points.push_back({rad * std::cos(phi), rad * std::sin(phi), z});
                    out.part_labels.push_back(1);
                }
            }
            break;
        }
        case SynthKind::Torus: {
            // Major radius 0.75, minor 0.3; rejection-sample the tube angle so
            // the surface density is uniform.
            constexpr double R = 0.75, r = 0.3;
            for (size_t i = 0; i < m; ++i) {
                double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
                double phi;
                for (;;) {
                    phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
                    if (rng.uniform() < (R + r * std::cos(phi)) / (R + r)) break;
                }
                double ring = R + r * std::cos(phi);
                out.points.push_back({ring * std::cos(theta), ring * std::sin(theta), r * std::sin(phi)});
            }
            break;
        }
    }
    return out;
}

PointCloud synth_generate(SynthKind kind, size_t m, double noise_std, Rng& rng) {
    PointCloud cloud = synth_surface(kind, m, rng);
    if (noise_std > 0.0) {
        for (auto& p : cloud.points) {
            for (int i = 0; i < 3; ++i) p[i] += noise_std * rng.normal();
        }
    }
    return normalize_unit_sphere(cloud);
}

}  // namespace pointmtl
