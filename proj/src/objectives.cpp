#include "pointmtl/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace pointmtl {

void LossWeights::validate() const {
    if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
        throw_config("loss weights must be non-negative");
    }
    if (alpha == 0.0 && beta == 0.0 && gamma == 0.0) {
        throw_config("at least one loss weight must be positive");
    }
}

ClusterState ClusterState::make(int64_t k_ub, int64_t dim) {
    if (k_ub < 1 || dim < 1) throw_config("ClusterState: k_ub and dim must be positive");
    ClusterState s;
    s.k_ub = k_ub;
    s.dim = dim;
    s.centroids.assign(static_cast<size_t>(k_ub * dim), 0.0);
    s.populations.assign(static_cast<size_t>(k_ub), 0);
    s.sums.assign(static_cast<size_t>(k_ub * dim), 0.0);
    return s;
}

void ClusterState::reset_accumulators() {
    std::fill(populations.begin(), populations.end(), 0);
    std::fill(sums.begin(), sums.end(), 0.0);
}

void ClusterState::accumulate(int64_t cluster, const double* feature) {
    if (cluster < 0 || cluster >= k_ub) throw_validation("cluster id out of range");
    populations[static_cast<size_t>(cluster)] += 1;
    double* row = sums.data() + cluster * dim;
    for (int64_t i = 0; i < dim; ++i) row[i] += feature[i];
}

int64_t ClusterState::update_centroids() {
    int64_t nonempty = 0;
    for (int64_t k = 0; k < k_ub; ++k) {
        int64_t count = populations[static_cast<size_t>(k)];
        if (count == 0) continue;
        ++nonempty;
        double* c = centroids.data() + k * dim;
        const double* s = sums.data() + k * dim;
        for (int64_t i = 0; i < dim; ++i) c[i] = s[i] / static_cast<double>(count);
    }
    return nonempty;
}

int64_t ClusterState::nonempty_count() const {
    int64_t n = 0;
    for (int64_t c : populations) n += c > 0;
    return n;
}

AssignResult assign_clusters(Tape& tape, const Tensor& z, const ClusterState& clusters) {
    if (z.rank() != 2 || z.dim(1) != clusters.dim) {
        throw_dimension("assign_clusters: z " + shape_str(z.shape()) + " vs centroid dim " +
                        std::to_string(clusters.dim));
    }
    for (double v : z.value()) {
        if (!std::isfinite(v)) throw_numeric("assign_clusters: non-finite feature");
    }
    int64_t batch = z.dim(0), dim = clusters.dim, k_ub = clusters.k_ub;

    AssignResult result;
    result.assignments.resize(static_cast<size_t>(batch));
    Tensor loss = tape.make("kmeans_loss", Shape{}, {z});
    const double* zv = z.value().data();
    double total = 0.0;
    for (int64_t b = 0; b < batch; ++b) {
        const double* row = zv + b * dim;
        double best = std::numeric_limits<double>::infinity();
        int64_t best_k = 0;
        for (int64_t k = 0; k < k_ub; ++k) {
            const double* c = clusters.centroid(k);
            double d = 0.0;
            for (int64_t i = 0; i < dim; ++i) {
                double diff = row[i] - c[i];
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_k = k;
            }
        }
        result.assignments[static_cast<size_t>(b)] = best_k;
        total += best;
    }
    loss.data()[0] = total / static_cast<double>(batch);
    if (loss.requires_grad()) {
        // Centroids are fixed during assignment: only z receives gradient.
        std::vector<double> assigned(static_cast<size_t>(batch * dim));
        for (int64_t b = 0; b < batch; ++b) {
            const double* c = clusters.centroid(result.assignments[static_cast<size_t>(b)]);
            std::copy(c, c + dim, assigned.data() + b * dim);
        }
        loss.node()->backward = [batch, dim, assigned = std::move(assigned)](TensorNode& n) {
            TensorNode& nz = *n.inputs[0];
            if (!nz.requires_grad) return;
            nz.ensure_grad();
            double g = n.grad[0] * 2.0 / static_cast<double>(batch);
            for (size_t i = 0; i < nz.value.size(); ++i) {
                nz.grad[i] += g * (nz.value[i] - assigned[i]);
            }
        };
    }
    result.loss = loss;
    return result;
}

Tensor pseudo_label_loss(Tape& tape, const Tensor& logits,
                         const std::vector<int64_t>& assignments) {
    if (logits.rank() != 2 || logits.dim(0) != static_cast<int64_t>(assignments.size())) {
        throw_dimension("pseudo_label_loss: logits " + shape_str(logits.shape()) + " vs " +
                        std::to_string(assignments.size()) + " assignments");
    }
    int64_t k_ub = logits.dim(1);
    std::vector<double> onehot(logits.value().size(), 0.0);
    for (size_t b = 0; b < assignments.size(); ++b) {
        int64_t a = assignments[b];
        if (a < 0 || a >= k_ub) {
            throw_validation("pseudo_label_loss: assignment " + std::to_string(a) +
                             " out of range [0, " + std::to_string(k_ub) + ")");
        }
        onehot[b * static_cast<size_t>(k_ub) + static_cast<size_t>(a)] = 1.0;
    }
    Tensor targets = Tensor::from_data(logits.shape(), std::move(onehot));
    return softmax_cross_entropy(tape, logits, targets);
}

namespace {

void check_point_tensor(const char* what, const Tensor& t) {
    bool flat = t.rank() == 1 && t.dim(0) % 3 == 0 && t.dim(0) > 0;
    bool mat = t.rank() == 2 && t.dim(1) == 3 && t.dim(0) > 0;
    if (!flat && !mat) {
        throw_validation(std::string("chamfer: ") + what + " must be a non-empty (M x 3) set, got " +
                         shape_str(t.shape()));
    }
}

}  // namespace

Tensor chamfer(Tape& tape, const Tensor& a, const Tensor& b) {
    check_point_tensor("first argument", a);
    check_point_tensor("second argument", b);
    int64_t ma = a.numel() / 3, mb = b.numel() / 3;
    const Point3* pa = reinterpret_cast<const Point3*>(a.value().data());
    const Point3* pb = reinterpret_cast<const Point3*>(b.value().data());

    KdTree3 tree_a(std::span<const Point3>(pa, static_cast<size_t>(ma)));
    KdTree3 tree_b(std::span<const Point3>(pb, static_cast<size_t>(mb)));

    std::vector<int32_t> nn_ab(static_cast<size_t>(ma));  // nearest b for each a
    std::vector<int32_t> nn_ba(static_cast<size_t>(mb));  // nearest a for each b
    double sum_ab = 0.0, sum_ba = 0.0;
    for (int64_t i = 0; i < ma; ++i) {
        auto [idx, d] = tree_b.nearest(pa[i]);
        nn_ab[static_cast<size_t>(i)] = idx;
        sum_ab += d;
    }
    for (int64_t j = 0; j < mb; ++j) {
        auto [idx, d] = tree_a.nearest(pb[j]);
        nn_ba[static_cast<size_t>(j)] = idx;
        sum_ba += d;
    }
    Tensor loss = tape.make("chamfer", Shape{}, {a, b});
    loss.data()[0] = 0.5 * (sum_ab / static_cast<double>(ma) + sum_ba / static_cast<double>(mb));
    if (loss.requires_grad()) {
        loss.node()->backward = [ma, mb, nn_ab = std::move(nn_ab),
                                 nn_ba = std::move(nn_ba)](TensorNode& n) {
            TensorNode& na = *n.inputs[0];
            TensorNode& nb = *n.inputs[1];
            const double* av = na.value.data();
            const double* bv = nb.value.data();
            double g = n.grad[0];
            double wa = g / static_cast<double>(ma);  // 0.5 * 2 / ma
            double wb = g / static_cast<double>(mb);
            if (na.requires_grad) na.ensure_grad();
            if (nb.requires_grad) nb.ensure_grad();
            for (int64_t i = 0; i < ma; ++i) {
                int64_t j = nn_ab[static_cast<size_t>(i)];
                for (int64_t c = 0; c < 3; ++c) {
                    double diff = av[i * 3 + c] - bv[j * 3 + c];
                    if (na.requires_grad) na.grad[i * 3 + c] += wa * diff;
                    if (nb.requires_grad) nb.grad[j * 3 + c] -= wa * diff;
                }
            }
            for (int64_t j = 0; j < mb; ++j) {
                int64_t i = nn_ba[static_cast<size_t>(j)];
                for (int64_t c = 0; c < 3; ++c) {
                    double diff = bv[j * 3 + c] - av[i * 3 + c];
                    if (nb.requires_grad) nb.grad[j * 3 + c] += wb * diff;
                    if (na.requires_grad) na.grad[i * 3 + c] -= wb * diff;
                }
            }
        };
    }
    return loss;
}

double chamfer_bruteforce(std::span<const Point3> a, std::span<const Point3> b) {
    if (a.empty() || b.empty()) throw_validation("chamfer: empty point set");
    double sum_ab = 0.0;
    for (const auto& p : a) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : b) best = std::min(best, squared_distance(p, q));
        sum_ab += best;
    }
    double sum_ba = 0.0;
    for (const auto& q : b) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : a) best = std::min(best, squared_distance(q, p));
        sum_ba += best;
    }
    return 0.5 * (sum_ab / static_cast<double>(a.size()) + sum_ba / static_cast<double>(b.size()));
}

Tensor combined_loss(Tape& tape, const LossParts& parts, const LossWeights& weights,
                     const TaskMask& mask) {
    if (!mask.any()) throw_config("combined_loss: every task is masked off");
    Tensor total;
    auto add_part = [&](bool enabled, const Tensor& part, double weight, const char* name) {
        if (!enabled) return;
        if (!part.defined()) throw_state(std::string("combined_loss: missing ") + name + " part");
        Tensor weighted = scale(tape, part, weight);
        total = total.defined() ? add(tape, total, weighted) : weighted;
    };
    add_part(mask.clustering, parts.kmeans, weights.alpha, "kmeans");
    add_part(mask.classification, parts.cross_entropy, weights.beta, "cross-entropy");
    add_part(mask.reconstruction, parts.chamfer, weights.gamma, "chamfer");
    return total;
}

}  // namespace pointmtl
