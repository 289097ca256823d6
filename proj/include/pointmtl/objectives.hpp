#pragma once

#include <cstdint>
#include <vector>

#include "pointmtl/geometry.hpp"
#include "pointmtl/tensor.hpp"

namespace pointmtl {

struct LossWeights {
    double alpha = 0.005;  // clustering
    double beta = 1.0;     // classification
    double gamma = 500.0;  // reconstruction

    void validate() const;
};

struct TaskMask {
    bool clustering = true;
    bool classification = true;
    bool reconstruction = true;

    bool any() const { return clustering || classification || reconstruction; }
};

// K-means state: one centroid per cluster plus the epoch accumulators used for
// the end-of-epoch centroid update. Centroids are stored as rows (cluster k is
// row k of a K x d matrix).
struct ClusterState {
    int64_t k_ub = 0;
    int64_t dim = 0;
    std::vector<double> centroids;    // K x d row-major
    std::vector<int64_t> populations; // epoch accumulator, per cluster
    std::vector<double> sums;         // epoch accumulator, K x d

    static ClusterState make(int64_t k_ub, int64_t dim);
    void reset_accumulators();
    // Accumulates one feature vector under its assignment.
    void accumulate(int64_t cluster, const double* feature);
    // Mean of accumulated features per non-empty cluster; empty clusters keep
    // their previous centroid. Returns the non-empty cluster count.
    int64_t update_centroids();
    int64_t nonempty_count() const;
    const double* centroid(int64_t k) const { return centroids.data() + k * dim; }
};

struct AssignResult {
    std::vector<int64_t> assignments;  // per row of z
    Tensor loss;                       // mean squared distance to assigned centroid
};

// Nearest-centroid assignment (ties to the lowest index) with the centroid
// matrix held fixed: gradient flows only into z.
AssignResult assign_clusters(Tape& tape, const Tensor& z, const ClusterState& clusters);

// Cross-entropy of logits against hard cluster assignments used as constants.
Tensor pseudo_label_loss(Tape& tape, const Tensor& logits, const std::vector<int64_t>& assignments);

// Symmetric Chamfer distance between two point sets laid out as (M x 3) or
// flat (3M) tensors: half of (mean over a of the squared distance to its
// nearest point of b, plus the reverse). Differentiable w.r.t. both sets.
Tensor chamfer(Tape& tape, const Tensor& a, const Tensor& b);

// Reference O(M*M') double loop, no spatial acceleration.
double chamfer_bruteforce(std::span<const Point3> a, std::span<const Point3> b);

struct LossParts {
    Tensor kmeans;
    Tensor cross_entropy;
    Tensor chamfer;
};

// alpha*kmeans + beta*ce + gamma*chamfer over the enabled tasks. Masked parts
// contribute exactly zero and receive no gradient.
Tensor combined_loss(Tape& tape, const LossParts& parts, const LossWeights& weights,
                     const TaskMask& mask);

}  // namespace pointmtl
