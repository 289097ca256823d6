#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pointmtl/model.hpp"

namespace pointmtl {

// Row-major feature matrix.
struct FeatureMatrix {
    int64_t n = 0;
    int64_t d = 0;
    std::vector<double> data;

    const double* row(int64_t i) const { return data.data() + i * d; }
};

// Frozen shape features: eval-mode encoder, no augmentation, one cloud at a time.
FeatureMatrix extract_shape_features(const std::vector<PointCloud>& clouds,
                                     const ModelConfig& cfg, ParameterStore& params);

// Frozen per-point features, one (m x d_point) block per cloud.
std::vector<FeatureMatrix> extract_point_features(const std::vector<PointCloud>& clouds,
                                                  const ModelConfig& cfg, ParameterStore& params);

// Normalized mutual information 2*I/(Ha+Hb) with natural logs; 0 when both
// partitions are single-group.
double nmi(const std::vector<int>& a, const std::vector<int>& b);

struct ProbeResult {
    double accuracy = 0.0;
    std::map<int, double> per_class_accuracy;
    std::vector<std::vector<int64_t>> confusion;  // [truth][predicted]
    double instance_miou = -1.0;                  // segmentation probes only
    double category_miou = -1.0;
};

struct LinearProbeOptions {
    double l2 = 1e-3;
    double lr = 0.1;
    double tol = 1e-6;
    int64_t max_iters = 5000;
};

// One-vs-rest linear classifier with squared-hinge loss and L2 regularization,
// trained by full-batch gradient descent until the loss delta falls below tol.
ProbeResult linear_probe(const FeatureMatrix& train_feats, const std::vector<int>& train_labels,
                         const FeatureMatrix& test_feats, const std::vector<int>& test_labels,
                         const LinearProbeOptions& opts = {});

// Average-linkage agglomerative clustering under Euclidean distance; merge
// ties resolve to the smallest (i, j) pair. Output ids are compacted in order
// of each cluster's smallest member index.
std::vector<int> ahc_cluster(const FeatureMatrix& feats, int64_t n_clusters);

// Maps every cluster to its modal true label (ties toward the smaller label
// id) and scores the fraction of matching samples.
double majority_vote_accuracy(const std::vector<int>& clusters, const std::vector<int>& truth);

struct PointProbeOptions {
    double fraction = 0.05;  // fraction of training points that keep labels
    std::vector<int64_t> hidden_widths = {256, 512, 128};
    double lr = 0.003;
    int64_t iters = 400;
    int64_t batch_points = 512;
    uint64_t seed = 7;
};

struct PointProbeData {
    std::vector<FeatureMatrix> features;     // one block per cloud
    std::vector<std::vector<int>> labels;    // per-point part labels per cloud
};

// Per-point MLP probe trained on a label fraction of the train points;
// reports accuracy and mean IoU over the parts occurring in each shape
// (present in ground truth or prediction), averaged over instances and, when
// categories are supplied, over categories.
ProbeResult point_probe(const PointProbeData& train, const PointProbeData& test,
                        const std::vector<int>& test_categories, const PointProbeOptions& opts);

// Per-shape mean IoU over the parts present in ground truth or prediction.
double shape_miou(const std::vector<int>& truth, const std::vector<int>& predicted);

// Tab-separated export, one row per cloud: id, label, d_shape feature values
// with 17 significant digits.
void export_embeddings(const std::filesystem::path& path, const std::vector<std::string>& ids,
                       const std::vector<int>& labels, const FeatureMatrix& feats);

}  // namespace pointmtl
