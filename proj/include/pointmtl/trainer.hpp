#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "pointmtl/dataset.hpp"
#include "pointmtl/model.hpp"
#include "pointmtl/objectives.hpp"
#include "pointmtl/parameter_store.hpp"

namespace pointmtl {

struct TrainConfig {
    double lr = 0.003;
    double lr_decay = 0.8;
    int64_t lr_period = 50;  // epochs between decays
    int64_t batch_size = 40;
    int64_t epochs = 500;
    uint64_t seed = 1;
    LossWeights weights;
    ModelConfig model;
    AugmentConfig augment;

    void validate() const;
    // Learning rate for a 0-based epoch index: lr * decay^(epoch / period).
    double lr_at(int64_t epoch) const;

    static TrainConfig desk_preset();
};

// Structural fingerprint checked when loading checkpoints: everything that
// shapes the parameter store or the training trajectory, except the epoch
// count (so a run may be resumed with a longer schedule).
uint64_t config_hash(const TrainConfig& cfg);

struct EpochMetrics {
    int64_t epoch = 0;  // 0-based
    double loss = 0.0;
    double kmeans = 0.0;
    double cross_entropy = 0.0;
    double chamfer = 0.0;
    int64_t nonempty_clusters = 0;
    double nmi = -1.0;  // against shape labels; -1 when unavailable
};

struct TrainState {
    ParameterStore params;
    ClusterState clusters;
    int64_t epoch = 0;  // completed epochs
    uint64_t root_seed = 0;
    std::vector<EpochMetrics> history;
};

// Clouds after preprocessing: sampled to cfg.model.m points and unit-sphere
// normalized, grouped by split.
struct WorkingSet {
    std::vector<PointCloud> train, val, test;
    std::vector<std::string> train_ids, val_ids, test_ids;
    std::vector<std::string> category_names;
};

WorkingSet preprocess(const Dataset& dataset, const TrainConfig& cfg);

// k_ub clouds chosen uniformly at random, encoded with the freshly initialized
// encoder in eval mode without augmentation; their shape features become the
// initial centroids.
ClusterState init_centroids(const std::vector<PointCloud>& clouds, const ModelConfig& cfg,
                            ParameterStore& params, Rng& rng);

// Observer invoked after each mini-batch; used by verification to check that
// the centroid matrix stays frozen within an epoch.
using BatchHook = std::function<void(size_t batch_index, const ClusterState& clusters)>;

// One full pass: per mini-batch augment, encode, assign against the frozen
// centroids, classify, decode, apply one Adam step; after the last batch the
// accumulated features update the centroids (empty clusters keep theirs).
EpochMetrics train_epoch(TrainState& state, const std::vector<PointCloud>& train_clouds,
                         const TrainConfig& cfg, const BatchHook& batch_hook = {});

struct FitOptions {
    std::filesystem::path checkpoint_path;  // empty disables checkpointing
    std::optional<std::filesystem::path> resume_from;
    bool verbose = false;
};

TrainState fit(const WorkingSet& working, const TrainConfig& cfg, const FitOptions& opts = {});

void checkpoint_save(const std::filesystem::path& path, const TrainState& state,
                     const TrainConfig& cfg);
TrainState checkpoint_load(const std::filesystem::path& path, const TrainConfig& cfg);

void write_metrics_log(const std::filesystem::path& path, const std::vector<EpochMetrics>& history);

}  // namespace pointmtl
