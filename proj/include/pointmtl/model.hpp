#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pointmtl/geometry.hpp"
#include "pointmtl/objectives.hpp"
#include "pointmtl/parameter_store.hpp"
#include "pointmtl/tensor.hpp"

namespace pointmtl {

enum class Aggregation { Sum, Max };

Aggregation aggregation_from_string(const std::string& name);
std::string to_string(Aggregation agg);

struct ModelConfig {
    int64_t d_in = 3;
    int64_t m = 2048;                              // points per cloud
    std::vector<int64_t> k_list = {15, 20, 25};    // EdgeConv neighbor counts
    int64_t edge_width = 64;                       // width of each branch's shared MLP
    int64_t point_conv_width = 64;                 // 1x1 conv on the raw point
    std::vector<int64_t> stack_widths = {128, 256, 512};  // post-concat conv stack; last is the pre-pool width
    int64_t d_shape = 512;
    int64_t d_point = 1024;
    int64_t k_ub = 500;
    std::vector<int64_t> classifier_widths = {2048, 1024};  // hidden layers; output is k_ub
    std::vector<int64_t> decoder_widths = {2048, 1024};     // hidden layers; output is m*d_in
    double dropout_p = 0.5;
    Aggregation aggregation = Aggregation::Sum;
    TaskMask task_mask;

    int64_t pre_pool_width() const { return stack_widths.back(); }
    int64_t concat_width() const;
    void validate() const;

    // Everything scaled to 1/8 of the full-size layout: 256 points, k {8,12,16},
    // 64-d shape features, 128-d point features, 32 clusters.
    static ModelConfig desk_preset();
};

struct EncoderOutput {
    Tensor shape_features;   // B x d_shape, on tape
    Tensor prepool_features; // (B*M) x pre_pool_width, on tape
    // (B*M) x d_point rows [prepool || shape], detached; filled on request.
    std::vector<double> point_features;
};

// Creates every model parameter (deterministic given the rng) and the
// batch-norm running stats.
ParameterStore init_params(const ModelConfig& cfg, Rng& rng);

// Total scalar parameter count as a pure function of the configuration.
int64_t parameter_count(const ModelConfig& cfg);

// Graph convolution over a fixed neighbor index: applies the shared per-edge
// function h to [center || neighbor - center] rows and aggregates the k edges
// of each point by sum (or max).
Tensor edge_conv(Tape& tape, const Tensor& feats, const NeighborIndex& neighbors,
                 const std::function<Tensor(Tape&, const Tensor&)>& h,
                 Aggregation agg = Aggregation::Sum);

// Multi-scale encoder over a batch of clouds (each exactly cfg.m points).
// `graphs` holds one neighbor index per cloud computed with max(k_list)
// neighbors on the input coordinates. Batch norm for per-point layers runs
// over clouds x points, shape-level layers over clouds.
EncoderOutput encode_batch(Tape& tape, std::span<const PointCloud* const> clouds,
                           std::span<const NeighborIndex> graphs, const ModelConfig& cfg,
                           ParameterStore& params, Mode mode,
                           bool want_point_features = false);

// Single-cloud convenience wrapper; computes the neighbor graph internally.
EncoderOutput encode(Tape& tape, const PointCloud& cloud, const ModelConfig& cfg,
                     ParameterStore& params, Mode mode, bool want_point_features = false);

// Shape features -> logits over k_ub clusters. Hidden layers use
// batch-norm/ReLU/dropout; the rng feeds the dropout masks in train mode.
Tensor classify(Tape& tape, const Tensor& shape_features, const ModelConfig& cfg,
                ParameterStore& params, Mode mode, Rng& rng);

// Shape features -> B x (m * d_in) reconstructions.
Tensor decode(Tape& tape, const Tensor& shape_features, const ModelConfig& cfg,
              ParameterStore& params, Mode mode);

}  // namespace pointmtl
