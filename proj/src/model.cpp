#include "pointmtl/model.hpp"

#include <algorithm>
#include <cmath>

namespace pointmtl {

Aggregation aggregation_from_string(const std::string& name) {
    if (name == "sum") return Aggregation::Sum;
    if (name == "max") return Aggregation::Max;
    throw_config("unknown aggregation '" + name + "' (expected sum or max)");
}

std::string to_string(Aggregation agg) { return agg == Aggregation::Sum ? "sum" : "max"; }

int64_t ModelConfig::concat_width() const {
    return static_cast<int64_t>(k_list.size()) * edge_width + d_in + point_conv_width;
}

void ModelConfig::validate() const {
    if (d_in != 3) throw_config("ModelConfig: only 3-d input points are supported");
    if (m < 4) throw_config("ModelConfig: m must be at least 4");
    if (k_list.empty()) throw_config("ModelConfig: k_list must not be empty");
    for (int64_t k : k_list) {
        if (k < 1 || k >= m) {
            throw_config("ModelConfig: every k must satisfy 1 <= k < m, got k=" +
                         std::to_string(k) + " with m=" + std::to_string(m));
        }
    }
    if (edge_width < 1 || point_conv_width < 1 || d_shape < 1 || k_ub < 1) {
        throw_config("ModelConfig: layer widths must be positive");
    }
    if (stack_widths.empty()) throw_config("ModelConfig: stack_widths must not be empty");
    for (int64_t w : stack_widths) {
        if (w < 1) throw_config("ModelConfig: stack widths must be positive");
    }
    if (d_point != pre_pool_width() + d_shape) {
        throw_config("ModelConfig: d_point (" + std::to_string(d_point) +
                     ") must equal pre-pool width + d_shape (" +
                     std::to_string(pre_pool_width() + d_shape) + ")");
    }
    if (dropout_p < 0.0 || dropout_p >= 1.0) {
        throw_config("ModelConfig: dropout_p must be in [0, 1)");
    }
    if (!task_mask.any()) {
        throw_config("ModelConfig: all tasks are masked off; nothing to train");
    }
}

ModelConfig ModelConfig::desk_preset() {
    ModelConfig cfg;
    cfg.m = 256;
    cfg.k_list = {8, 12, 16};
    cfg.edge_width = 8;
    cfg.point_conv_width = 8;
    cfg.stack_widths = {16, 32, 64};
    cfg.d_shape = 64;
    cfg.d_point = 128;
    cfg.k_ub = 32;
    cfg.classifier_widths = {256, 128};
    cfg.decoder_widths = {256, 128};
    return cfg;
}

namespace {

std::vector<double> he_uniform(int64_t fan_in, int64_t count, Rng& rng) {
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::vector<double> v(static_cast<size_t>(count));
    for (auto& x : v) x = rng.uniform(-limit, limit);
    return v;
}

// Layers feeding into batch norm carry no bias: the normalization cancels it
// exactly, so it would be a zero-gradient direction. Output heads start small
// to keep initial logits and reconstructions near zero.
void create_linear(ParameterStore& store, const std::string& prefix, int64_t in, int64_t out,
                   Rng& rng, bool with_bias, double init_scale = 1.0) {
    std::vector<double> w = he_uniform(in, in * out, rng);
    if (init_scale != 1.0) {
        for (auto& v : w) v *= init_scale;
    }
    store.create_param(prefix + ".w", {in, out}, std::move(w));
    if (with_bias) {
        store.create_param(prefix + ".b", {out},
                           std::vector<double>(static_cast<size_t>(out), 0.0));
    }
}

void create_bn(ParameterStore& store, const std::string& prefix, int64_t features) {
    store.create_param(prefix + ".gamma", {features},
                       std::vector<double>(static_cast<size_t>(features), 1.0));
    store.create_param(prefix + ".beta", {features},
                       std::vector<double>(static_cast<size_t>(features), 0.0));
    store.create_bn_stats(prefix, features);
}

Tensor linear(Tape& tape, const Tensor& x, const ParameterStore& params,
              const std::string& prefix) {
    Tensor y = matmul(tape, x, params.param(prefix + ".w"));
    return add(tape, y, params.param(prefix + ".b"));
}

// Linear (bias-free) -> batch-norm -> ReLU, the standard hidden-layer block.
Tensor block(Tape& tape, const Tensor& x, ParameterStore& params, const std::string& prefix,
             Mode mode) {
    Tensor y = matmul(tape, x, params.param(prefix + ".linear.w"));
    y = batch_norm(tape, y, params.param(prefix + ".bn.gamma"), params.param(prefix + ".bn.beta"),
                   params.bn_stats(prefix + ".bn"), mode);
    return relu(tape, y);
}

struct LayerSpec {
    std::string prefix;
    int64_t in, out;
    bool bn;
};

// Single source of truth for the parameter layout so init, counting, and the
// forward passes cannot drift apart.
std::vector<LayerSpec> layer_specs(const ModelConfig& cfg) {
    std::vector<LayerSpec> specs;
    for (size_t b = 0; b < cfg.k_list.size(); ++b) {
        specs.push_back(
            {"encoder.edge" + std::to_string(b), 2 * cfg.d_in, cfg.edge_width, true});
    }
    specs.push_back({"encoder.point_conv", cfg.d_in, cfg.point_conv_width, true});
    int64_t width = cfg.concat_width();
    for (size_t i = 0; i < cfg.stack_widths.size(); ++i) {
        specs.push_back({"encoder.stack" + std::to_string(i), width, cfg.stack_widths[i], true});
        width = cfg.stack_widths[i];
    }
    specs.push_back({"encoder.shape_mlp", cfg.pre_pool_width(), cfg.d_shape, true});
    width = cfg.d_shape;
    for (size_t i = 0; i < cfg.classifier_widths.size(); ++i) {
        specs.push_back(
            {"classifier.h" + std::to_string(i), width, cfg.classifier_widths[i], true});
        width = cfg.classifier_widths[i];
    }
    specs.push_back({"classifier.out", width, cfg.k_ub, false});
    width = cfg.d_shape;
    for (size_t i = 0; i < cfg.decoder_widths.size(); ++i) {
        specs.push_back({"decoder.h" + std::to_string(i), width, cfg.decoder_widths[i], true});
        width = cfg.decoder_widths[i];
    }
    specs.push_back({"decoder.out", width, cfg.m * cfg.d_in, false});
    return specs;
}

}  // namespace

ParameterStore init_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ParameterStore store;
    for (const LayerSpec& s : layer_specs(cfg)) {
        create_linear(store, s.prefix + ".linear", s.in, s.out, rng, /*with_bias=*/!s.bn,
                      /*init_scale=*/s.bn ? 1.0 : 0.01);
        if (s.bn) create_bn(store, s.prefix + ".bn", s.out);
    }
    return store;
}

int64_t parameter_count(const ModelConfig& cfg) {
    int64_t total = 0;
    for (const LayerSpec& s : layer_specs(cfg)) {
        total += s.in * s.out;
        if (s.bn) {
            total += 2 * s.out;  // gamma + beta replace the linear bias
        } else {
            total += s.out;  // output layers keep a bias
        }
    }
    return total;
}

Tensor edge_conv(Tape& tape, const Tensor& feats, const NeighborIndex& neighbors,
                 const std::function<Tensor(Tape&, const Tensor&)>& h, Aggregation agg) {
    if (feats.rank() != 2) throw_dimension("edge_conv: expected rank-2 features");
    int64_t n_pts = feats.dim(0);
    if (static_cast<int64_t>(neighbors.ids.size()) != n_pts * neighbors.k) {
        throw_dimension("edge_conv: neighbor index does not match feature rows");
    }
    Tensor edges = edge_features(tape, feats, neighbors.ids, neighbors.k);
    Tensor transformed = h(tape, edges);
    if (transformed.rank() != 2 || transformed.dim(0) != n_pts * neighbors.k) {
        throw_dimension("edge_conv: shared MLP changed the edge row count");
    }
    int64_t d_out = transformed.dim(1);
    Tensor grouped = reshape(tape, transformed, {n_pts, neighbors.k, d_out});
    return reduce(tape, agg == Aggregation::Sum ? ReduceKind::Sum : ReduceKind::Max, grouped, 1);
}

EncoderOutput encode_batch(Tape& tape, std::span<const PointCloud* const> clouds,
                           std::span<const NeighborIndex> graphs, const ModelConfig& cfg,
                           ParameterStore& params, Mode mode, bool want_point_features) {
    if (clouds.empty()) throw_validation("encode_batch: empty batch");
    if (graphs.size() != clouds.size()) {
        throw_validation("encode_batch: need one neighbor graph per cloud");
    }
    int64_t B = static_cast<int64_t>(clouds.size());
    int64_t M = cfg.m;
    int64_t kmax = *std::max_element(cfg.k_list.begin(), cfg.k_list.end());
    for (int64_t c = 0; c < B; ++c) {
        if (static_cast<int64_t>(clouds[c]->size()) != M) {
            throw_validation("encode_batch: cloud " + std::to_string(c) + " has " +
                             std::to_string(clouds[c]->size()) + " points, expected " +
                             std::to_string(M));
        }
        if (graphs[c].k < kmax) {
            throw_validation("encode_batch: neighbor graph must carry max(k_list) neighbors");
        }
    }

    // Stack the batch: per-point layers then see clouds x points rows.
    std::vector<double> coords(static_cast<size_t>(B * M * 3));
    for (int64_t c = 0; c < B; ++c) {
        for (int64_t i = 0; i < M; ++i) {
            const Point3& p = clouds[c]->points[static_cast<size_t>(i)];
            std::copy(p.begin(), p.end(), coords.data() + (c * M + i) * 3);
        }
    }
    Tensor x = Tensor::from_data({B * M, 3}, std::move(coords));

    std::vector<Tensor> branches;
    for (size_t b = 0; b < cfg.k_list.size(); ++b) {
        int64_t k = cfg.k_list[b];
        NeighborIndex merged;
        merged.k = k;
        merged.ids.resize(static_cast<size_t>(B * M * k));
        for (int64_t c = 0; c < B; ++c) {
            for (int64_t i = 0; i < M; ++i) {
                auto row = graphs[c].row(static_cast<size_t>(i));
                int32_t offset = static_cast<int32_t>(c * M);
                for (int64_t j = 0; j < k; ++j) {
                    merged.ids[static_cast<size_t>((c * M + i) * k + j)] = row[j] + offset;
                }
            }
        }
        std::string prefix = "encoder.edge" + std::to_string(b);
        auto h = [&](Tape& t, const Tensor& e) { return block(t, e, params, prefix, mode); };
        branches.push_back(edge_conv(tape, x, merged, h, cfg.aggregation));
    }
    branches.push_back(x);
    branches.push_back(block(tape, x, params, "encoder.point_conv", mode));

    Tensor features = concat(tape, branches, 1);
    for (size_t i = 0; i < cfg.stack_widths.size(); ++i) {
        features = block(tape, features, params, "encoder.stack" + std::to_string(i), mode);
    }

    Tensor grouped = reshape(tape, features, {B, M, cfg.pre_pool_width()});
    Tensor pooled = reduce_max(tape, grouped, 1);
    Tensor shape_features = block(tape, pooled, params, "encoder.shape_mlp", mode);

    EncoderOutput out;
    out.shape_features = shape_features;
    out.prepool_features = features;
    if (want_point_features) {
        out.point_features.resize(static_cast<size_t>(B * M * cfg.d_point));
        const auto& prepool = features.value();
        const auto& shape = shape_features.value();
        int64_t pw = cfg.pre_pool_width();
        for (int64_t c = 0; c < B; ++c) {
            for (int64_t i = 0; i < M; ++i) {
                double* row = out.point_features.data() + (c * M + i) * cfg.d_point;
                std::copy(prepool.data() + (c * M + i) * pw, prepool.data() + (c * M + i + 1) * pw,
                          row);
                std::copy(shape.data() + c * cfg.d_shape, shape.data() + (c + 1) * cfg.d_shape,
                          row + pw);
            }
        }
    }
    return out;
}

EncoderOutput encode(Tape& tape, const PointCloud& cloud, const ModelConfig& cfg,
                     ParameterStore& params, Mode mode, bool want_point_features) {
    int64_t kmax = *std::max_element(cfg.k_list.begin(), cfg.k_list.end());
    NeighborIndex graph = knn(cloud.points, kmax);
    const PointCloud* ptr = &cloud;
    return encode_batch(tape, std::span<const PointCloud* const>(&ptr, 1),
                        std::span<const NeighborIndex>(&graph, 1), cfg, params, mode,
                        want_point_features);
}

Tensor classify(Tape& tape, const Tensor& shape_features, const ModelConfig& cfg,
                ParameterStore& params, Mode mode, Rng& rng) {
    if (shape_features.rank() != 2 || shape_features.dim(1) != cfg.d_shape) {
        throw_dimension("classify: expected (B x d_shape) features, got " +
                        shape_str(shape_features.shape()));
    }
    Tensor h = shape_features;
    for (size_t i = 0; i < cfg.classifier_widths.size(); ++i) {
        h = block(tape, h, params, "classifier.h" + std::to_string(i), mode);
        h = dropout(tape, h, cfg.dropout_p, mode, rng);
    }
    return linear(tape, h, params, "classifier.out.linear");
}

Tensor decode(Tape& tape, const Tensor& shape_features, const ModelConfig& cfg,
              ParameterStore& params, Mode mode) {
    if (shape_features.rank() != 2 || shape_features.dim(1) != cfg.d_shape) {
        throw_dimension("decode: expected (B x d_shape) features, got " +
                        shape_str(shape_features.shape()));
    }
    Tensor h = shape_features;
    for (size_t i = 0; i < cfg.decoder_widths.size(); ++i) {
        h = block(tape, h, params, "decoder.h" + std::to_string(i), mode);
    }
    return linear(tape, h, params, "decoder.out.linear");
}

}  // namespace pointmtl
