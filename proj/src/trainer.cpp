#include "pointmtl/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pointmtl/evaluation.hpp"
#include "pointmtl/parallel.hpp"

namespace pointmtl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

// Child-stream keys hanging off the root seed. Everything random in a run is
// derived functionally from (seed, purpose, index), so resuming needs only the
// epoch counter.
enum RngKey : uint64_t {
    kInitKey = 1,
    kCentroidKey = 2,
    kPreprocessKey = 3,
    kEpochKey = 4,
};
enum EpochRngKey : uint64_t {
    kShuffleKey = 0,
    kAugmentKey = 1,
    kDropoutKey = 2,
};

}  // namespace

void TrainConfig::validate() const {
    if (lr <= 0.0) throw_config("TrainConfig: lr must be positive");
    if (lr_decay <= 0.0 || lr_decay > 1.0) throw_config("TrainConfig: lr_decay must be in (0, 1]");
    if (lr_period < 1) throw_config("TrainConfig: lr_period must be at least 1");
    if (batch_size < 2) throw_config("TrainConfig: batch_size must be at least 2 (batch norm)");
    if (epochs < 0) throw_config("TrainConfig: epochs must be non-negative");
    if (augment.noise_std < 0.0) throw_config("TrainConfig: noise_std must be non-negative");
    if (augment.z_rot_deg < 0.0 || augment.xy_rot_deg < 0.0) {
        throw_config("TrainConfig: rotation ranges must be non-negative");
    }
    weights.validate();
    model.validate();
}

double TrainConfig::lr_at(int64_t epoch) const {
    return lr * std::pow(lr_decay, static_cast<double>(epoch / lr_period));
}

TrainConfig TrainConfig::desk_preset() {
    TrainConfig cfg;
    cfg.model = ModelConfig::desk_preset();
    cfg.batch_size = 16;
    cfg.epochs = 100;
    return cfg;
}

uint64_t config_hash(const TrainConfig& cfg) {
    std::ostringstream ss;
    ss.precision(17);
    ss << cfg.lr << '|' << cfg.lr_decay << '|' << cfg.lr_period << '|' << cfg.batch_size << '|'
       << cfg.seed << '|' << cfg.weights.alpha << '|' << cfg.weights.beta << '|'
       << cfg.weights.gamma << '|' << cfg.augment.noise_std << '|' << cfg.augment.z_rot_deg << '|'
       << cfg.augment.xy_rot_deg << '|';
    const ModelConfig& m = cfg.model;
    ss << m.d_in << '|' << m.m << '|';
    for (int64_t k : m.k_list) ss << k << ',';
    ss << '|' << m.edge_width << '|' << m.point_conv_width << '|';
    for (int64_t w : m.stack_widths) ss << w << ',';
    ss << '|' << m.d_shape << '|' << m.d_point << '|' << m.k_ub << '|';
    for (int64_t w : m.classifier_widths) ss << w << ',';
    ss << '|';
    for (int64_t w : m.decoder_widths) ss << w << ',';
    ss << '|' << m.dropout_p << '|' << to_string(m.aggregation) << '|' << m.task_mask.clustering
       << m.task_mask.classification << m.task_mask.reconstruction;
    std::string s = ss.str();
    uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

WorkingSet preprocess(const Dataset& dataset, const TrainConfig& cfg) {
    WorkingSet ws;
    ws.category_names = dataset.category_names;
    Rng pre = Rng(cfg.seed).split(kPreprocessKey);
    std::vector<PointCloud> prepared(dataset.size());
    parallel_for(dataset.size(), [&](size_t i) {
        Rng cloud_rng = pre.split(i);
        PointCloud sampled = sample_points(dataset.clouds[i], static_cast<size_t>(cfg.model.m),
                                           cloud_rng);
        prepared[i] = normalize_unit_sphere(sampled);
    });
    for (size_t i = 0; i < dataset.size(); ++i) {
        switch (dataset.splits[i]) {
            case Split::Train:
                ws.train.push_back(std::move(prepared[i]));
                ws.train_ids.push_back(dataset.ids[i]);
                break;
            case Split::Val:
                ws.val.push_back(std::move(prepared[i]));
                ws.val_ids.push_back(dataset.ids[i]);
                break;
            case Split::Test:
                ws.test.push_back(std::move(prepared[i]));
                ws.test_ids.push_back(dataset.ids[i]);
                break;
        }
    }
    return ws;
}

ClusterState init_centroids(const std::vector<PointCloud>& clouds, const ModelConfig& cfg,
                            ParameterStore& params, Rng& rng) {
    if (clouds.empty()) throw_validation("init_centroids: empty dataset");
    int64_t k_ub = cfg.k_ub;
    std::vector<size_t> chosen;
    chosen.reserve(static_cast<size_t>(k_ub));
    if (static_cast<int64_t>(clouds.size()) >= k_ub) {
        std::vector<size_t> idx(clouds.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        rng.shuffle(idx);
        chosen.assign(idx.begin(), idx.begin() + k_ub);
    } else {
        for (int64_t i = 0; i < k_ub; ++i) chosen.push_back(rng.uniform_index(clouds.size()));
    }
    ClusterState state = ClusterState::make(k_ub, cfg.d_shape);
    if (k_ub == 1) {
        Tape tape;
        EncoderOutput enc = encode(tape, clouds[chosen[0]], cfg, params, Mode::Eval);
        std::copy(enc.shape_features.value().begin(), enc.shape_features.value().end(),
                  state.centroids.begin());
        return state;
    }
    // Centroids must live in the same feature distribution the assignments
    // will see, which is train-mode batch statistics: cold-start eval features
    // sit orders of magnitude away and every sample then collapses onto one
    // centroid. Encode the seeds unaugmented, in train-mode batches.
    int64_t kmax = *std::max_element(cfg.k_list.begin(), cfg.k_list.end());
    constexpr int64_t kSeedBatch = 32;
    int64_t done = 0;
    while (done < k_ub) {
        int64_t batch = std::min<int64_t>(kSeedBatch, k_ub - done);
        if (k_ub - done - batch == 1) batch -= 1;  // avoid a trailing singleton
        std::vector<const PointCloud*> ptrs(static_cast<size_t>(batch));
        std::vector<NeighborIndex> graphs(static_cast<size_t>(batch));
        for (int64_t i = 0; i < batch; ++i) {
            ptrs[static_cast<size_t>(i)] = &clouds[chosen[static_cast<size_t>(done + i)]];
        }
        parallel_for(static_cast<size_t>(batch), [&](size_t i) {
            graphs[i] = knn(ptrs[i]->points, kmax);
        });
        Tape tape;
        EncoderOutput enc = encode_batch(tape, ptrs, graphs, cfg, params, Mode::Train);
        std::copy(enc.shape_features.value().begin(), enc.shape_features.value().end(),
                  state.centroids.begin() + done * cfg.d_shape);
        done += batch;
    }
    return state;
}

EpochMetrics train_epoch(TrainState& state, const std::vector<PointCloud>& train_clouds,
                         const TrainConfig& cfg, const BatchHook& batch_hook) {
    const ModelConfig& mc = cfg.model;
    int64_t n = static_cast<int64_t>(train_clouds.size());
    if (n < 2) throw_validation("train_epoch: need at least 2 training clouds");
    double lr = cfg.lr_at(state.epoch);
    Rng epoch_rng = Rng(state.root_seed).split2(kEpochKey, static_cast<uint64_t>(state.epoch));

    std::vector<size_t> order(static_cast<size_t>(n));
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    {
        Rng shuffle_rng = epoch_rng.split(kShuffleKey);
        shuffle_rng.shuffle(order);
    }

    // Batch boundaries; a trailing singleton is folded into the previous batch
    // because train-mode batch norm needs at least two clouds.
    std::vector<std::pair<int64_t, int64_t>> batches;
    for (int64_t start = 0; start < n; start += cfg.batch_size) {
        batches.emplace_back(start, std::min(start + cfg.batch_size, n));
    }
    if (batches.size() > 1 && batches.back().second - batches.back().first == 1) {
        batches[batches.size() - 2].second = n;
        batches.pop_back();
    }

    state.clusters.reset_accumulators();
    std::vector<int64_t> assignment_by_sample(static_cast<size_t>(n), -1);
    int64_t kmax = *std::max_element(mc.k_list.begin(), mc.k_list.end());

    double sum_loss = 0.0, sum_kmeans = 0.0, sum_ce = 0.0, sum_chamfer = 0.0;
    for (size_t bi = 0; bi < batches.size(); ++bi) {
        auto [start, end] = batches[bi];
        int64_t B = end - start;

        std::vector<AugmentResult> aug(static_cast<size_t>(B));
        std::vector<NeighborIndex> graphs(static_cast<size_t>(B));
        for (int64_t c = 0; c < B; ++c) {
            Rng aug_rng = epoch_rng.split2(kAugmentKey, static_cast<uint64_t>(start + c));
            aug[static_cast<size_t>(c)] =
                augment(train_clouds[order[static_cast<size_t>(start + c)]], cfg.augment, aug_rng);
        }
        parallel_for(static_cast<size_t>(B), [&](size_t c) {
            graphs[c] = knn(aug[c].noisy.points, kmax);
        });

        std::vector<const PointCloud*> noisy(static_cast<size_t>(B));
        for (int64_t c = 0; c < B; ++c) noisy[static_cast<size_t>(c)] = &aug[static_cast<size_t>(c)].noisy;

        Tape tape;
        EncoderOutput enc = encode_batch(tape, noisy, graphs, mc, state.params, Mode::Train);
        AssignResult assign = assign_clusters(tape, enc.shape_features, state.clusters);

        LossParts parts;
        parts.kmeans = assign.loss;
        if (mc.task_mask.classification) {
            Rng dropout_rng = epoch_rng.split2(kDropoutKey, bi);
            Tensor logits =
                classify(tape, enc.shape_features, mc, state.params, Mode::Train, dropout_rng);
            parts.cross_entropy = pseudo_label_loss(tape, logits, assign.assignments);
        }
        if (mc.task_mask.reconstruction) {
            Tensor recon = decode(tape, enc.shape_features, mc, state.params, Mode::Train);
            Tensor chamfer_sum;
            for (int64_t c = 0; c < B; ++c) {
                Tensor rec_c = reshape(tape, slice_rows(tape, recon, c, 1), {mc.m, 3});
                const auto& clean = aug[static_cast<size_t>(c)].clean.points;
                std::vector<double> target(static_cast<size_t>(mc.m) * 3);
                for (int64_t i = 0; i < mc.m; ++i) {
                    std::copy(clean[static_cast<size_t>(i)].begin(),
                              clean[static_cast<size_t>(i)].end(), target.data() + i * 3);
                }
                Tensor target_t = Tensor::from_data({mc.m, 3}, std::move(target));
                Tensor ch = chamfer(tape, rec_c, target_t);
                chamfer_sum = chamfer_sum.defined() ? add(tape, chamfer_sum, ch) : ch;
            }
            parts.chamfer = scale(tape, chamfer_sum, 1.0 / static_cast<double>(B));
        }

        Tensor loss = combined_loss(tape, parts, cfg.weights, mc.task_mask);
        if (!std::isfinite(loss.item())) {
            throw_numeric("train_epoch: non-finite loss in epoch " + std::to_string(state.epoch) +
                          ", batch " + std::to_string(bi) + " (kmeans=" +
                          std::to_string(parts.kmeans.item()) + ")");
        }
        state.params.zero_grad();
        tape.backward(loss);
        state.params.adam_step(lr);

        // Training-mode features of each sample's occurrence feed the epoch-wise
        // centroid update.
        const auto& z = enc.shape_features.value();
        for (int64_t c = 0; c < B; ++c) {
            int64_t a = assign.assignments[static_cast<size_t>(c)];
            state.clusters.accumulate(a, z.data() + c * mc.d_shape);
            assignment_by_sample[order[static_cast<size_t>(start + c)]] = a;
        }

        if (batch_hook) batch_hook(bi, state.clusters);

        double w = static_cast<double>(B);
        sum_loss += loss.item() * w;
        sum_kmeans += parts.kmeans.item() * w;
        if (parts.cross_entropy.defined()) sum_ce += parts.cross_entropy.item() * w;
        if (parts.chamfer.defined()) sum_chamfer += parts.chamfer.item() * w;
    }

    EpochMetrics m;
    m.epoch = state.epoch;
    m.loss = sum_loss / static_cast<double>(n);
    m.kmeans = sum_kmeans / static_cast<double>(n);
    m.cross_entropy = sum_ce / static_cast<double>(n);
    m.chamfer = sum_chamfer / static_cast<double>(n);
    m.nonempty_clusters = state.clusters.update_centroids();

    bool labels_ok = true;
    std::vector<int> truth(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        int label = train_clouds[static_cast<size_t>(i)].shape_label;
        if (label < 0) labels_ok = false;
        truth[static_cast<size_t>(i)] = label;
    }
    if (labels_ok) {
        std::vector<int> assigned(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            assigned[static_cast<size_t>(i)] =
                static_cast<int>(assignment_by_sample[static_cast<size_t>(i)]);
        }
        m.nmi = nmi(assigned, truth);
    }

    state.history.push_back(m);
    state.epoch += 1;
    return m;
}

TrainState fit(const WorkingSet& working, const TrainConfig& cfg, const FitOptions& opts) {
    cfg.validate();
    TrainState state;
    if (opts.resume_from) {
        state = checkpoint_load(*opts.resume_from, cfg);
    } else {
        Rng root(cfg.seed);
        Rng init_rng = root.split(kInitKey);
        state.params = init_params(cfg.model, init_rng);
        state.root_seed = cfg.seed;
        Rng centroid_rng = root.split(kCentroidKey);
        state.clusters = init_centroids(working.train, cfg.model, state.params, centroid_rng);
    }
    auto save = [&] {
        if (!opts.checkpoint_path.empty()) checkpoint_save(opts.checkpoint_path, state, cfg);
    };
    save();  // `--epochs 0` still leaves an initial checkpoint behind
    while (state.epoch < cfg.epochs) {
        EpochMetrics m = train_epoch(state, working.train, cfg);
        save();
        if (opts.verbose) {
            std::fprintf(stderr,
                         "epoch %3lld  loss %.6f  kmeans %.6f  ce %.6f  chamfer %.6f  "
                         "clusters %lld  nmi %.4f\n",
                         static_cast<long long>(m.epoch), m.loss, m.kmeans, m.cross_entropy,
                         m.chamfer, static_cast<long long>(m.nonempty_clusters), m.nmi);
        }
    }
    return state;
}

// ---- checkpoint I/O ----

namespace {

constexpr char kMagic[8] = {'P', 'M', 'T', 'L', 'C', 'K', '0', '1'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::ostream& out, uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void put_i64(std::ostream& out, int64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
void put_f64s(std::ostream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}
void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t get_u32(std::istream& in) {
    uint32_t v;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t get_u64(std::istream& in) {
    uint64_t v;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
int64_t get_i64(std::istream& in) {
    int64_t v;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
std::vector<double> get_f64s(std::istream& in, size_t n) {
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    return v;
}
std::string get_string(std::istream& in) {
    uint32_t len = get_u32(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    return s;
}

}  // namespace

void checkpoint_save(const std::filesystem::path& path, const TrainState& state,
                     const TrainConfig& cfg) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw_io("cannot open checkpoint for writing: " + tmp.string());
        out.write(kMagic, sizeof(kMagic));
        put_u32(out, kVersion);
        put_u64(out, config_hash(cfg));
        put_u64(out, static_cast<uint64_t>(state.params.parameter_count()));
        put_u64(out, static_cast<uint64_t>(state.epoch));
        put_u64(out, static_cast<uint64_t>(state.params.step()));
        put_u64(out, state.root_seed);

        put_u32(out, static_cast<uint32_t>(state.params.params().size()));
        for (const auto& [name, p] : state.params.params()) {
            put_string(out, name);
            put_u32(out, static_cast<uint32_t>(p.shape().size()));
            for (int64_t d : p.shape()) put_i64(out, d);
            put_f64s(out, p.value());
            const AdamMoments& mom = state.params.moments().at(name);
            put_f64s(out, mom.m);
            put_f64s(out, mom.v);
        }
        put_u32(out, static_cast<uint32_t>(state.params.all_bn_stats().size()));
        for (const auto& [name, stats] : state.params.all_bn_stats()) {
            put_string(out, name);
            put_u64(out, stats.running_mean.size());
            put_f64s(out, stats.running_mean);
            put_f64s(out, stats.running_var);
        }
        put_u64(out, static_cast<uint64_t>(state.clusters.k_ub));
        put_u64(out, static_cast<uint64_t>(state.clusters.dim));
        put_f64s(out, state.clusters.centroids);

        put_u32(out, static_cast<uint32_t>(state.history.size()));
        for (const EpochMetrics& m : state.history) {
            put_i64(out, m.epoch);
            out.write(reinterpret_cast<const char*>(&m.loss), 8);
            out.write(reinterpret_cast<const char*>(&m.kmeans), 8);
            out.write(reinterpret_cast<const char*>(&m.cross_entropy), 8);
            out.write(reinterpret_cast<const char*>(&m.chamfer), 8);
            put_i64(out, m.nonempty_clusters);
            out.write(reinterpret_cast<const char*>(&m.nmi), 8);
        }
        if (!out) throw_io("failed writing checkpoint " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw_io("failed to move checkpoint into place: " + ec.message());
}

TrainState checkpoint_load(const std::filesystem::path& path, const TrainConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0) {
        throw_validation("checkpoint " + path.string() + " has an unrecognized header");
    }
    uint32_t version = get_u32(in);
    if (version != kVersion) {
        throw_validation("checkpoint format version " + std::to_string(version) +
                         " is incompatible with supported version " + std::to_string(kVersion));
    }
    uint64_t stored_hash = get_u64(in);
    if (stored_hash != config_hash(cfg)) {
        throw_validation("checkpoint " + path.string() +
                         " was produced by a different configuration (hash mismatch)");
    }
    uint64_t stored_count = get_u64(in);
    TrainState state;
    state.epoch = static_cast<int64_t>(get_u64(in));
    int64_t step = static_cast<int64_t>(get_u64(in));
    state.root_seed = get_u64(in);

    uint32_t n_params = get_u32(in);
    for (uint32_t i = 0; i < n_params; ++i) {
        std::string name = get_string(in);
        uint32_t rank = get_u32(in);
        Shape shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = get_i64(in);
        size_t count = static_cast<size_t>(shape_numel(shape));
        std::vector<double> values = get_f64s(in, count);
        state.params.create_param(name, shape, std::move(values));
        AdamMoments& mom = state.params.moments().at(name);
        mom.m = get_f64s(in, count);
        mom.v = get_f64s(in, count);
    }
    state.params.set_step(step);
    uint32_t n_bn = get_u32(in);
    for (uint32_t i = 0; i < n_bn; ++i) {
        std::string name = get_string(in);
        uint64_t features = get_u64(in);
        BatchNormStats& stats = state.params.create_bn_stats(name, static_cast<int64_t>(features));
        stats.running_mean = get_f64s(in, features);
        stats.running_var = get_f64s(in, features);
    }
    int64_t k_ub = static_cast<int64_t>(get_u64(in));
    int64_t dim = static_cast<int64_t>(get_u64(in));
    state.clusters = ClusterState::make(k_ub, dim);
    state.clusters.centroids = get_f64s(in, static_cast<size_t>(k_ub * dim));

    uint32_t n_history = get_u32(in);
    for (uint32_t i = 0; i < n_history; ++i) {
        EpochMetrics m;
        m.epoch = get_i64(in);
        in.read(reinterpret_cast<char*>(&m.loss), 8);
        in.read(reinterpret_cast<char*>(&m.kmeans), 8);
        in.read(reinterpret_cast<char*>(&m.cross_entropy), 8);
        in.read(reinterpret_cast<char*>(&m.chamfer), 8);
        m.nonempty_clusters = get_i64(in);
        in.read(reinterpret_cast<char*>(&m.nmi), 8);
        state.history.push_back(m);
    }
    if (!in) throw_io("checkpoint " + path.string() + " is truncated");

    if (static_cast<uint64_t>(state.params.parameter_count()) != stored_count) {
        throw_validation("checkpoint parameter count " + std::to_string(stored_count) +
                         " does not match loaded parameters " +
                         std::to_string(state.params.parameter_count()));
    }
    if (state.params.parameter_count() != parameter_count(cfg.model)) {
        throw_validation("checkpoint parameters do not match the model configuration");
    }
    if (state.clusters.k_ub != cfg.model.k_ub || state.clusters.dim != cfg.model.d_shape) {
        throw_validation("checkpoint centroid matrix does not match the model configuration");
    }
    return state;
}

void write_metrics_log(const std::filesystem::path& path,
                       const std::vector<EpochMetrics>& history) {
    std::ofstream out(path);
    if (!out) throw_io("cannot write metrics log " + path.string());
    out << "epoch\tloss\tkmeans\tcross_entropy\tchamfer\tnonempty_clusters\tnmi\n";
    char buf[256];
    for (const EpochMetrics& m : history) {
        std::snprintf(buf, sizeof(buf), "%lld\t%.17g\t%.17g\t%.17g\t%.17g\t%lld\t%.17g\n",
                      static_cast<long long>(m.epoch), m.loss, m.kmeans, m.cross_entropy,
                      m.chamfer, static_cast<long long>(m.nonempty_clusters), m.nmi);
        out << buf;
    }
    if (!out) throw_io("failed writing metrics log " + path.string());
}

}  // namespace pointmtl
