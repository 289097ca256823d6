#include "pointmtl/verify.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "pointmtl/grad_check.hpp"
#include "pointmtl/model.hpp"
#include "pointmtl/objectives.hpp"
#include "pointmtl/trainer.hpp"

namespace pointmtl {

bool VerifyReport::all_pass() const {
    for (const auto& c : checks) {
        if (!c.pass) return false;
    }
    return true;
}

namespace {

constexpr double kGradTol = 1e-4;

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(v));
}

// Keeps every element at least `margin` away from zero so relu/max kinks stay
// clear of the finite-difference window.
Tensor random_tensor_off_kink(Shape shape, Rng& rng, double margin = 0.05) {
    Tensor t = random_tensor(std::move(shape), rng);
    for (auto& x : t.data()) {
        if (std::abs(x) < margin) x = x < 0.0 ? x - margin : x + margin;
    }
    return t;
}

// Small but non-degenerate model used for the composite checks.
ModelConfig micro_model() {
    ModelConfig cfg;
    cfg.m = 32;
    cfg.k_list = {4, 6};
    cfg.edge_width = 4;
    cfg.point_conv_width = 4;
    cfg.stack_widths = {8, 12};
    cfg.d_shape = 8;
    cfg.d_point = 20;
    cfg.k_ub = 4;
    cfg.classifier_widths = {8};
    cfg.decoder_widths = {8};
    return cfg;
}

TrainConfig micro_train_config(uint64_t seed) {
    TrainConfig cfg;
    cfg.model = micro_model();
    cfg.batch_size = 4;
    cfg.epochs = 2;
    cfg.seed = seed;
    return cfg;
}

std::vector<PointCloud> micro_dataset(size_t count, size_t m, uint64_t seed) {
    std::vector<PointCloud> clouds;
    Rng rng(seed);
    const SynthKind kinds[] = {SynthKind::Sphere, SynthKind::Cube, SynthKind::Cylinder,
                               SynthKind::Torus};
    for (size_t i = 0; i < count; ++i) {
        Rng cloud_rng = rng.split(i);
        PointCloud c = synth_generate(kinds[i % 4], m, 0.0, cloud_rng);
        c.shape_label = static_cast<int>(i % 4);
        clouds.push_back(std::move(c));
    }
    return clouds;
}

void add_check(VerifyReport& report, const std::string& name, double err, double threshold) {
    report.checks.push_back({name, err, threshold, err <= threshold});
}

void gradient_checks(VerifyReport& report, uint64_t seed) {
    Rng rng(seed);

    {
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({4, 2}, rng);
        double err = grad_check(
            [&](Tape& t) { return reduce_sum(t, reshape(t, matmul(t, a, b), {6}), 0); }, {a, b});
        add_check(report, "grad.matmul", err, kGradTol);
    }
    {
        Tensor a = random_tensor({3, 4}, rng);
        Tensor b = random_tensor({4}, rng);  // trailing broadcast
        double err = grad_check(
            [&](Tape& t) {
                Tensor s = add(t, a, b);
                Tensor d = sub(t, s, a);
                Tensor m = mul(t, d, s);
                return reduce_sum(t, reduce_sum(t, m, 1), 0);
            },
            {a, b});
        add_check(report, "grad.elementwise.add_sub_mul", err, kGradTol);
    }
    {
        Tensor a = random_tensor({5}, rng);
        double err = grad_check([&](Tape& t) { return reduce_sum(t, scale(t, a, -2.5), 0); }, {a});
        add_check(report, "grad.elementwise.scale", err, kGradTol);
    }
    {
        Tensor a = random_tensor_off_kink({4, 3}, rng);
        double err = grad_check(
            [&](Tape& t) {
                Tensor r = relu(t, a);
                Tensor sq = mul(t, r, r);
                return reduce_sum(t, reduce_sum(t, sq, 1), 0);
            },
            {a});
        add_check(report, "grad.elementwise.relu", err, kGradTol);
    }
    {
        Tensor a = random_tensor({3, 4}, rng);
        double err = grad_check(
            [&](Tape& t) {
                Tensor s = reduce_sum(t, a, 0);
                Tensor m = reduce_mean(t, a, 1);
                return add(t, reduce_sum(t, s, 0), reduce_sum(t, m, 0));
            },
            {a});
        add_check(report, "grad.reduce.sum_mean", err, kGradTol);
    }
    {
        // Distinct entries keep the argmax stable under the FD step.
        std::vector<double> v = {0.3, -1.2, 2.4, 1.1, -0.7, 0.9, 3.2, -2.1, 1.7, 0.2, -0.4, 2.9};
        Tensor a = Tensor::from_data({3, 4}, v);
        double err = grad_check(
            [&](Tape& t) {
                Tensor mx = reduce_max(t, a, 0);
                Tensor sq = mul(t, mx, mx);
                return reduce_sum(t, sq, 0);
            },
            {a});
        add_check(report, "grad.reduce.max", err, kGradTol);
    }
    {
        Tensor a = random_tensor({2, 3}, rng);
        Tensor b = random_tensor({2, 2}, rng);
        double err = grad_check(
            [&](Tape& t) {
                std::vector<Tensor> parts = {a, b};
                Tensor c = concat(t, parts, 1);
                Tensor sq = mul(t, c, c);
                return reduce_sum(t, reduce_sum(t, sq, 1), 0);
            },
            {a, b});
        add_check(report, "grad.concat", err, kGradTol);
    }
    {
        Tensor a = random_tensor({6, 2}, rng);
        double err = grad_check(
            [&](Tape& t) {
                Tensor s = slice_rows(t, a, 1, 3);
                Tensor sq = mul(t, s, s);
                return reduce_sum(t, reshape(t, sq, {6}), 0);
            },
            {a});
        add_check(report, "grad.slice_reshape", err, kGradTol);
    }
    {
        Tensor x = random_tensor({4, 3}, rng);
        Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
        Tensor beta = random_tensor({3}, rng, -0.5, 0.5);
        double err = grad_check(
            [&](Tape& t) {
                BatchNormStats stats;
                stats.running_mean.assign(3, 0.0);
                stats.running_var.assign(3, 1.0);
                Tensor y = batch_norm(t, x, gamma, beta, stats, Mode::Train);
                Tensor sq = mul(t, y, y);
                return reduce_sum(t, reduce_sum(t, sq, 1), 0);
            },
            {x, gamma, beta});
        add_check(report, "grad.batch_norm", err, kGradTol);
    }
    {
        Tensor x = random_tensor({4, 5}, rng);
        uint64_t mask_seed = rng.next_u64();
        double err = grad_check(
            [&](Tape& t) {
                Rng mask_rng(mask_seed);  // fixed mask across FD evaluations
                Tensor y = dropout(t, x, 0.5, Mode::Train, mask_rng);
                return reduce_sum(t, reduce_sum(t, y, 1), 0);
            },
            {x});
        add_check(report, "grad.dropout", err, kGradTol);
    }
    {
        Tensor logits = random_tensor({3, 5}, rng);
        std::vector<double> onehot(15, 0.0);
        onehot[0 * 5 + 2] = 1.0;
        onehot[1 * 5 + 0] = 1.0;
        onehot[2 * 5 + 4] = 1.0;
        Tensor targets = Tensor::from_data({3, 5}, onehot);
        double err = grad_check(
            [&](Tape& t) { return softmax_cross_entropy(t, logits, targets); }, {logits});
        add_check(report, "grad.softmax_cross_entropy", err, kGradTol);
    }
    {
        Tensor z = random_tensor({4, 3}, rng);
        ClusterState clusters = ClusterState::make(5, 3);
        Rng crng = rng.split(17);
        for (auto& c : clusters.centroids) c = crng.uniform(-1.0, 1.0);
        double err = grad_check(
            [&](Tape& t) { return assign_clusters(t, z, clusters).loss; }, {z});
        add_check(report, "grad.kmeans_loss", err, kGradTol);
    }
    {
        Tensor a = random_tensor({6, 3}, rng);
        Tensor b = random_tensor({4, 3}, rng);
        double err = grad_check([&](Tape& t) { return chamfer(t, a, b); }, {a, b});
        add_check(report, "grad.chamfer", err, kGradTol);
    }
    {
        Tensor x = random_tensor({8, 3}, rng);
        std::vector<int32_t> nbrs;
        Rng nrng = rng.split(23);
        for (int i = 0; i < 8; ++i) {
            for (int j = 0; j < 3; ++j) {
                int32_t id;
                do {
                    id = static_cast<int32_t>(nrng.uniform_index(8));
                } while (id == i);
                nbrs.push_back(id);
            }
        }
        double err = grad_check(
            [&](Tape& t) {
                Tensor e = edge_features(t, x, nbrs, 3);
                Tensor sq = mul(t, e, e);
                return reduce_sum(t, reduce_sum(t, sq, 1), 0);
            },
            {x});
        add_check(report, "grad.edge_features", err, kGradTol);
    }
}

// The composite check runs in eval mode: train-mode batch norm over a 2-cloud
// batch normalizes each shape-level feature to exactly +-1, leaving the loss
// locally flat in every upstream weight (analytic 0 against finite-difference
// noise). Train-mode batch-norm backward has its own dedicated check above.
void combined_loss_check(VerifyReport& report, uint64_t seed) {
    TrainConfig cfg = micro_train_config(seed);
    const ModelConfig& mc = cfg.model;
    Rng root(seed);
    Rng init_rng = root.split(1);
    ParameterStore params = init_params(mc, init_rng);
    std::vector<PointCloud> clouds = micro_dataset(2, static_cast<size_t>(mc.m), seed + 1);

    ClusterState clusters = ClusterState::make(mc.k_ub, mc.d_shape);
    Rng crng = root.split(2);
    for (auto& c : clusters.centroids) c = crng.uniform(-1.0, 1.0);

    int64_t kmax = mc.k_list.back();
    std::vector<NeighborIndex> graphs;
    for (const auto& c : clouds) graphs.push_back(knn(c.points, kmax));
    std::vector<const PointCloud*> ptrs = {&clouds[0], &clouds[1]};
    uint64_t dropout_seed = root.split(3).next_u64();

    auto loss_fn = [&](Tape& tape) {
        EncoderOutput enc = encode_batch(tape, ptrs, graphs, mc, params, Mode::Eval);
        AssignResult assign = assign_clusters(tape, enc.shape_features, clusters);
        Rng dr(dropout_seed);
        Tensor logits = classify(tape, enc.shape_features, mc, params, Mode::Eval, dr);
        LossParts parts;
        parts.kmeans = assign.loss;
        parts.cross_entropy = pseudo_label_loss(tape, logits, assign.assignments);
        Tensor recon = decode(tape, enc.shape_features, mc, params, Mode::Eval);
        Tensor chamfer_sum;
        for (int64_t c = 0; c < 2; ++c) {
            Tensor rc = reshape(tape, slice_rows(tape, recon, c, 1), {mc.m, 3});
            std::vector<double> target(static_cast<size_t>(mc.m) * 3);
            for (int64_t i = 0; i < mc.m; ++i) {
                std::copy(clouds[static_cast<size_t>(c)].points[static_cast<size_t>(i)].begin(),
                          clouds[static_cast<size_t>(c)].points[static_cast<size_t>(i)].end(),
                          target.data() + i * 3);
            }
            Tensor tt = Tensor::from_data({mc.m, 3}, std::move(target));
            Tensor ch = chamfer(tape, rc, tt);
            chamfer_sum = chamfer_sum.defined() ? add(tape, chamfer_sum, ch) : ch;
        }
        parts.chamfer = scale(tape, chamfer_sum, 0.5);
        return combined_loss(tape, parts, cfg.weights, mc.task_mask);
    };

    std::vector<Tensor> inputs;
    for (const auto& [name, p] : params.params()) inputs.push_back(p);
    GradCheckOptions opts;
    opts.max_coords_per_input = 5;
    opts.sample_seed = seed;
    double err = grad_check(loss_fn, inputs, opts);
    add_check(report, "grad.combined_loss_micro_batch", err, kGradTol);
}

void chamfer_oracle_sweep(VerifyReport& report, uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        size_t mb = trial < 10 ? 48 : 64;  // ten unequal-size pairs
        std::vector<Point3> a(64), b(mb);
        for (auto& p : a) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        for (auto& p : b) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        std::vector<double> av(64 * 3), bv(mb * 3);
        std::memcpy(av.data(), a.data(), av.size() * sizeof(double));
        std::memcpy(bv.data(), b.data(), bv.size() * sizeof(double));
        Tape tape;
        Tensor ta = Tensor::from_data({64, 3}, av);
        Tensor tb = Tensor::from_data({static_cast<int64_t>(mb), 3}, bv);
        double fast = chamfer(tape, ta, tb).item();
        double slow = chamfer_bruteforce(a, b);
        worst = std::max(worst, std::abs(fast - slow));
    }
    add_check(report, "chamfer.oracle_sweep", worst, 1e-9);
}

void knn_oracle_sweep(VerifyReport& report, uint64_t seed) {
    Rng rng(seed);
    double mismatches = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Point3> pts(64);
        for (auto& p : pts) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        int64_t k = 1 + static_cast<int64_t>(rng.uniform_index(8));
        NeighborIndex fast = knn(pts, k);
        NeighborIndex slow = knn_bruteforce(pts, k);
        for (size_t i = 0; i < fast.ids.size(); ++i) {
            if (fast.ids[i] != slow.ids[i]) mismatches += 1.0;
        }
    }
    add_check(report, "knn.oracle_sweep", mismatches, 0.0);
}

void permutation_invariance(VerifyReport& report, uint64_t seed) {
    ModelConfig mc = micro_model();
    Rng root(seed);
    Rng init_rng = root.split(1);
    ParameterStore params = init_params(mc, init_rng);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        Rng trial_rng = root.split2(100, static_cast<uint64_t>(trial));
        PointCloud cloud = synth_generate(SynthKind::Torus, static_cast<size_t>(mc.m), 0.0,
                                          trial_rng);
        Tape tape;
        EncoderOutput enc = encode(tape, cloud, mc, params, Mode::Eval, true);

        std::vector<size_t> perm(cloud.size());
        for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        trial_rng.shuffle(perm);
        PointCloud shuffled = cloud;
        for (size_t i = 0; i < perm.size(); ++i) shuffled.points[i] = cloud.points[perm[i]];

        Tape tape2;
        EncoderOutput enc2 = encode(tape2, shuffled, mc, params, Mode::Eval, true);
        for (int64_t f = 0; f < mc.d_shape; ++f) {
            worst = std::max(worst, std::abs(enc.shape_features.value()[static_cast<size_t>(f)] -
                                             enc2.shape_features.value()[static_cast<size_t>(f)]));
        }
        // Point features must follow the permutation.
        for (size_t i = 0; i < perm.size(); ++i) {
            const double* orig = enc.point_features.data() + perm[i] * static_cast<size_t>(mc.d_point);
            const double* moved = enc2.point_features.data() + i * static_cast<size_t>(mc.d_point);
            for (int64_t f = 0; f < mc.d_point; ++f) {
                worst = std::max(worst, std::abs(orig[f] - moved[f]));
            }
        }
    }
    add_check(report, "encoder.permutation_invariance", worst, 1e-9);
}

uint64_t hash_doubles(const std::vector<double>& v) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (double d : v) {
        uint64_t bits;
        std::memcpy(&bits, &d, 8);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xFF;
            h *= 0x100000001B3ull;
        }
    }
    return h;
}

void centroid_discipline(VerifyReport& report, uint64_t seed) {
    TrainConfig cfg = micro_train_config(seed);
    std::vector<PointCloud> clouds = micro_dataset(12, static_cast<size_t>(cfg.model.m), seed + 9);

    Rng root(cfg.seed);
    Rng init_rng = root.split(1);
    TrainState state;
    state.params = init_params(cfg.model, init_rng);
    state.root_seed = cfg.seed;
    Rng centroid_rng = root.split(2);
    state.clusters = init_centroids(clouds, cfg.model, state.params, centroid_rng);

    double violations = 0.0;
    for (int epoch = 0; epoch < 2; ++epoch) {
        uint64_t frozen = hash_doubles(state.clusters.centroids);
        std::vector<double> before = state.clusters.centroids;
        train_epoch(state, clouds, cfg, [&](size_t, const ClusterState& c) {
            if (hash_doubles(c.centroids) != frozen) violations += 1.0;
        });
        // Empty clusters must keep their previous centroid bit-exactly.
        for (int64_t k = 0; k < state.clusters.k_ub; ++k) {
            if (state.clusters.populations[static_cast<size_t>(k)] != 0) continue;
            for (int64_t f = 0; f < state.clusters.dim; ++f) {
                if (state.clusters.centroids[static_cast<size_t>(k * state.clusters.dim + f)] !=
                    before[static_cast<size_t>(k * state.clusters.dim + f)]) {
                    violations += 1.0;
                }
            }
        }
    }
    add_check(report, "trainer.centroid_discipline", violations, 0.0);
}

void determinism_check(VerifyReport& report, uint64_t seed) {
    TrainConfig cfg = micro_train_config(seed);
    cfg.epochs = 2;
    std::vector<PointCloud> clouds = micro_dataset(10, static_cast<size_t>(cfg.model.m), seed + 3);
    WorkingSet ws;
    ws.train = clouds;
    TrainState a = fit(ws, cfg);
    TrainState b = fit(ws, cfg);
    double diff = 0.0;
    if (a.history.size() != b.history.size()) {
        diff = 1.0;
    } else {
        for (size_t i = 0; i < a.history.size(); ++i) {
            if (std::memcmp(&a.history[i].loss, &b.history[i].loss, 8) != 0) diff += 1.0;
            if (a.history[i].nonempty_clusters != b.history[i].nonempty_clusters) diff += 1.0;
        }
    }
    for (const auto& [name, p] : a.params.params()) {
        const auto& q = b.params.param(name);
        if (std::memcmp(p.value().data(), q.value().data(), p.value().size() * 8) != 0) diff += 1.0;
    }
    add_check(report, "trainer.determinism", diff, 0.0);
}

}  // namespace

VerifyReport run_verification(uint64_t seed) {
    VerifyReport report;
    gradient_checks(report, seed);
    combined_loss_check(report, seed);
    chamfer_oracle_sweep(report, seed + 1);
    knn_oracle_sweep(report, seed + 2);
    permutation_invariance(report, seed + 3);
    centroid_discipline(report, seed + 4);
    determinism_check(report, seed + 5);
    return report;
}

std::string format_report(const VerifyReport& report) {
    std::ostringstream os;
    for (const auto& c : report.checks) {
        char line[192];
        std::snprintf(line, sizeof(line), "%-36s %-4s  max_error=%.3e  threshold=%.3e\n",
                      c.name.c_str(), c.pass ? "PASS" : "FAIL", c.max_error, c.threshold);
        os << line;
    }
    os << (report.all_pass() ? "verification passed" : "verification FAILED") << "\n";
    return os.str();
}

}  // namespace pointmtl
