// Acceptance suite: runs every release criterion end to end and prints one
// PASS/FAIL line per criterion. Exit code 0 only when all criteria hold.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pointmtl/evaluation.hpp"
#include "pointmtl/grad_check.hpp"
#include "pointmtl/model.hpp"
#include "pointmtl/objectives.hpp"
#include "pointmtl/parallel.hpp"
#include "pointmtl/trainer.hpp"
#include "pointmtl/verify.hpp"

using namespace pointmtl;
namespace fs = std::filesystem;

namespace {

struct Criterion {
    int id;
    bool pass;
    std::string detail;
};

std::vector<Criterion> g_results;

void report(int id, bool pass, const std::string& detail) {
    g_results.push_back({id, pass, detail});
    std::printf("CRITERION %2d %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---- shared desk-scale artifacts ----

struct DeskRun {
    TrainConfig cfg;
    WorkingSet working;
    TrainState state;
    double wall_seconds = 0.0;
};

std::vector<PointCloud> synth_class_set(const std::vector<SynthKind>& kinds, size_t per_class,
                                        size_t m, uint64_t seed, std::vector<Split>* splits) {
    std::vector<PointCloud> clouds;
    Rng root(seed);
    for (size_t ki = 0; ki < kinds.size(); ++ki) {
        size_t n_train = per_class * 7 / 10;
        size_t n_val = per_class / 10;
        for (size_t i = 0; i < per_class; ++i) {
            Rng cloud_rng = root.split2(ki, i);
            PointCloud c = synth_generate(kinds[ki], m, 0.0, cloud_rng);
            c.shape_label = static_cast<int>(ki);
            clouds.push_back(std::move(c));
            if (splits) {
                splits->push_back(i < n_train ? Split::Train
                                              : (i < n_train + n_val ? Split::Val : Split::Test));
            }
        }
    }
    return clouds;
}

WorkingSet desk_working_set(uint64_t seed) {
    std::vector<Split> splits;
    std::vector<PointCloud> clouds = synth_class_set(
        {SynthKind::Sphere, SynthKind::Cube, SynthKind::Cylinder, SynthKind::Torus}, 100, 256,
        seed, &splits);
    WorkingSet ws;
    ws.category_names = {"sphere", "cube", "cylinder", "torus"};
    for (size_t i = 0; i < clouds.size(); ++i) {
        if (splits[i] == Split::Train) {
            ws.train.push_back(clouds[i]);
        } else if (splits[i] == Split::Val) {
            ws.val.push_back(clouds[i]);
        } else {
            ws.test.push_back(clouds[i]);
        }
    }
    return ws;
}

std::vector<int> labels_of(const std::vector<PointCloud>& clouds) {
    std::vector<int> labels(clouds.size());
    for (size_t i = 0; i < clouds.size(); ++i) labels[i] = clouds[i].shape_label;
    return labels;
}

double probe_accuracy(DeskRun& run) {
    FeatureMatrix train_f =
        extract_shape_features(run.working.train, run.cfg.model, run.state.params);
    FeatureMatrix test_f = extract_shape_features(run.working.test, run.cfg.model, run.state.params);
    return linear_probe(train_f, labels_of(run.working.train), test_f,
                        labels_of(run.working.test))
        .accuracy;
}

DeskRun train_desk(uint64_t seed, const TaskMask& mask) {
    DeskRun run;
    run.cfg = TrainConfig::desk_preset();
    run.cfg.seed = seed;
    run.cfg.model.task_mask = mask;
    run.working = desk_working_set(977);  // dataset seed fixed across runs
    auto start = std::chrono::steady_clock::now();
    run.state = fit(run.working, run.cfg);
    run.wall_seconds = seconds_since(start);
    return run;
}

// ---- criteria ----

void criterion_1_gradients() {
    auto start = std::chrono::steady_clock::now();
    VerifyReport ops = run_verification();
    double worst_op = 0.0;
    bool ops_pass = true;
    for (const auto& c : ops.checks) {
        if (c.name.rfind("grad.", 0) == 0) {
            worst_op = std::max(worst_op, c.max_error);
            ops_pass = ops_pass && c.pass;
        }
    }

    // Full combined loss on a 2-cloud micro-batch of the desk model preset.
    // Eval-mode forward: train-mode batch norm over exactly two clouds
    // normalizes shape-level features to +-1, which makes the loss locally
    // flat in upstream weights and the relative-error test ill-posed.
    ModelConfig mc = ModelConfig::desk_preset();
    TrainConfig cfg = TrainConfig::desk_preset();
    uint64_t seed = 0xACC01;
    Rng root(seed);
    Rng init_rng = root.split(1);
    ParameterStore params = init_params(mc, init_rng);
    std::vector<PointCloud> clouds;
    {
        Rng c1 = root.split(10), c2 = root.split(11);
        clouds.push_back(synth_generate(SynthKind::Cube, 256, 0.0, c1));
        clouds.push_back(synth_generate(SynthKind::Torus, 256, 0.0, c2));
    }
    ClusterState clusters = ClusterState::make(mc.k_ub, mc.d_shape);
    {
        Rng crng = root.split(2);
        for (auto& c : clusters.centroids) c = crng.uniform(-1.0, 1.0);
    }
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
    opts.max_coords_per_input = 8;  // deterministic subsample per tensor
    opts.sample_seed = seed;
    double combined_err = grad_check(loss_fn, inputs, opts);

    double elapsed = seconds_since(start);
    bool pass = ops_pass && combined_err < 1e-4 && elapsed < 120.0;
    std::ostringstream d;
    d << "per-op worst rel err " << worst_op << ", combined-loss rel err " << combined_err
      << ", runtime " << elapsed << "s (< 120s)";
    report(1, pass, d.str());
}

void criterion_2_chamfer_oracle() {
    auto start = std::chrono::steady_clock::now();
    Rng rng(0xACC02);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        size_t mb = trial < 10 ? 48 : 64;  // ten unequal-size pairs
        std::vector<Point3> a(64), b(mb);
        for (auto& p : a) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        for (auto& p : b) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        std::vector<double> av, bv;
        for (const auto& p : a) av.insert(av.end(), p.begin(), p.end());
        for (const auto& p : b) bv.insert(bv.end(), p.begin(), p.end());
        Tape tape;
        Tensor ta = Tensor::from_data({64, 3}, av);
        Tensor tb = Tensor::from_data({static_cast<int64_t>(mb), 3}, bv);
        worst = std::max(worst, std::abs(chamfer(tape, ta, tb).item() - chamfer_bruteforce(a, b)));
    }
    double elapsed = seconds_since(start);
    bool pass = worst < 1e-9 && elapsed < 10.0;
    std::ostringstream d;
    d << "max |accelerated - oracle| " << worst << " (< 1e-9), runtime " << elapsed
      << "s (< 10s)";
    report(2, pass, d.str());
}

void criterion_3_micro_examples() {
    bool pass = true;
    std::ostringstream d;
    Tape tape;

    Tensor a1 = Tensor::from_data({1, 3}, {0, 0, 0});
    Tensor b1 = Tensor::from_data({1, 3}, {1, 0, 0});
    pass = pass && std::abs(chamfer(tape, a1, b1).item() - 1.0) < 1e-9;

    Tensor a2 = Tensor::from_data({2, 3}, {0, 0, 0, 2, 0, 0});
    Tensor b2 = Tensor::from_data({2, 3}, {0, 0, 0, 0, 1, 0});
    pass = pass && std::abs(chamfer(tape, a2, b2).item() - 1.25) < 1e-9;

    Tensor uniform4 = Tensor::zeros({1, 4});
    Tensor t4 = Tensor::from_data({1, 4}, {1, 0, 0, 0});
    pass = pass && std::abs(softmax_cross_entropy(tape, uniform4, t4).item() - std::log(4.0)) < 1e-9;
    Tensor uniform500 = Tensor::zeros({1, 500});
    pass = pass &&
           std::abs(pseudo_label_loss(tape, uniform500, {123}).item() - std::log(500.0)) < 1e-9;

    ClusterState clusters = ClusterState::make(2, 2);
    clusters.centroids = {1, 0, 0, 1};
    Tensor tie = Tensor::from_data({1, 2}, {0.5, 0.5});
    AssignResult r = assign_clusters(tape, tie, clusters);
    pass = pass && r.assignments[0] == 0 && std::abs(r.loss.item() - 0.5) < 1e-9;

    ClusterState mean_case = ClusterState::make(1, 2);
    double z1[2] = {0, 0}, z2[2] = {2, 0};
    mean_case.accumulate(0, z1);
    mean_case.accumulate(0, z2);
    mean_case.update_centroids();
    pass = pass && std::abs(mean_case.centroids[0] - 1.0) < 1e-9 &&
           std::abs(mean_case.centroids[1]) < 1e-9;

    pass = pass && std::abs(shape_miou({0, 0, 1, 1}, {0, 0, 1, 0}) - 7.0 / 12.0) < 1e-9;

    d << "chamfer 1.0 & 1.25, CE ln4 & ln500, k-means tie 0.5, centroid (1,0), mIoU 7/12";
    report(3, pass, d.str());
}

void criterion_4_permutation() {
    ModelConfig mc = ModelConfig::desk_preset();
    Rng root(0xACC04);
    Rng init_rng = root.split(1);
    ParameterStore params = init_params(mc, init_rng);
    const SynthKind kinds[] = {SynthKind::Sphere, SynthKind::Cube, SynthKind::Cylinder,
                               SynthKind::Torus};
    double worst_shape = 0.0, worst_point = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        Rng trial_rng = root.split2(50, static_cast<uint64_t>(trial));
        PointCloud cloud = synth_generate(kinds[trial % 4], 256, 0.0, trial_rng);
        Tape t1;
        EncoderOutput base = encode(t1, cloud, mc, params, Mode::Eval, true);

        std::vector<size_t> perm(cloud.size());
        for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        trial_rng.shuffle(perm);
        PointCloud shuffled = cloud;
        for (size_t i = 0; i < perm.size(); ++i) shuffled.points[i] = cloud.points[perm[i]];
        Tape t2;
        EncoderOutput moved = encode(t2, shuffled, mc, params, Mode::Eval, true);

        for (int64_t f = 0; f < mc.d_shape; ++f) {
            worst_shape = std::max(worst_shape,
                                   std::abs(base.shape_features.value()[static_cast<size_t>(f)] -
                                            moved.shape_features.value()[static_cast<size_t>(f)]));
        }
        for (size_t i = 0; i < perm.size(); ++i) {
            const double* orig =
                base.point_features.data() + perm[i] * static_cast<size_t>(mc.d_point);
            const double* now = moved.point_features.data() + i * static_cast<size_t>(mc.d_point);
            for (int64_t f = 0; f < mc.d_point; ++f) {
                worst_point = std::max(worst_point, std::abs(orig[f] - now[f]));
            }
        }
    }
    bool pass = worst_shape < 1e-9 && worst_point < 1e-9;
    std::ostringstream d;
    d << "50 trials, max shape-feature diff " << worst_shape << ", max point-feature diff "
      << worst_point << " (< 1e-9)";
    report(4, pass, d.str());
}

uint64_t hash_doubles(const std::vector<double>& v) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (double x : v) {
        uint64_t bits;
        std::memcpy(&bits, &x, 8);
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xFF;
            h *= 0x100000001B3ull;
        }
    }
    return h;
}

void criterion_5_centroid_discipline() {
    TrainConfig cfg = TrainConfig::desk_preset();
    cfg.seed = 0xACC05;
    cfg.epochs = 3;
    WorkingSet ws;
    std::vector<PointCloud> clouds = synth_class_set(
        {SynthKind::Sphere, SynthKind::Cube, SynthKind::Cylinder, SynthKind::Torus}, 10, 256,
        0xACC05, nullptr);
    ws.train = clouds;  // 40 clouds, K_UB 32 leaves some clusters empty

    Rng root(cfg.seed);
    TrainState state;
    Rng init_rng = root.split(1);
    state.params = init_params(cfg.model, init_rng);
    state.root_seed = cfg.seed;
    Rng crng = root.split(2);
    state.clusters = init_centroids(ws.train, cfg.model, state.params, crng);

    bool frozen_ok = true, empty_ok = true, changed_ok = true, saw_empty = false;
    uint64_t prev_hash = hash_doubles(state.clusters.centroids);
    std::vector<int64_t> prev_assignments;
    for (int epoch = 0; epoch < 3; ++epoch) {
        uint64_t epoch_hash = hash_doubles(state.clusters.centroids);
        std::vector<double> before = state.clusters.centroids;
        train_epoch(state, ws.train, cfg, [&](size_t, const ClusterState& c) {
            if (hash_doubles(c.centroids) != epoch_hash) frozen_ok = false;
        });
        for (int64_t k = 0; k < state.clusters.k_ub; ++k) {
            if (state.clusters.populations[static_cast<size_t>(k)] != 0) continue;
            saw_empty = true;
            for (int64_t f = 0; f < state.clusters.dim; ++f) {
                if (state.clusters.centroids[static_cast<size_t>(k * state.clusters.dim + f)] !=
                    before[static_cast<size_t>(k * state.clusters.dim + f)]) {
                    empty_ok = false;
                }
            }
        }
        uint64_t new_hash = hash_doubles(state.clusters.centroids);
        if (new_hash == prev_hash && state.clusters.nonempty_count() > 0) {
            // The matrix may only stay put if no assignments changed.
            changed_ok = false;
        }
        prev_hash = new_hash;
    }
    bool pass = frozen_ok && empty_ok && changed_ok && saw_empty;
    std::ostringstream d;
    d << "hash frozen within epochs: " << (frozen_ok ? "yes" : "NO")
      << ", empty clusters retained exactly: " << (empty_ok && saw_empty ? "yes" : "NO")
      << ", matrix changed across epochs: " << (changed_ok ? "yes" : "NO");
    report(5, pass, d.str());
}

DeskRun criterion_6_desk_training() {
    DeskRun run = train_desk(1, TaskMask{});
    double nmi_final = run.state.history.back().nmi;
    int64_t nonempty = run.state.history.back().nonempty_clusters;
    double acc = probe_accuracy(run);
    double budget = max_threads() > 1 ? 480.0 : 1800.0;
    bool pass = nmi_final >= 0.5 && acc >= 0.90 && nonempty > 1 && nonempty < 32 &&
                run.wall_seconds <= budget;
    std::ostringstream d;
    d << "final NMI " << nmi_final << " (>= 0.5), probe accuracy " << acc
      << " (>= 0.90), non-empty clusters " << nonempty << " (in (1,32)), wall "
      << run.wall_seconds << "s (<= " << budget << "s, " << max_threads() << " threads)";
    report(6, pass, d.str());
    return run;
}

void criterion_7_ablations(DeskRun& full_seed1) {
    struct Config {
        const char* name;
        TaskMask mask;
    };
    const Config configs[] = {
        {"clustering_only", {true, false, false}},
        {"classification_only", {false, true, false}},
        {"reconstruction_only", {false, false, true}},
        {"full", {true, true, true}},
    };
    const uint64_t seeds[] = {1, 2, 3};

    struct RunOutcome {
        double probe = 0.0;
        int64_t nonempty = 0;
        bool failed = false;
    };
    RunOutcome outcomes[4][3];

    // Seed 1 of the full configuration reuses the criterion-6 run.
    outcomes[3][0].probe = probe_accuracy(full_seed1);
    outcomes[3][0].nonempty = full_seed1.state.history.back().nonempty_clusters;

    std::vector<std::pair<int, int>> jobs;
    for (int c = 0; c < 4; ++c) {
        for (int s = 0; s < 3; ++s) {
            if (c == 3 && s == 0) continue;
            jobs.emplace_back(c, s);
        }
    }
    parallel_for(jobs.size(), [&](size_t j) {
        auto [c, s] = jobs[j];
        try {
            DeskRun run = train_desk(seeds[s], configs[c].mask);
            outcomes[c][s].probe = probe_accuracy(run);
            outcomes[c][s].nonempty = run.state.history.back().nonempty_clusters;
        } catch (const Error&) {
            outcomes[c][s].failed = true;  // a diverged degenerate run counts as collapse
        }
    });

    int verdicts = 0;
    std::ostringstream detail;
    for (int s = 0; s < 3; ++s) {
        auto collapsed = [&](int c) {
            return outcomes[c][s].failed || outcomes[c][s].nonempty == 1 ||
                   outcomes[c][s].probe < 0.40;
        };
        double full = outcomes[3][s].probe;
        double recon = outcomes[2][s].probe;
        double best = 0.0;
        for (int c = 0; c < 4; ++c) {
            if (!outcomes[c][s].failed) best = std::max(best, outcomes[c][s].probe);
        }
        bool seed_pass = collapsed(0) && collapsed(1) && !outcomes[3][s].failed &&
                         !outcomes[2][s].failed && full >= recon - 0.02 && full >= best - 0.01;
        verdicts += seed_pass;
        detail << "seed" << seeds[s] << "[cluster " << outcomes[0][s].probe << "/"
               << outcomes[0][s].nonempty << "c, class " << outcomes[1][s].probe << "/"
               << outcomes[1][s].nonempty << "c, recon " << recon << ", full " << full << "] ";
    }
    bool pass = verdicts >= 2;
    std::ostringstream d;
    d << "majority verdict " << verdicts << "/3: " << detail.str();
    report(7, pass, d.str());
}

void criterion_8_part_segmentation(DeskRun& desk) {
    // 100 two-part shapes: 50 cylinders + 50 cubes, standard split.
    std::vector<Split> splits;
    std::vector<PointCloud> clouds =
        synth_class_set({SynthKind::Cylinder, SynthKind::Cube}, 50, 256, 0xACC08, &splits);
    std::vector<PointCloud> train_clouds, test_clouds;
    for (size_t i = 0; i < clouds.size(); ++i) {
        if (splits[i] == Split::Train) train_clouds.push_back(clouds[i]);
        if (splits[i] == Split::Test) test_clouds.push_back(clouds[i]);
    }
    PointProbeData train_data, test_data;
    train_data.features = extract_point_features(train_clouds, desk.cfg.model, desk.state.params);
    test_data.features = extract_point_features(test_clouds, desk.cfg.model, desk.state.params);
    for (const auto& c : train_clouds) train_data.labels.push_back(c.part_labels);
    for (const auto& c : test_clouds) test_data.labels.push_back(c.part_labels);

    PointProbeOptions opts;
    opts.fraction = 0.05;
    ProbeResult r = point_probe(train_data, test_data, labels_of(test_clouds), opts);
    bool pass = r.instance_miou >= 0.70;
    std::ostringstream d;
    d << "5% labels on 2-part cylinders/cubes: instance mIoU " << r.instance_miou
      << " (>= 0.70), accuracy " << r.accuracy << ", category mIoU " << r.category_miou;
    report(8, pass, d.str());
}

void criterion_9_zeroshot(DeskRun& desk) {
    FeatureMatrix test_f = extract_shape_features(desk.working.test, desk.cfg.model,
                                                  desk.state.params);
    std::vector<int> clusters = ahc_cluster(test_f, 4);
    double acc = majority_vote_accuracy(clusters, labels_of(desk.working.test));
    bool pass = acc >= 0.60;
    std::ostringstream d;
    d << "AHC to 4 clusters + majority vote: accuracy " << acc << " (>= 0.60)";
    report(9, pass, d.str());
}

void criterion_10_determinism() {
    namespace fsys = std::filesystem;
    TrainConfig cfg = TrainConfig::desk_preset();
    cfg.seed = 0xACC10;
    cfg.epochs = 3;
    WorkingSet ws;
    ws.train = synth_class_set(
        {SynthKind::Sphere, SynthKind::Cube, SynthKind::Cylinder, SynthKind::Torus}, 10, 256,
        0xACC10, nullptr);

    TrainState a = fit(ws, cfg);
    TrainState b = fit(ws, cfg);
    bool identical = a.history.size() == b.history.size();
    for (size_t i = 0; identical && i < a.history.size(); ++i) {
        identical = std::memcmp(&a.history[i].loss, &b.history[i].loss, 8) == 0 &&
                    std::memcmp(&a.history[i].kmeans, &b.history[i].kmeans, 8) == 0 &&
                    std::memcmp(&a.history[i].chamfer, &b.history[i].chamfer, 8) == 0 &&
                    a.history[i].nonempty_clusters == b.history[i].nonempty_clusters;
    }

    fsys::path dir = fsys::temp_directory_path() / "pmtl_acceptance_ckpt";
    fsys::create_directories(dir);
    TrainConfig two = cfg;
    two.epochs = 2;
    FitOptions save_opts;
    save_opts.checkpoint_path = dir / "mid.ckpt";
    fit(ws, two, save_opts);
    FitOptions resume_opts;
    resume_opts.resume_from = dir / "mid.ckpt";
    TrainState resumed = fit(ws, cfg, resume_opts);
    bool resume_exact =
        resumed.history.size() == 3 &&
        std::memcmp(&resumed.history[2].loss, &a.history[2].loss, 8) == 0 &&
        resumed.history[2].nonempty_clusters == a.history[2].nonempty_clusters;
    for (const auto& [name, p] : a.params.params()) {
        resume_exact = resume_exact && std::memcmp(p.value().data(),
                                                   resumed.params.param(name).value().data(),
                                                   p.value().size() * 8) == 0;
    }
    fsys::remove_all(dir);

    bool pass = identical && resume_exact;
    std::ostringstream d;
    d << "identical seeds -> identical histories: " << (identical ? "yes" : "NO")
      << "; checkpoint resume bit-exact: " << (resume_exact ? "yes" : "NO");
    report(10, pass, d.str());
}

}  // namespace

int main() {
    criterion_1_gradients();
    criterion_2_chamfer_oracle();
    criterion_3_micro_examples();
    criterion_4_permutation();
    criterion_5_centroid_discipline();
    DeskRun desk = criterion_6_desk_training();
    criterion_7_ablations(desk);
    criterion_8_part_segmentation(desk);
    criterion_9_zeroshot(desk);
    criterion_10_determinism();

    int passed = 0;
    for (const auto& c : g_results) passed += c.pass;
    std::printf("ACCEPTANCE: %d/%zu criteria passed\n", passed, g_results.size());
    return passed == static_cast<int>(g_results.size()) ? 0 : 1;
}
