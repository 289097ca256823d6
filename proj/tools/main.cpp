#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "pointmtl/config.hpp"
#include "pointmtl/dataset.hpp"
#include "pointmtl/evaluation.hpp"
#include "pointmtl/trainer.hpp"
#include "pointmtl/verify.hpp"

namespace pointmtl {
namespace {

void write_report(const std::filesystem::path& path,
                  const std::vector<std::pair<std::string, std::string>>& metrics) {
    std::ofstream out(path);
    if (!out) throw_io("cannot write report " + path.string());
    for (const auto& [key, value] : metrics) {
        out << key << '\t' << value << '\n';
        std::cout << key << '\t' << value << '\n';
    }
    if (!out) throw_io("failed writing report " + path.string());
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

int cmd_synth(const std::string& kinds_csv, int64_t per_class, int64_t points, uint64_t seed,
              double noise, const std::filesystem::path& out_dir) {
    std::vector<SynthKind> kinds;
    std::istringstream ss(kinds_csv);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (!token.empty()) kinds.push_back(synth_kind_from_string(token));
    }
    if (kinds.empty()) throw_validation("synth: no shape kinds given");
    if (per_class < 1) throw_validation("synth: per-class count must be positive");

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw_io("cannot create output directory " + out_dir.string());

    Rng root(seed);
    std::vector<ManifestRecord> records;
    for (size_t ki = 0; ki < kinds.size(); ++ki) {
        std::string name = to_string(kinds[ki]);
        // 70/10/20 split per class.
        int64_t n_train = per_class * 7 / 10;
        int64_t n_val = per_class / 10;
        for (int64_t i = 0; i < per_class; ++i) {
            Rng cloud_rng = root.split2(ki, static_cast<uint64_t>(i));
            PointCloud cloud =
                synth_generate(kinds[ki], static_cast<size_t>(points), noise, cloud_rng);
            char file[128];
            std::snprintf(file, sizeof(file), "%s_%04lld.txt", name.c_str(),
                          static_cast<long long>(i));
            std::string relpath = file;
            save_cloud(out_dir / relpath, cloud);
            Split split = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
            records.push_back({relpath, name, split});
        }
    }
    save_manifest(out_dir / "manifest.tsv", records);
    std::cout << "wrote " << records.size() << " clouds + manifest to " << out_dir.string()
              << "\n";
    return 0;
}

struct TrainFlags {
    std::string config_path;
    std::string out_dir;
    std::string mask;
    std::string resume;
    int64_t seed = -1;
    int64_t epochs = -1;
    bool print_config = false;
    bool verbose = false;
};

RunConfig resolve_config(const std::string& config_path, const TrainFlags& flags) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
    if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
    if (!flags.mask.empty()) cfg.train.model.task_mask = parse_task_mask(flags.mask);
    if (flags.seed >= 0) cfg.train.seed = static_cast<uint64_t>(flags.seed);
    if (flags.epochs >= 0) cfg.train.epochs = flags.epochs;
    return cfg;
}

int cmd_train(const TrainFlags& flags) {
    RunConfig cfg = resolve_config(flags.config_path, flags);
    if (flags.print_config) {
        std::cout << dump_run_config(cfg);
        return 0;
    }
    cfg.train.validate();
    Dataset dataset = load_dataset(cfg.dataset_root, cfg.dataset_root / cfg.manifest);
    WorkingSet working = preprocess(dataset, cfg.train);

    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw_io("cannot create output directory " + cfg.out_dir.string());

    FitOptions opts;
    opts.checkpoint_path = cfg.out_dir / "latest.ckpt";
    if (!flags.resume.empty()) opts.resume_from = flags.resume;
    opts.verbose = flags.verbose;

    TrainState state = fit(working, cfg.train, opts);
    write_metrics_log(cfg.out_dir / "metrics.tsv", state.history);
    {
        std::ofstream cfg_out(cfg.out_dir / "config.json");
        cfg_out << dump_run_config(cfg);
    }
    std::cout << "trained " << state.epoch << " epochs; checkpoint at "
              << (cfg.out_dir / "latest.ckpt").string() << "\n";
    return 0;
}

std::vector<int> labels_of(const std::vector<PointCloud>& clouds) {
    std::vector<int> labels(clouds.size());
    for (size_t i = 0; i < clouds.size(); ++i) labels[i] = clouds[i].shape_label;
    return labels;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& protocol, double fraction, int64_t clusters,
             const std::string& report_path, const TrainFlags& flags) {
    RunConfig cfg = resolve_config(config_path, flags);
    cfg.train.validate();
    if (fraction > 0.0) cfg.eval.partseg_fraction = fraction;
    if (clusters > 0) cfg.eval.ahc_clusters = clusters;

    Dataset dataset = load_dataset(cfg.dataset_root, cfg.dataset_root / cfg.manifest);
    WorkingSet working = preprocess(dataset, cfg.train);
    TrainState state = checkpoint_load(checkpoint, cfg.train);

    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw_io("cannot create output directory " + cfg.out_dir.string());
    std::filesystem::path report =
        report_path.empty() ? cfg.out_dir / ("report_" + protocol + ".txt")
                            : std::filesystem::path(report_path);

    const ModelConfig& mc = cfg.train.model;
    std::vector<std::pair<std::string, std::string>> metrics;
    metrics.emplace_back("protocol", protocol);

    if (protocol == "probe") {
        FeatureMatrix train_f = extract_shape_features(working.train, mc, state.params);
        FeatureMatrix test_f = extract_shape_features(working.test, mc, state.params);
        LinearProbeOptions opts;
        opts.l2 = cfg.eval.probe_l2;
        ProbeResult r = linear_probe(train_f, labels_of(working.train), test_f,
                                     labels_of(working.test), opts);
        metrics.emplace_back("probe_accuracy", fmt(r.accuracy));
        for (const auto& [label, acc] : r.per_class_accuracy) {
            metrics.emplace_back("accuracy_" + working.category_names[static_cast<size_t>(label)],
                                 fmt(acc));
        }
    } else if (protocol == "zeroshot") {
        FeatureMatrix test_f = extract_shape_features(working.test, mc, state.params);
        std::vector<int> truth = labels_of(working.test);
        int64_t n_cat = static_cast<int64_t>(working.category_names.size());
        int64_t main_k = cfg.eval.ahc_clusters > 0 ? cfg.eval.ahc_clusters : n_cat;
        std::vector<int> part = ahc_cluster(test_f, main_k);
        metrics.emplace_back("zeroshot_accuracy", fmt(majority_vote_accuracy(part, truth)));
        metrics.emplace_back("zeroshot_nmi", fmt(nmi(part, truth)));
        for (int64_t k = 2; k <= std::min<int64_t>(2 * n_cat, test_f.n); ++k) {
            std::vector<int> sweep = ahc_cluster(test_f, k);
            metrics.emplace_back("zeroshot_accuracy_k" + std::to_string(k),
                                 fmt(majority_vote_accuracy(sweep, truth)));
        }
    } else if (protocol == "partseg") {
        auto with_parts = [](const std::vector<PointCloud>& clouds) {
            std::vector<PointCloud> out;
            for (const auto& c : clouds) {
                if (c.has_parts()) out.push_back(c);
            }
            return out;
        };
        std::vector<PointCloud> train_clouds = with_parts(working.train);
        std::vector<PointCloud> test_clouds = with_parts(working.test);
        if (train_clouds.empty() || test_clouds.empty()) {
            throw_validation("partseg: dataset has no part-labeled clouds");
        }
        PointProbeData train_data, test_data;
        train_data.features = extract_point_features(train_clouds, mc, state.params);
        test_data.features = extract_point_features(test_clouds, mc, state.params);
        for (const auto& c : train_clouds) train_data.labels.push_back(c.part_labels);
        for (const auto& c : test_clouds) test_data.labels.push_back(c.part_labels);
        PointProbeOptions opts;
        opts.fraction = cfg.eval.partseg_fraction;
        opts.hidden_widths = cfg.eval.probe_widths;
        opts.iters = cfg.eval.probe_iters;
        ProbeResult r = point_probe(train_data, test_data, labels_of(test_clouds), opts);
        metrics.emplace_back("partseg_fraction", fmt(opts.fraction));
        metrics.emplace_back("partseg_accuracy", fmt(r.accuracy));
        metrics.emplace_back("instance_miou", fmt(r.instance_miou));
        metrics.emplace_back("category_miou", fmt(r.category_miou));
    } else if (protocol == "nmi") {
        auto centroid_nmi = [&](const std::vector<PointCloud>& clouds) {
            FeatureMatrix f = extract_shape_features(clouds, mc, state.params);
            Tape tape;
            Tensor z = Tensor::from_data({f.n, f.d}, f.data);
            AssignResult assign = assign_clusters(tape, z, state.clusters);
            std::vector<int> part(assign.assignments.begin(), assign.assignments.end());
            return nmi(part, labels_of(clouds));
        };
        metrics.emplace_back("nmi_train", fmt(centroid_nmi(working.train)));
        metrics.emplace_back("nmi_test", fmt(centroid_nmi(working.test)));
    } else if (protocol == "export") {
        std::vector<PointCloud> all;
        std::vector<std::string> ids;
        for (size_t s = 0; s < 3; ++s) {
            const auto& clouds = s == 0 ? working.train : (s == 1 ? working.val : working.test);
            const auto& cloud_ids =
                s == 0 ? working.train_ids : (s == 1 ? working.val_ids : working.test_ids);
            all.insert(all.end(), clouds.begin(), clouds.end());
            ids.insert(ids.end(), cloud_ids.begin(), cloud_ids.end());
        }
        FeatureMatrix f = extract_shape_features(all, mc, state.params);
        std::filesystem::path path = cfg.out_dir / "embeddings.tsv";
        export_embeddings(path, ids, labels_of(all), f);
        metrics.emplace_back("embeddings", path.string());
        metrics.emplace_back("records", std::to_string(f.n));
        metrics.emplace_back("dims", std::to_string(f.d));
    } else {
        throw_validation("unknown protocol '" + protocol +
                         "' (expected probe, zeroshot, partseg, nmi, export)");
    }
    write_report(report, metrics);
    return 0;
}

int cmd_verify(uint64_t seed) {
    VerifyReport report = run_verification(seed);
    std::cout << format_report(report);
    return report.all_pass() ? 0 : 2;
}

int run(int argc, char** argv) {
    CLI::App app{"unsupervised multi-task feature learning on point clouds"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string kinds = "sphere,cube,cylinder,torus";
    int64_t per_class = 100, points = 256;
    int64_t synth_seed = 1;
    double noise = 0.0;
    std::string synth_out = "data/synth";
    synth->add_option("--kinds", kinds, "comma-separated shape kinds");
    synth->add_option("--per-class", per_class, "clouds per class");
    synth->add_option("--points", points, "points per cloud");
    synth->add_option("--seed", synth_seed, "rng seed");
    synth->add_option("--noise", noise, "surface jitter std before normalization");
    synth->add_option("--out", synth_out, "output directory");

    // train
    auto* train = app.add_subcommand("train", "train a model from a config file");
    TrainFlags tf;
    train->add_option("--config", tf.config_path, "JSON config path");
    train->add_option("--out", tf.out_dir, "output directory override");
    train->add_option("--mask", tf.mask, "enabled tasks, e.g. reconstruction or all");
    train->add_option("--seed", tf.seed, "seed override");
    train->add_option("--epochs", tf.epochs, "epoch count override");
    train->add_option("--resume", tf.resume, "resume from checkpoint");
    train->add_flag("--print-config", tf.print_config, "print the resolved config and exit");
    train->add_flag("--verbose", tf.verbose, "per-epoch progress on stderr");

    // eval (and the export alias)
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    TrainFlags ef;
    std::string checkpoint, protocol = "probe", report_path;
    double fraction = 0.0;
    int64_t clusters = 0;
    eval->add_option("--config", ef.config_path, "JSON config path");
    eval->add_option("--checkpoint", checkpoint, "checkpoint path")->required();
    eval->add_option("--protocol", protocol, "probe|zeroshot|partseg|nmi|export");
    eval->add_option("--fraction", fraction, "labeled fraction for partseg");
    eval->add_option("--clusters", clusters, "cluster count for zeroshot");
    eval->add_option("--report", report_path, "report file path");
    eval->add_option("--out", ef.out_dir, "output directory override");
    eval->add_option("--seed", ef.seed, "seed override");
    eval->add_option("--mask", ef.mask, "task mask override (must match the checkpoint)");

    auto* exp = app.add_subcommand("export", "export embeddings from a checkpoint");
    TrainFlags xf;
    std::string x_checkpoint, x_report;
    exp->add_option("--config", xf.config_path, "JSON config path");
    exp->add_option("--checkpoint", x_checkpoint, "checkpoint path")->required();
    exp->add_option("--report", x_report, "report file path");
    exp->add_option("--out", xf.out_dir, "output directory override");

    // verify
    auto* verify = app.add_subcommand("verify", "run the numerical verification suite");
    int64_t verify_seed = 0xA11CE5;
    verify->add_option("--seed", verify_seed, "rng seed");

    CLI11_PARSE(app, argc, argv);

    if (synth->parsed()) {
        return cmd_synth(kinds, per_class, points, static_cast<uint64_t>(synth_seed), noise,
                         synth_out);
    }
    if (train->parsed()) return cmd_train(tf);
    if (eval->parsed()) {
        return cmd_eval(ef.config_path, checkpoint, protocol, fraction, clusters, report_path, ef);
    }
    if (exp->parsed()) {
        return cmd_eval(xf.config_path, x_checkpoint, "export", 0.0, 0, x_report, xf);
    }
    if (verify->parsed()) return cmd_verify(static_cast<uint64_t>(verify_seed));
    return 1;
}

}  // namespace
}  // namespace pointmtl

int main(int argc, char** argv) {
    try {
        return pointmtl::run(argc, argv);
    } catch (const pointmtl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
