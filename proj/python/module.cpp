#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pointmtl/config.hpp"
#include "pointmtl/dataset.hpp"
#include "pointmtl/evaluation.hpp"
#include "pointmtl/objectives.hpp"
#include "pointmtl/trainer.hpp"
#include "pointmtl/verify.hpp"

namespace py = pybind11;
using namespace pointmtl;

namespace {

std::vector<Point3> to_points(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2 || arr.shape(1) != 3) {
        throw py::value_error("expected an (M, 3) float array");
    }
    std::vector<Point3> pts(static_cast<size_t>(arr.shape(0)));
    auto r = arr.unchecked<2>();
    for (py::ssize_t i = 0; i < arr.shape(0); ++i) {
        pts[static_cast<size_t>(i)] = {r(i, 0), r(i, 1), r(i, 2)};
    }
    return pts;
}

py::array_t<double> from_points(const std::vector<Point3>& pts) {
    py::array_t<double> arr({static_cast<py::ssize_t>(pts.size()), static_cast<py::ssize_t>(3)});
    auto w = arr.mutable_unchecked<2>();
    for (size_t i = 0; i < pts.size(); ++i) {
        for (int c = 0; c < 3; ++c) w(static_cast<py::ssize_t>(i), c) = pts[i][c];
    }
    return arr;
}

py::array_t<double> feature_array(const FeatureMatrix& f) {
    py::array_t<double> arr({static_cast<py::ssize_t>(f.n), static_cast<py::ssize_t>(f.d)});
    std::copy(f.data.begin(), f.data.end(), arr.mutable_data());
    return arr;
}

FeatureMatrix to_features(const py::array_t<double, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw py::value_error("expected an (n, d) float array");
    FeatureMatrix f;
    f.n = arr.shape(0);
    f.d = arr.shape(1);
    f.data.assign(arr.data(), arr.data() + f.n * f.d);
    return f;
}

RunConfig config_from_json(const std::string& text) { return parse_run_config(text); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Unsupervised multi-task point-cloud feature learning: C++ core bindings";

    py::register_exception<Error>(m, "CoreError");

    m.def(
        "synth_generate",
        [](const std::string& kind, size_t m_pts, double noise, uint64_t seed) {
            Rng rng(seed);
            PointCloud c = synth_generate(synth_kind_from_string(kind), m_pts, noise, rng);
            return py::make_tuple(from_points(c.points), c.part_labels);
        },
        py::arg("kind"), py::arg("m") = 256, py::arg("noise") = 0.0, py::arg("seed") = 1,
        "Sample a normalized synthetic shape; returns (points, part_labels).");

    m.def(
        "normalize_unit_sphere",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pts) {
            PointCloud c;
            c.points = to_points(pts);
            return from_points(normalize_unit_sphere(c).points);
        },
        py::arg("points"));

    m.def(
        "knn",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pts, int64_t k) {
            std::vector<Point3> p = to_points(pts);
            NeighborIndex idx = knn(p, k);
            py::array_t<int32_t> arr(
                {static_cast<py::ssize_t>(p.size()), static_cast<py::ssize_t>(k)});
            std::copy(idx.ids.begin(), idx.ids.end(), arr.mutable_data());
            return arr;
        },
        py::arg("points"), py::arg("k"));

    m.def(
        "chamfer",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
            return chamfer_bruteforce(to_points(a), to_points(b));
        },
        py::arg("a"), py::arg("b"),
        "Symmetric Chamfer distance between two point sets.");

    m.def(
        "nmi",
        [](const std::vector<int>& a, const std::vector<int>& b) { return nmi(a, b); },
        py::arg("a"), py::arg("b"));

    m.def(
        "majority_vote_accuracy",
        [](const std::vector<int>& clusters, const std::vector<int>& truth) {
            return majority_vote_accuracy(clusters, truth);
        },
        py::arg("clusters"), py::arg("truth"));

    m.def(
        "ahc_cluster",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& feats,
           int64_t n_clusters) { return ahc_cluster(to_features(feats), n_clusters); },
        py::arg("features"), py::arg("n_clusters"));

    m.def("default_config", [] { return dump_run_config(RunConfig{}); },
          "Fully resolved default configuration as JSON.");
    m.def("desk_config",
          [] {
              RunConfig cfg;
              cfg.train = TrainConfig::desk_preset();
              return dump_run_config(cfg);
          },
          "Desk-scale preset configuration as JSON.");

    m.def(
        "train",
        [](const std::string& config_json, const std::string& dataset_root,
           const std::string& manifest, const std::string& checkpoint_path) {
            RunConfig cfg = config_from_json(config_json);
            if (!dataset_root.empty()) cfg.dataset_root = dataset_root;
            if (!manifest.empty()) cfg.manifest = manifest;
            cfg.train.validate();
            Dataset dataset = load_dataset(cfg.dataset_root, cfg.dataset_root / cfg.manifest);
            WorkingSet working = preprocess(dataset, cfg.train);
            FitOptions opts;
            if (!checkpoint_path.empty()) opts.checkpoint_path = checkpoint_path;
            TrainState state = fit(working, cfg.train, opts);
            py::list history;
            for (const EpochMetrics& e : state.history) {
                py::dict row;
                row["epoch"] = e.epoch;
                row["loss"] = e.loss;
                row["kmeans"] = e.kmeans;
                row["cross_entropy"] = e.cross_entropy;
                row["chamfer"] = e.chamfer;
                row["nonempty_clusters"] = e.nonempty_clusters;
                row["nmi"] = e.nmi;
                history.append(row);
            }
            return history;
        },
        py::arg("config_json"), py::arg("dataset_root") = "", py::arg("manifest") = "",
        py::arg("checkpoint") = "",
        "Train from a JSON config string; returns the per-epoch metric history.");

    m.def(
        "encode",
        [](const std::string& config_json, const std::string& checkpoint_path,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& pts) {
            RunConfig cfg = config_from_json(config_json);
            TrainState state = checkpoint_load(checkpoint_path, cfg.train);
            PointCloud cloud;
            cloud.points = to_points(pts);
            Tape tape;
            EncoderOutput enc = encode(tape, cloud, cfg.train.model, state.params, Mode::Eval,
                                       /*want_point_features=*/true);
            FeatureMatrix shape{1, cfg.train.model.d_shape, enc.shape_features.value()};
            FeatureMatrix point{cfg.train.model.m, cfg.train.model.d_point,
                                std::move(enc.point_features)};
            return py::make_tuple(feature_array(shape), feature_array(point));
        },
        py::arg("config_json"), py::arg("checkpoint"), py::arg("points"),
        "Frozen features for one cloud; returns (shape_feature, point_features).");

    m.def(
        "extract_shape_features",
        [](const std::string& config_json, const std::string& checkpoint_path,
           const std::string& dataset_root, const std::string& manifest, const std::string& split) {
            RunConfig cfg = config_from_json(config_json);
            if (!dataset_root.empty()) cfg.dataset_root = dataset_root;
            if (!manifest.empty()) cfg.manifest = manifest;
            TrainState state = checkpoint_load(checkpoint_path, cfg.train);
            Dataset dataset = load_dataset(cfg.dataset_root, cfg.dataset_root / cfg.manifest);
            WorkingSet working = preprocess(dataset, cfg.train);
            const std::vector<PointCloud>& clouds =
                split == "train" ? working.train : (split == "val" ? working.val : working.test);
            FeatureMatrix f = extract_shape_features(clouds, cfg.train.model, state.params);
            std::vector<int> labels(clouds.size());
            for (size_t i = 0; i < clouds.size(); ++i) labels[i] = clouds[i].shape_label;
            return py::make_tuple(feature_array(f), labels);
        },
        py::arg("config_json"), py::arg("checkpoint"), py::arg("dataset_root") = "",
        py::arg("manifest") = "", py::arg("split") = "test");

    m.def(
        "linear_probe_accuracy",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& train_feats,
           const std::vector<int>& train_labels,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& test_feats,
           const std::vector<int>& test_labels) {
            return linear_probe(to_features(train_feats), train_labels, to_features(test_feats),
                                test_labels)
                .accuracy;
        },
        py::arg("train_features"), py::arg("train_labels"), py::arg("test_features"),
        py::arg("test_labels"));

    m.def(
        "verify",
        [](uint64_t seed) {
            VerifyReport report = run_verification(seed);
            py::list out;
            for (const CheckResult& c : report.checks) {
                py::dict row;
                row["name"] = c.name;
                row["max_error"] = c.max_error;
                row["threshold"] = c.threshold;
                row["pass"] = c.pass;
                out.append(row);
            }
            return out;
        },
        py::arg("seed") = 0xA11CE5,
        "Run the numerical verification suite; returns one record per check.");
}
