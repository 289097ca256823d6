#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "pointmtl/evaluation.hpp"

using namespace pointmtl;

namespace {

FeatureMatrix make_features(int64_t n, int64_t d, const std::vector<double>& data) {
    FeatureMatrix f;
    f.n = n;
    f.d = d;
    f.data = data;
    return f;
}

// Exhaustive average-linkage reference: recomputes every cluster-pair distance
// from raw points at each merge instead of using the Lance-Williams update.
std::vector<int> ahc_oracle(const FeatureMatrix& feats, int64_t n_clusters) {
    std::vector<std::vector<int64_t>> clusters;
    for (int64_t i = 0; i < feats.n; ++i) clusters.push_back({i});
    auto avg_dist = [&](const std::vector<int64_t>& a, const std::vector<int64_t>& b) {
        double sum = 0.0;
        for (int64_t i : a) {
            for (int64_t j : b) {
                double d2 = 0.0;
                for (int64_t f = 0; f < feats.d; ++f) {
                    double diff = feats.row(i)[f] - feats.row(j)[f];
                    d2 += diff * diff;
                }
                sum += std::sqrt(d2);
            }
        }
        return sum / static_cast<double>(a.size() * b.size());
    };
    while (static_cast<int64_t>(clusters.size()) > n_clusters) {
        double best = std::numeric_limits<double>::infinity();
        size_t bi = 0, bj = 0;
        for (size_t i = 0; i < clusters.size(); ++i) {
            for (size_t j = i + 1; j < clusters.size(); ++j) {
                double d = avg_dist(clusters[i], clusters[j]);
                // Tie-break by the smallest (smallest-member_i, smallest-member_j).
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
        std::sort(clusters[bi].begin(), clusters[bi].end());
        clusters.erase(clusters.begin() + static_cast<int64_t>(bj));
        // Keep clusters ordered by smallest member so scan order matches ids.
        std::sort(clusters.begin(), clusters.end());
    }
    std::vector<int> labels(static_cast<size_t>(feats.n));
    for (size_t c = 0; c < clusters.size(); ++c) {
        for (int64_t m : clusters[c]) labels[static_cast<size_t>(m)] = static_cast<int>(c);
    }
    return labels;
}

}  // namespace

TEST_CASE("nmi: identical, independent, symmetric, relabel-invariant") {
    std::vector<int> a = {0, 0, 1, 1, 2, 2};
    CHECK(nmi(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<int> x = {0, 0, 1, 1};
    std::vector<int> y = {0, 1, 0, 1};
    CHECK(nmi(x, y) == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<int> b = {1, 0, 0, 2, 2, 1};
    CHECK(std::abs(nmi(a, b) - nmi(b, a)) < 1e-12);

    // Relabeling either side changes nothing.
    std::vector<int> a_relabel = {7, 7, 3, 3, 9, 9};
    CHECK(std::abs(nmi(a, b) - nmi(a_relabel, b)) < 1e-12);

    std::vector<int> single = {0, 0, 0, 0, 0, 0};
    CHECK(nmi(single, single) == 0.0);  // zero-entropy convention

    std::vector<int> short_p = {0, 1};
    CHECK_THROWS_AS(nmi(a, short_p), Error);
}

TEST_CASE("linear probe separates two disjoint Gaussian blobs perfectly") {
    Rng rng(71);
    int64_t n = 60;
    std::vector<double> train_x, test_x;
    std::vector<int> train_y, test_y;
    for (int64_t i = 0; i < n; ++i) {
        int label = i % 2;
        double cx = label == 0 ? -4.0 : 4.0;  // margin far beyond 4 sigma (sigma = 0.5)
        double x0 = cx + 0.5 * rng.normal();
        double x1 = 0.5 * rng.normal();
        if (i < n * 3 / 4) {
            train_x.insert(train_x.end(), {x0, x1});
            train_y.push_back(label);
        } else {
            test_x.insert(test_x.end(), {x0, x1});
            test_y.push_back(label);
        }
    }
    FeatureMatrix train_f = make_features(static_cast<int64_t>(train_y.size()), 2, train_x);
    FeatureMatrix test_f = make_features(static_cast<int64_t>(test_y.size()), 2, test_x);
    ProbeResult r = linear_probe(train_f, train_y, test_f, test_y);
    CHECK(r.accuracy == doctest::Approx(1.0));
    CHECK(r.per_class_accuracy.at(0) == doctest::Approx(1.0));
    CHECK(r.per_class_accuracy.at(1) == doctest::Approx(1.0));
}

TEST_CASE("linear probe on one-hot label features is perfect") {
    int64_t n = 12, C = 3;
    std::vector<double> x(static_cast<size_t>(n * C), 0.0);
    std::vector<int> y(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        y[static_cast<size_t>(i)] = static_cast<int>(i % C);
        x[static_cast<size_t>(i * C + i % C)] = 1.0;
    }
    FeatureMatrix f = make_features(n, C, x);
    ProbeResult r = linear_probe(f, y, f, y);
    CHECK(r.accuracy == doctest::Approx(1.0));
    // Confusion rows sum to the per-class counts.
    for (size_t c = 0; c < 3; ++c) {
        int64_t row_sum = 0;
        for (size_t p = 0; p < 3; ++p) row_sum += r.confusion[c][p];
        CHECK(row_sum == 4);
    }
}

TEST_CASE("linear probe rejects a single-class training set") {
    FeatureMatrix f = make_features(4, 2, {1, 2, 3, 4, 5, 6, 7, 8});
    std::vector<int> y = {1, 1, 1, 1};
    CHECK_THROWS_AS(linear_probe(f, y, f, y), Error);
}

TEST_CASE("ahc groups two well-separated pairs") {
    FeatureMatrix f = make_features(4, 2, {0, 0, 0.1, 0, 10, 10, 10.1, 10});
    std::vector<int> labels = ahc_cluster(f, 2);
    CHECK(labels[0] == labels[1]);
    CHECK(labels[2] == labels[3]);
    CHECK(labels[0] != labels[2]);

    std::vector<int> singletons = ahc_cluster(f, 4);
    CHECK(singletons == std::vector<int>{0, 1, 2, 3});

    CHECK_THROWS_AS(ahc_cluster(f, 5), Error);
}

TEST_CASE("ahc agrees with the exhaustive-linkage oracle on random 8-point instances") {
    Rng rng(73);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> data(8 * 3);
        for (auto& v : data) v = rng.uniform(-1, 1);
        FeatureMatrix f = make_features(8, 3, data);
        int64_t k = 1 + static_cast<int64_t>(rng.uniform_index(7));
        CHECK(ahc_cluster(f, k) == ahc_oracle(f, k));
    }
}

TEST_CASE("majority vote accuracy examples") {
    std::vector<int> truth = {0, 0, 1};
    CHECK(majority_vote_accuracy(truth, truth) == doctest::Approx(1.0));

    std::vector<int> one_cluster = {5, 5, 5};
    CHECK(majority_vote_accuracy(one_cluster, truth) == doctest::Approx(2.0 / 3.0));

    // Permuting cluster ids changes nothing.
    std::vector<int> clusters = {0, 1, 1, 0, 2};
    std::vector<int> gt = {1, 0, 0, 1, 1};
    std::vector<int> renamed = {9, 4, 4, 9, 7};
    CHECK(majority_vote_accuracy(clusters, gt) == majority_vote_accuracy(renamed, gt));

    std::vector<int> mismatch = {0, 1};
    CHECK_THROWS_AS(majority_vote_accuracy(mismatch, truth), Error);
}

TEST_CASE("majority vote equals the max class prior with a single cluster") {
    std::vector<int> truth = {0, 0, 0, 1, 1, 2};
    std::vector<int> one(6, 0);
    CHECK(majority_vote_accuracy(one, truth) == doctest::Approx(3.0 / 6.0));
}

TEST_CASE("shape mIoU hand example") {
    CHECK(shape_miou({0, 0, 1, 1}, {0, 0, 1, 0}) == doctest::Approx(7.0 / 12.0).epsilon(1e-12));
    CHECK(shape_miou({0, 1, 0, 1}, {0, 1, 0, 1}) == doctest::Approx(1.0));
    // A part absent from both sides is excluded: only parts 0 and 1 count here.
    CHECK(shape_miou({0, 0, 1}, {0, 0, 1}) == doctest::Approx(1.0));
}

TEST_CASE("point probe learns separable part features and validates inputs") {
    // Two "clouds" whose part is linearly readable from the features.
    Rng rng(74);
    auto make_cloud = [&](int64_t n) {
        FeatureMatrix f;
        f.n = n;
        f.d = 4;
        std::vector<int> labels(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            int part = static_cast<int>(rng.uniform_index(2));
            labels[static_cast<size_t>(i)] = part;
            for (int64_t c = 0; c < 4; ++c) {
                double base = (c == part) ? 2.0 : 0.0;
                f.data.push_back(base + 0.1 * rng.normal());
            }
        }
        return std::pair(f, labels);
    };
    PointProbeData train, test;
    for (int c = 0; c < 4; ++c) {
        auto [f, l] = make_cloud(64);
        train.features.push_back(f);
        train.labels.push_back(l);
    }
    for (int c = 0; c < 2; ++c) {
        auto [f, l] = make_cloud(64);
        test.features.push_back(f);
        test.labels.push_back(l);
    }
    PointProbeOptions opts;
    opts.fraction = 0.5;
    opts.hidden_widths = {16};
    opts.iters = 200;
    ProbeResult r = point_probe(train, test, {0, 1}, opts);
    CHECK(r.accuracy > 0.95);
    CHECK(r.instance_miou > 0.9);
    CHECK(r.category_miou > 0.9);

    PointProbeOptions bad = opts;
    bad.fraction = 0.0;
    CHECK_THROWS_AS(point_probe(train, test, {}, bad), Error);
}

TEST_CASE("point probe rejects a fraction that empties a part class") {
    PointProbeData train, test;
    FeatureMatrix f;
    f.n = 100;
    f.d = 2;
    std::vector<int> labels(100, 0);
    labels[57] = 1;  // a single point of the rare part
    for (int64_t i = 0; i < 200; ++i) f.data.push_back(0.0);
    train.features.push_back(f);
    train.labels.push_back(labels);
    test = train;
    PointProbeOptions opts;
    opts.fraction = 0.01;  // one labeled point can cover only one class
    CHECK_THROWS_AS(point_probe(train, test, {}, opts), Error);
}

TEST_CASE("embedding export: one record per cloud, byte-identical re-export") {
    namespace fs = std::filesystem;
    fs::path dir = fs::temp_directory_path() / "pmtl_embed";
    fs::create_directories(dir);
    Rng rng(75);
    FeatureMatrix f;
    f.n = 5;
    f.d = 3;
    for (int i = 0; i < 15; ++i) f.data.push_back(rng.uniform(-1, 1));
    std::vector<std::string> ids = {"a", "b", "c", "d", "e"};
    std::vector<int> labels = {0, 1, 2, 0, 1};
    export_embeddings(dir / "e1.tsv", ids, labels, f);
    export_embeddings(dir / "e2.tsv", ids, labels, f);

    std::ifstream f1(dir / "e1.tsv"), f2(dir / "e2.tsv");
    std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(c1 == c2);
    CHECK(!c1.empty());

    // Header + 5 records; header names d columns.
    std::istringstream ss(c1);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "id\tlabel\tf0\tf1\tf2");
    int records = 0;
    while (std::getline(ss, line)) ++records;
    CHECK(records == 5);
    fs::remove_all(dir);
}
