#include "pointmtl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "pointmtl/parallel.hpp"

namespace pointmtl {

FeatureMatrix extract_shape_features(const std::vector<PointCloud>& clouds,
                                     const ModelConfig& cfg, ParameterStore& params) {
    FeatureMatrix out;
    out.n = static_cast<int64_t>(clouds.size());
    out.d = cfg.d_shape;
    out.data.resize(static_cast<size_t>(out.n * out.d));
    parallel_for(clouds.size(), [&](size_t i) {
        Tape tape;
        EncoderOutput enc = encode(tape, clouds[i], cfg, params, Mode::Eval);
        std::copy(enc.shape_features.value().begin(), enc.shape_features.value().end(),
                  out.data.begin() + static_cast<int64_t>(i) * out.d);
    });
    return out;
}

std::vector<FeatureMatrix> extract_point_features(const std::vector<PointCloud>& clouds,
                                                  const ModelConfig& cfg, ParameterStore& params) {
    std::vector<FeatureMatrix> out(clouds.size());
    parallel_for(clouds.size(), [&](size_t i) {
        Tape tape;
        EncoderOutput enc = encode(tape, clouds[i], cfg, params, Mode::Eval,
                                   /*want_point_features=*/true);
        FeatureMatrix& fm = out[i];
        fm.n = cfg.m;
        fm.d = cfg.d_point;
        fm.data = std::move(enc.point_features);
    });
    return out;
}

double nmi(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) throw_validation("nmi: partition lengths differ");
    if (a.empty()) throw_validation("nmi: empty partitions");
    double n = static_cast<double>(a.size());
    std::map<int, int64_t> ca, cb;
    std::map<std::pair<int, int>, int64_t> joint;
    for (size_t i = 0; i < a.size(); ++i) {
        ca[a[i]] += 1;
        cb[b[i]] += 1;
        joint[{a[i], b[i]}] += 1;
    }
    double mi = 0.0;
    for (const auto& [key, nij] : joint) {
        double pij = static_cast<double>(nij) / n;
        double pi = static_cast<double>(ca.at(key.first)) / n;
        double pj = static_cast<double>(cb.at(key.second)) / n;
        mi += pij * std::log(pij / (pi * pj));
    }
    auto entropy = [n](const std::map<int, int64_t>& counts) {
        double h = 0.0;
        for (const auto& [label, c] : counts) {
            double p = static_cast<double>(c) / n;
            h -= p * std::log(p);
        }
        return h;
    };
    double denom = entropy(ca) + entropy(cb);
    if (denom == 0.0) return 0.0;
    return 2.0 * mi / denom;
}

// ---- linear probe ----

ProbeResult linear_probe(const FeatureMatrix& train_feats, const std::vector<int>& train_labels,
                         const FeatureMatrix& test_feats, const std::vector<int>& test_labels,
                         const LinearProbeOptions& opts) {
    if (train_feats.n != static_cast<int64_t>(train_labels.size()) ||
        test_feats.n != static_cast<int64_t>(test_labels.size())) {
        throw_validation("linear_probe: feature/label count mismatch");
    }
    if (train_feats.d != test_feats.d) throw_validation("linear_probe: feature width mismatch");
    std::vector<int> classes(train_labels.begin(), train_labels.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    if (classes.size() < 2) {
        throw_validation("linear_probe: training set contains a single class");
    }
    std::map<int, int> class_index;
    for (size_t c = 0; c < classes.size(); ++c) class_index[classes[c]] = static_cast<int>(c);
    for (int label : test_labels) {
        if (!class_index.count(label)) {
            throw_validation("linear_probe: test label " + std::to_string(label) +
                             " absent from the training set");
        }
    }
    int64_t n = train_feats.n, d = train_feats.d;
    int64_t C = static_cast<int64_t>(classes.size());

    // One-vs-rest squared hinge with L2 on the weights (bias unregularized),
    // minimized by gradient descent with a backtracking step size.
    std::vector<double> W(static_cast<size_t>(d * C), 0.0), B(static_cast<size_t>(C), 0.0);
    std::vector<double> scores(static_cast<size_t>(n * C));
    std::vector<double> gW(W.size()), gB(B.size());

    auto forward = [&](const std::vector<double>& w, const std::vector<double>& b) {
        double loss = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double* x = train_feats.row(i);
            int yi = class_index.at(train_labels[static_cast<size_t>(i)]);
            for (int64_t c = 0; c < C; ++c) {
                double f = b[static_cast<size_t>(c)];
                for (int64_t j = 0; j < d; ++j) f += x[j] * w[j * C + c];
                scores[static_cast<size_t>(i * C + c)] = f;
                double y = c == yi ? 1.0 : -1.0;
                double margin = 1.0 - y * f;
                if (margin > 0.0) loss += margin * margin;
            }
        }
        loss /= static_cast<double>(n);
        for (double wv : w) loss += opts.l2 * wv * wv;
        return loss;
    };
    auto gradient = [&](const std::vector<double>& w) {
        std::fill(gW.begin(), gW.end(), 0.0);
        std::fill(gB.begin(), gB.end(), 0.0);
        for (int64_t i = 0; i < n; ++i) {
            const double* x = train_feats.row(i);
            int yi = class_index.at(train_labels[static_cast<size_t>(i)]);
            for (int64_t c = 0; c < C; ++c) {
                double y = c == yi ? 1.0 : -1.0;
                double margin = 1.0 - y * scores[static_cast<size_t>(i * C + c)];
                if (margin <= 0.0) continue;
                double coef = -2.0 * margin * y / static_cast<double>(n);
                gB[static_cast<size_t>(c)] += coef;
                for (int64_t j = 0; j < d; ++j) gW[j * C + c] += coef * x[j];
            }
        }
        for (size_t j = 0; j < w.size(); ++j) gW[j] += 2.0 * opts.l2 * w[j];
    };

    double lr = opts.lr;
    double loss = forward(W, B);
    for (int64_t iter = 0; iter < opts.max_iters; ++iter) {
        gradient(W);
        std::vector<double> W2(W.size()), B2(B.size());
        double next;
        for (;;) {
            for (size_t j = 0; j < W.size(); ++j) W2[j] = W[j] - lr * gW[j];
            for (size_t j = 0; j < B.size(); ++j) B2[j] = B[j] - lr * gB[j];
            next = forward(W2, B2);
            if (next <= loss || lr < 1e-12) break;
            lr *= 0.5;
        }
        W.swap(W2);
        B.swap(B2);
        double delta = loss - next;
        loss = next;
        lr *= 1.05;
        if (delta >= 0.0 && delta < opts.tol) break;
    }

    ProbeResult result;
    result.confusion.assign(static_cast<size_t>(C), std::vector<int64_t>(static_cast<size_t>(C), 0));
    std::map<int, int64_t> class_total, class_correct;
    int64_t correct = 0;
    for (int64_t i = 0; i < test_feats.n; ++i) {
        const double* x = test_feats.row(i);
        int64_t best_c = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (int64_t c = 0; c < C; ++c) {
            double f = B[static_cast<size_t>(c)];
            for (int64_t j = 0; j < d; ++j) f += x[j] * W[j * C + c];
            if (f > best) {
                best = f;
                best_c = c;
            }
        }
        int truth = class_index.at(test_labels[static_cast<size_t>(i)]);
        result.confusion[static_cast<size_t>(truth)][static_cast<size_t>(best_c)] += 1;
        class_total[classes[static_cast<size_t>(truth)]] += 1;
        if (best_c == truth) {
            ++correct;
            class_correct[classes[static_cast<size_t>(truth)]] += 1;
        }
    }
    result.accuracy = test_feats.n == 0 ? 0.0
                                        : static_cast<double>(correct) /
                                              static_cast<double>(test_feats.n);
    for (const auto& [label, total] : class_total) {
        result.per_class_accuracy[label] =
            static_cast<double>(class_correct[label]) / static_cast<double>(total);
    }
    return result;
}

// ---- agglomerative clustering ----

std::vector<int> ahc_cluster(const FeatureMatrix& feats, int64_t n_clusters) {
    int64_t n = feats.n;
    if (n_clusters < 1) throw_validation("ahc_cluster: need at least one cluster");
    if (n < n_clusters) {
        throw_validation("ahc_cluster: " + std::to_string(n) + " samples cannot form " +
                         std::to_string(n_clusters) + " clusters");
    }
    std::vector<double> dist(static_cast<size_t>(n * n), 0.0);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = i + 1; j < n; ++j) {
            double d2 = 0.0;
            for (int64_t f = 0; f < feats.d; ++f) {
                double diff = feats.row(i)[f] - feats.row(j)[f];
                d2 += diff * diff;
            }
            double d = std::sqrt(d2);
            dist[static_cast<size_t>(i * n + j)] = d;
            dist[static_cast<size_t>(j * n + i)] = d;
        }
    }
    std::vector<bool> active(static_cast<size_t>(n), true);
    std::vector<int64_t> size(static_cast<size_t>(n), 1);
    std::vector<std::vector<int64_t>> members(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) members[static_cast<size_t>(i)] = {i};

    for (int64_t remaining = n; remaining > n_clusters; --remaining) {
        // Smallest distance, ties to the lexicographically smallest (i, j).
        int64_t bi = -1, bj = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int64_t i = 0; i < n; ++i) {
            if (!active[static_cast<size_t>(i)]) continue;
            for (int64_t j = i + 1; j < n; ++j) {
                if (!active[static_cast<size_t>(j)]) continue;
                double d = dist[static_cast<size_t>(i * n + j)];
                if (d < best) {
                    best = d;
                    bi = i;
                    bj = j;
                }
            }
        }
        // Average linkage via Lance-Williams on the merged pair.
        for (int64_t k = 0; k < n; ++k) {
            if (!active[static_cast<size_t>(k)] || k == bi || k == bj) continue;
            double dik = dist[static_cast<size_t>(bi * n + k)];
            double djk = dist[static_cast<size_t>(bj * n + k)];
            double si = static_cast<double>(size[static_cast<size_t>(bi)]);
            double sj = static_cast<double>(size[static_cast<size_t>(bj)]);
            double merged = (si * dik + sj * djk) / (si + sj);
            dist[static_cast<size_t>(bi * n + k)] = merged;
            dist[static_cast<size_t>(k * n + bi)] = merged;
        }
        size[static_cast<size_t>(bi)] += size[static_cast<size_t>(bj)];
        auto& mi = members[static_cast<size_t>(bi)];
        auto& mj = members[static_cast<size_t>(bj)];
        mi.insert(mi.end(), mj.begin(), mj.end());
        mj.clear();
        active[static_cast<size_t>(bj)] = false;
    }

    // Compact ids ordered by each cluster's smallest member.
    std::vector<std::pair<int64_t, int64_t>> roots;  // (smallest member, root)
    for (int64_t i = 0; i < n; ++i) {
        if (!active[static_cast<size_t>(i)]) continue;
        int64_t smallest = *std::min_element(members[static_cast<size_t>(i)].begin(),
                                             members[static_cast<size_t>(i)].end());
        roots.emplace_back(smallest, i);
    }
    std::sort(roots.begin(), roots.end());
    std::vector<int> labels(static_cast<size_t>(n), -1);
    for (size_t c = 0; c < roots.size(); ++c) {
        for (int64_t m : members[static_cast<size_t>(roots[c].second)]) {
            labels[static_cast<size_t>(m)] = static_cast<int>(c);
        }
    }
    return labels;
}

double majority_vote_accuracy(const std::vector<int>& clusters, const std::vector<int>& truth) {
    if (clusters.size() != truth.size()) {
        throw_validation("majority_vote_accuracy: partition lengths differ");
    }
    if (clusters.empty()) throw_validation("majority_vote_accuracy: empty partitions");
    std::map<int, std::map<int, int64_t>> counts;
    for (size_t i = 0; i < clusters.size(); ++i) counts[clusters[i]][truth[i]] += 1;
    std::map<int, int> modal;
    for (const auto& [cluster, label_counts] : counts) {
        int best_label = 0;
        int64_t best = -1;
        for (const auto& [label, c] : label_counts) {  // map order breaks ties by smaller label
            if (c > best) {
                best = c;
                best_label = label;
            }
        }
        modal[cluster] = best_label;
    }
    int64_t correct = 0;
    for (size_t i = 0; i < clusters.size(); ++i) {
        if (modal.at(clusters[i]) == truth[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(clusters.size());
}

// ---- point probe ----

double shape_miou(const std::vector<int>& truth, const std::vector<int>& predicted) {
    if (truth.size() != predicted.size()) throw_validation("shape_miou: length mismatch");
    if (truth.empty()) throw_validation("shape_miou: empty shape");
    std::set<int> parts(truth.begin(), truth.end());
    parts.insert(predicted.begin(), predicted.end());
    double sum = 0.0;
    for (int part : parts) {
        int64_t inter = 0, uni = 0;
        for (size_t i = 0; i < truth.size(); ++i) {
            bool in_t = truth[i] == part;
            bool in_p = predicted[i] == part;
            inter += in_t && in_p;
            uni += in_t || in_p;
        }
        sum += static_cast<double>(inter) / static_cast<double>(uni);
    }
    return sum / static_cast<double>(parts.size());
}

ProbeResult point_probe(const PointProbeData& train, const PointProbeData& test,
                        const std::vector<int>& test_categories, const PointProbeOptions& opts) {
    if (opts.fraction <= 0.0 || opts.fraction > 1.0) {
        throw_validation("point_probe: fraction must be in (0, 1]");
    }
    if (train.features.size() != train.labels.size() || test.features.size() != test.labels.size()) {
        throw_validation("point_probe: feature/label cloud count mismatch");
    }
    if (train.features.empty() || test.features.empty()) {
        throw_validation("point_probe: empty train or test set");
    }
    int64_t d = train.features.front().d;

    // Flatten train points and labels.
    std::vector<const double*> rows;
    std::vector<int> labels;
    for (size_t c = 0; c < train.features.size(); ++c) {
        const FeatureMatrix& fm = train.features[c];
        if (static_cast<int64_t>(train.labels[c].size()) != fm.n) {
            throw_validation("point_probe: cloud " + std::to_string(c) +
                             " labels do not match its point count");
        }
        for (int64_t i = 0; i < fm.n; ++i) {
            rows.push_back(fm.row(i));
            labels.push_back(train.labels[c][static_cast<size_t>(i)]);
        }
    }
    std::vector<int> parts(labels.begin(), labels.end());
    std::sort(parts.begin(), parts.end());
    parts.erase(std::unique(parts.begin(), parts.end()), parts.end());
    std::map<int, int> part_index;
    for (size_t p = 0; p < parts.size(); ++p) part_index[parts[p]] = static_cast<int>(p);
    int64_t C = static_cast<int64_t>(parts.size());

    // Labeled subsample.
    Rng rng(opts.seed);
    std::vector<size_t> ids(rows.size());
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    rng.shuffle(ids);
    size_t n_labeled = std::max<size_t>(1, static_cast<size_t>(std::llround(
                                               opts.fraction * static_cast<double>(rows.size()))));
    n_labeled = std::min(n_labeled, ids.size());
    ids.resize(n_labeled);
    {
        std::set<int> seen;
        for (size_t i : ids) seen.insert(labels[i]);
        if (seen.size() != parts.size()) {
            throw_validation("point_probe: sampled fraction leaves a part class without examples");
        }
    }

    // MLP classifier on frozen features, in its own parameter store.
    ParameterStore store;
    Rng init_rng = rng.split(1);
    int64_t width = d;
    std::vector<std::string> hidden_names;
    for (size_t i = 0; i < opts.hidden_widths.size(); ++i) {
        std::string name = "probe.h" + std::to_string(i);
        int64_t out_w = opts.hidden_widths[i];
        double limit = std::sqrt(6.0 / static_cast<double>(width));
        std::vector<double> w(static_cast<size_t>(width * out_w));
        for (auto& v : w) v = init_rng.uniform(-limit, limit);
        store.create_param(name + ".w", {width, out_w}, std::move(w));
        store.create_param(name + ".b", {out_w}, std::vector<double>(static_cast<size_t>(out_w), 0.0));
        hidden_names.push_back(name);
        width = out_w;
    }
    {
        double limit = std::sqrt(6.0 / static_cast<double>(width));
        std::vector<double> w(static_cast<size_t>(width * C));
        for (auto& v : w) v = init_rng.uniform(-limit, limit);
        store.create_param("probe.out.w", {width, C}, std::move(w));
        store.create_param("probe.out.b", {C}, std::vector<double>(static_cast<size_t>(C), 0.0));
    }

    auto forward = [&](Tape& tape, const Tensor& x) {
        Tensor h = x;
        for (const std::string& name : hidden_names) {
            h = add(tape, matmul(tape, h, store.param(name + ".w")), store.param(name + ".b"));
            h = relu(tape, h);
        }
        return add(tape, matmul(tape, h, store.param("probe.out.w")), store.param("probe.out.b"));
    };

    Rng batch_rng = rng.split(2);
    for (int64_t iter = 0; iter < opts.iters; ++iter) {
        int64_t bs = std::min<int64_t>(opts.batch_points, static_cast<int64_t>(ids.size()));
        std::vector<double> xb(static_cast<size_t>(bs * d));
        std::vector<int64_t> yb(static_cast<size_t>(bs));
        for (int64_t i = 0; i < bs; ++i) {
            size_t pick = ids[batch_rng.uniform_index(ids.size())];
            std::copy(rows[pick], rows[pick] + d, xb.data() + i * d);
            yb[static_cast<size_t>(i)] = part_index.at(labels[pick]);
        }
        Tape tape;
        Tensor x = Tensor::from_data({bs, d}, std::move(xb));
        Tensor logits = forward(tape, x);
        Tensor loss = pseudo_label_loss(tape, logits, yb);
        store.zero_grad();
        tape.backward(loss);
        store.adam_step(opts.lr);
    }

    // Evaluate on every test point.
    ProbeResult result;
    result.confusion.assign(static_cast<size_t>(C), std::vector<int64_t>(static_cast<size_t>(C), 0));
    std::map<int, int64_t> part_total, part_correct;
    int64_t correct = 0, total = 0;
    std::vector<double> mious(test.features.size());
    std::vector<std::vector<int>> predictions(test.features.size());
    parallel_for(test.features.size(), [&](size_t c) {
        const FeatureMatrix& fm = test.features[c];
        std::vector<double> flat(fm.data);
        Tape tape;
        Tensor x = Tensor::from_data({fm.n, fm.d}, std::move(flat));
        Tensor logits = forward(tape, x);
        std::vector<int>& pred = predictions[c];
        pred.resize(static_cast<size_t>(fm.n));
        const double* lv = logits.value().data();
        for (int64_t i = 0; i < fm.n; ++i) {
            int64_t best_c = 0;
            double best = lv[i * C];
            for (int64_t k = 1; k < C; ++k) {
                if (lv[i * C + k] > best) {
                    best = lv[i * C + k];
                    best_c = k;
                }
            }
            pred[static_cast<size_t>(i)] = parts[static_cast<size_t>(best_c)];
        }
        mious[c] = shape_miou(test.labels[c], pred);
    });
    for (size_t c = 0; c < test.features.size(); ++c) {
        for (size_t i = 0; i < predictions[c].size(); ++i) {
            int t = test.labels[c][i];
            int p = predictions[c][i];
            ++total;
            part_total[t] += 1;
            if (t == p) {
                ++correct;
                part_correct[t] += 1;
            }
            auto ti = part_index.find(t);
            auto pi = part_index.find(p);
            if (ti != part_index.end() && pi != part_index.end()) {
                result.confusion[static_cast<size_t>(ti->second)][static_cast<size_t>(pi->second)] += 1;
            }
        }
    }
    result.accuracy = total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
    for (const auto& [label, t] : part_total) {
        result.per_class_accuracy[label] =
            static_cast<double>(part_correct[label]) / static_cast<double>(t);
    }
    double inst = 0.0;
    for (double m : mious) inst += m;
    result.instance_miou = inst / static_cast<double>(mious.size());

    if (!test_categories.empty()) {
        if (test_categories.size() != test.features.size()) {
            throw_validation("point_probe: category list does not match test cloud count");
        }
        std::map<int, std::pair<double, int64_t>> by_cat;
        for (size_t c = 0; c < mious.size(); ++c) {
            auto& [sum, count] = by_cat[test_categories[c]];
            sum += mious[c];
            count += 1;
        }
        double cat = 0.0;
        for (const auto& [id, agg] : by_cat) cat += agg.first / static_cast<double>(agg.second);
        result.category_miou = cat / static_cast<double>(by_cat.size());
    }
    return result;
}

void export_embeddings(const std::filesystem::path& path, const std::vector<std::string>& ids,
                       const std::vector<int>& labels, const FeatureMatrix& feats) {
    if (static_cast<int64_t>(ids.size()) != feats.n ||
        static_cast<int64_t>(labels.size()) != feats.n) {
        throw_validation("export_embeddings: id/label count does not match feature rows");
    }
    std::ofstream out(path);
    if (!out) throw_io("cannot write embeddings to " + path.string());
    out << "id\tlabel";
    for (int64_t f = 0; f < feats.d; ++f) out << "\tf" << f;
    out << '\n';
    char buf[64];
    for (int64_t i = 0; i < feats.n; ++i) {
        out << ids[static_cast<size_t>(i)] << '\t' << labels[static_cast<size_t>(i)];
        for (int64_t f = 0; f < feats.d; ++f) {
            std::snprintf(buf, sizeof(buf), "\t%.17g", feats.row(i)[f]);
            out << buf;
        }
        out << '\n';
    }
    if (!out) throw_io("failed writing embeddings to " + path.string());
}

}  // namespace pointmtl
