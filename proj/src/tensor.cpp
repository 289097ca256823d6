#include "pointmtl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pointmtl/parallel.hpp"

namespace pointmtl {

namespace debug {
std::atomic<bool> negate_relu_backward{false};
}

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
        throw_dimension("tensor data length " + std::to_string(values.size()) +
                        " does not match shape " + shape_str(shape));
    }
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double fill, bool requires_grad) {
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)), fill);
    return from_data(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from_data(Shape{}, {v}, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) throw_dimension("item() called on tensor with shape " + shape_str(shape()));
    return node_->value[0];
}

Tensor Tape::make(const char* op, Shape shape, std::vector<Tensor> inputs) {
    auto n = std::make_shared<TensorNode>();
    n->op = op;
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0);
    n->inputs.reserve(inputs.size());
    for (const auto& in : inputs) {
        n->requires_grad = n->requires_grad || in.requires_grad();
        n->inputs.push_back(in.node());
    }
    order_.push_back(n);
    return Tensor(std::move(n));
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) throw_dimension("backward expects a scalar loss");
    loss.node()->ensure_grad();
    loss.node()->grad[0] = 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        TensorNode& n = **it;
        if (n.grad.empty() || !n.backward) continue;
        n.backward(n);
    }
}

namespace {

// Trailing-dimension broadcast: shapes are compatible when equal, or when the
// smaller one equals the trailing suffix of the larger.
struct BroadcastPlan {
    Shape out_shape;
    bool a_small = false;
    bool b_small = false;
};

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

BroadcastPlan broadcast_plan(const char* op, const Tensor& a, const Tensor& b) {
    BroadcastPlan plan;
    if (a.shape() == b.shape()) {
        plan.out_shape = a.shape();
    } else if (is_suffix(b.shape(), a.shape())) {
        plan.out_shape = a.shape();
        plan.b_small = true;
    } else if (is_suffix(a.shape(), b.shape())) {
        plan.out_shape = b.shape();
        plan.a_small = true;
    } else {
        throw_dimension(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()) + " are not trailing-broadcastable");
    }
    return plan;
}

void accumulate_full(TensorNode& dst, const std::vector<double>& g) {
    dst.ensure_grad();
    for (size_t i = 0; i < g.size(); ++i) dst.grad[i] += g[i];
}

// Reduce a full-size gradient onto a trailing-broadcast operand.
void accumulate_broadcast(TensorNode& dst, const std::vector<double>& g) {
    dst.ensure_grad();
    size_t small_n = dst.value.size();
    for (size_t i = 0; i < g.size(); ++i) dst.grad[i % small_n] += g[i];
}

using BinFn = double (*)(double, double);

Tensor binary_op(Tape& tape, const char* op, const Tensor& a, const Tensor& b, BinFn fwd,
                 BinFn dfda, BinFn dfdb) {
    BroadcastPlan plan = broadcast_plan(op, a, b);
    Tensor out = tape.make(op, plan.out_shape, {a, b});
    const auto& av = a.value();
    const auto& bv = b.value();
    auto& ov = out.data();
    size_t an = av.size(), bn = bv.size();
    for (size_t i = 0; i < ov.size(); ++i) {
        ov[i] = fwd(av[plan.a_small ? i % an : i], bv[plan.b_small ? i % bn : i]);
    }
    if (out.requires_grad()) {
        out.node()->backward = [plan, dfda, dfdb](TensorNode& n) {
            TensorNode& na = *n.inputs[0];
            TensorNode& nb = *n.inputs[1];
            size_t an2 = na.value.size(), bn2 = nb.value.size();
            if (na.requires_grad) {
                na.ensure_grad();
                for (size_t i = 0; i < n.grad.size(); ++i) {
                    double x = na.value[plan.a_small ? i % an2 : i];
                    double y = nb.value[plan.b_small ? i % bn2 : i];
                    na.grad[plan.a_small ? i % an2 : i] += n.grad[i] * dfda(x, y);
                }
            }
            if (nb.requires_grad) {
                nb.ensure_grad();
                for (size_t i = 0; i < n.grad.size(); ++i) {
                    double x = na.value[plan.a_small ? i % an2 : i];
                    double y = nb.value[plan.b_small ? i % bn2 : i];
                    nb.grad[plan.b_small ? i % bn2 : i] += n.grad[i] * dfdb(x, y);
                }
            }
        };
    }
    return out;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    return binary_op(
        tape, "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    return binary_op(
        tape, "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    return binary_op(
        tape, "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
    Tensor out = tape.make("scale", a.shape(), {a});
    const auto& av = a.value();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * factor;
    if (out.requires_grad()) {
        out.node()->backward = [factor](TensorNode& n) {
            TensorNode& na = *n.inputs[0];
            if (!na.requires_grad) return;
            na.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) na.grad[i] += n.grad[i] * factor;
        };
    }
    return out;
}

Tensor relu(Tape& tape, const Tensor& a) {
    Tensor out = tape.make("relu", a.shape(), {a});
    const auto& av = a.value();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > 0.0 ? av[i] : 0.0;
    if (out.requires_grad()) {
        out.node()->backward = [](TensorNode& n) {
            TensorNode& na = *n.inputs[0];
            if (!na.requires_grad) return;
            na.ensure_grad();
            double sign = debug::negate_relu_backward.load() ? -1.0 : 1.0;
            for (size_t i = 0; i < n.grad.size(); ++i) {
                if (na.value[i] > 0.0) na.grad[i] += sign * n.grad[i];
            }
        };
    }
    return out;
}

namespace {
constexpr int64_t kParallelFlopThreshold = 1 << 17;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw_dimension("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
    }
    int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = tape.make("matmul", {m, n}, {a, b});
    const double* av = a.value().data();
    const double* bv = b.value().data();
    double* ov = out.data().data();
    auto row_fn = [&](size_t i) {
        const double* arow = av + i * k;
        double* orow = ov + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double aip = arow[p];
            if (aip == 0.0) continue;
            const double* brow = bv + p * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    };
    if (m * k * n >= kParallelFlopThreshold) {
        parallel_for(static_cast<size_t>(m), row_fn);
    } else {
        for (int64_t i = 0; i < m; ++i) row_fn(static_cast<size_t>(i));
    }
    if (out.requires_grad()) {
        out.node()->backward = [m, k, n](TensorNode& node) {
            TensorNode& na = *node.inputs[0];
            TensorNode& nb = *node.inputs[1];
            const double* g = node.grad.data();
            if (na.requires_grad) {
                na.ensure_grad();
                const double* bval = nb.value.data();
                double* ga = na.grad.data();
                auto fn = [&](size_t i) {
                    const double* grow = g + i * n;
                    double* garow = ga + i * k;
                    for (int64_t p = 0; p < k; ++p) {
                        const double* brow = bval + p * n;
                        double acc = 0.0;
                        for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        garow[p] += acc;
                    }
                };
                if (m * k * n >= kParallelFlopThreshold) {
                    parallel_for(static_cast<size_t>(m), fn);
                } else {
                    for (int64_t i = 0; i < m; ++i) fn(static_cast<size_t>(i));
                }
            }
            if (nb.requires_grad) {
                nb.ensure_grad();
                const double* aval = na.value.data();
                double* gb = nb.grad.data();
                auto fn = [&](size_t p) {
                    double* gbrow = gb + p * n;
                    for (int64_t i = 0; i < m; ++i) {
                        double aip = aval[i * k + p];
                        if (aip == 0.0) continue;
                        const double* grow = g + i * n;
                        for (int64_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
                    }
                };
                if (m * k * n >= kParallelFlopThreshold) {
                    parallel_for(static_cast<size_t>(k), fn);
                } else {
                    for (int64_t p = 0; p < k; ++p) fn(static_cast<size_t>(p));
                }
            }
        };
    }
    return out;
}

Tensor concat(Tape& tape, std::span<const Tensor> inputs, size_t axis) {
    if (inputs.empty()) throw_dimension("concat: no inputs");
    const Shape& first = inputs[0].shape();
    if (axis >= first.size()) {
        throw_dimension("concat: axis " + std::to_string(axis) + " out of range for shape " +
                        shape_str(first));
    }
    Shape out_shape = first;
    int64_t axis_total = first[axis];
    for (size_t i = 1; i < inputs.size(); ++i) {
        const Shape& s = inputs[i].shape();
        if (s.size() != first.size()) {
            throw_dimension("concat: rank mismatch between " + shape_str(first) + " and " +
                            shape_str(s));
        }
        for (size_t d = 0; d < s.size(); ++d) {
            if (d != axis && s[d] != first[d]) {
                throw_dimension("concat: shapes " + shape_str(first) + " and " + shape_str(s) +
                                " differ off-axis");
            }
        }
        axis_total += s[axis];
    }
    out_shape[axis] = axis_total;

    int64_t outer = 1;
    for (size_t d = 0; d < axis; ++d) outer *= first[d];
    int64_t inner = 1;
    for (size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

    Tensor out = tape.make("concat", out_shape, std::vector<Tensor>(inputs.begin(), inputs.end()));
    std::vector<int64_t> extents(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i) extents[i] = inputs[i].shape()[axis] * inner;

    double* ov = out.data().data();
    int64_t out_stride = axis_total * inner;
    int64_t offset = 0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        const double* iv = inputs[i].value().data();
        for (int64_t o = 0; o < outer; ++o) {
            std::copy(iv + o * extents[i], iv + (o + 1) * extents[i], ov + o * out_stride + offset);
        }
        offset += extents[i];
    }
    if (out.requires_grad()) {
        out.node()->backward = [extents, outer, out_stride](TensorNode& n) {
            int64_t off = 0;
            for (size_t i = 0; i < n.inputs.size(); ++i) {
                TensorNode& in = *n.inputs[i];
                if (in.requires_grad) {
                    in.ensure_grad();
                    for (int64_t o = 0; o < outer; ++o) {
                        const double* src = n.grad.data() + o * out_stride + off;
                        double* dst = in.grad.data() + o * extents[i];
                        for (int64_t j = 0; j < extents[i]; ++j) dst[j] += src[j];
                    }
                }
                off += extents[i];
            }
        };
    }
    return out;
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw_dimension("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    Tensor out = tape.make("reshape", std::move(shape), {a});
    out.data() = a.value();
    if (out.requires_grad()) {
        out.node()->backward = [](TensorNode& n) {
            TensorNode& in = *n.inputs[0];
            if (!in.requires_grad) return;
            accumulate_full(in, n.grad);
        };
    }
    return out;
}

Tensor slice_rows(Tape& tape, const Tensor& a, int64_t begin, int64_t count) {
    if (a.rank() < 1 || begin < 0 || count < 1 || begin + count > a.dim(0)) {
        throw_dimension("slice_rows: range [" + std::to_string(begin) + ", " +
                        std::to_string(begin + count) + ") invalid for shape " +
                        shape_str(a.shape()));
    }
    Shape out_shape = a.shape();
    out_shape[0] = count;
    int64_t row = a.numel() / a.dim(0);
    Tensor out = tape.make("slice_rows", out_shape, {a});
    std::copy(a.value().begin() + begin * row, a.value().begin() + (begin + count) * row,
              out.data().begin());
    if (out.requires_grad()) {
        out.node()->backward = [begin, row](TensorNode& n) {
            TensorNode& in = *n.inputs[0];
            if (!in.requires_grad) return;
            in.ensure_grad();
            double* dst = in.grad.data() + begin * row;
            for (size_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
        };
    }
    return out;
}

Tensor reduce(Tape& tape, ReduceKind kind, const Tensor& a, size_t axis) {
    if (axis >= a.rank()) {
        throw_dimension("reduce: axis " + std::to_string(axis) + " out of range for shape " +
                        shape_str(a.shape()));
    }
    const Shape& s = a.shape();
    int64_t outer = 1, inner = 1;
    for (size_t d = 0; d < axis; ++d) outer *= s[d];
    for (size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
    int64_t len = s[axis];

    Shape out_shape;
    for (size_t d = 0; d < s.size(); ++d) {
        if (d != axis) out_shape.push_back(s[d]);
    }
    const char* name = kind == ReduceKind::Sum ? "reduce.sum"
                       : kind == ReduceKind::Mean ? "reduce.mean"
                                                  : "reduce.max";
    Tensor out = tape.make(name, out_shape, {a});
    const double* av = a.value().data();
    double* ov = out.data().data();
    std::vector<int64_t> argmax;
    if (kind == ReduceKind::Max) argmax.assign(static_cast<size_t>(outer * inner), 0);

    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t i = 0; i < inner; ++i) {
            const double* base = av + o * len * inner + i;
            if (kind == ReduceKind::Max) {
                // Ties resolve to the lowest index so permutation tests stay
                // deterministic.
                double best = base[0];
                int64_t best_j = 0;
                for (int64_t j = 1; j < len; ++j) {
                    double v = base[j * inner];
                    if (v > best) {
                        best = v;
                        best_j = j;
                    }
                }
                ov[o * inner + i] = best;
                argmax[static_cast<size_t>(o * inner + i)] = best_j;
            } else {
                double acc = 0.0;
                for (int64_t j = 0; j < len; ++j) acc += base[j * inner];
                ov[o * inner + i] = kind == ReduceKind::Mean ? acc / static_cast<double>(len) : acc;
            }
        }
    }
    if (out.requires_grad()) {
        out.node()->backward = [kind, outer, inner, len, argmax](TensorNode& n) {
            TensorNode& in = *n.inputs[0];
            if (!in.requires_grad) return;
            in.ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t i = 0; i < inner; ++i) {
                    double g = n.grad[o * inner + i];
                    double* base = in.grad.data() + o * len * inner + i;
                    switch (kind) {
                        case ReduceKind::Sum:
                            for (int64_t j = 0; j < len; ++j) base[j * inner] += g;
                            break;
                        case ReduceKind::Mean:
                            for (int64_t j = 0; j < len; ++j)
                                base[j * inner] += g / static_cast<double>(len);
                            break;
                        case ReduceKind::Max:
                            base[argmax[static_cast<size_t>(o * inner + i)] * inner] += g;
                            break;
                    }
                }
            }
        };
    }
    return out;
}

Tensor reduce_sum(Tape& tape, const Tensor& a, size_t axis) { return reduce(tape, ReduceKind::Sum, a, axis); }
Tensor reduce_mean(Tape& tape, const Tensor& a, size_t axis) { return reduce(tape, ReduceKind::Mean, a, axis); }
Tensor reduce_max(Tape& tape, const Tensor& a, size_t axis) { return reduce(tape, ReduceKind::Max, a, axis); }

Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, Mode mode, double momentum, double eps) {
    if (x.rank() != 2) throw_dimension("batch_norm: expected rank-2 input, got " + shape_str(x.shape()));
    int64_t rows = x.dim(0), features = x.dim(1);
    if (gamma.numel() != features || beta.numel() != features) {
        throw_dimension("batch_norm: scale/shift length does not match feature count " +
                        std::to_string(features));
    }
    if (static_cast<int64_t>(stats.running_mean.size()) != features ||
        static_cast<int64_t>(stats.running_var.size()) != features) {
        throw_state("batch_norm: running stats not sized for " + std::to_string(features) +
                    " features");
    }
    if (mode == Mode::Train && rows < 2) {
        throw_config("batch_norm: train mode needs a batch of at least 2, got " +
                     std::to_string(rows));
    }

    Tensor out = tape.make("batch_norm", x.shape(), {x, gamma, beta});
    const double* xv = x.value().data();
    const double* gv = gamma.value().data();
    const double* bv = beta.value().data();
    double* ov = out.data().data();

    std::vector<double> mean(features), inv_std(features);
    if (mode == Mode::Train) {
        for (int64_t f = 0; f < features; ++f) {
            double m = 0.0;
            for (int64_t r = 0; r < rows; ++r) m += xv[r * features + f];
            m /= static_cast<double>(rows);
            double var = 0.0;
            for (int64_t r = 0; r < rows; ++r) {
                double d = xv[r * features + f] - m;
                var += d * d;
            }
            var /= static_cast<double>(rows);
            mean[f] = m;
            inv_std[f] = 1.0 / std::sqrt(var + eps);
            stats.running_mean[f] = (1.0 - momentum) * stats.running_mean[f] + momentum * m;
            stats.running_var[f] = (1.0 - momentum) * stats.running_var[f] + momentum * var;
        }
    } else {
        for (int64_t f = 0; f < features; ++f) {
            mean[f] = stats.running_mean[f];
            inv_std[f] = 1.0 / std::sqrt(stats.running_var[f] + eps);
        }
    }
    std::vector<double> xhat(x.value().size());
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t f = 0; f < features; ++f) {
            double h = (xv[r * features + f] - mean[f]) * inv_std[f];
            xhat[r * features + f] = h;
            ov[r * features + f] = gv[f] * h + bv[f];
        }
    }
    if (out.requires_grad()) {
        out.node()->backward = [rows, features, mode, xhat = std::move(xhat),
                                inv_std = std::move(inv_std)](TensorNode& n) {
            TensorNode& nx = *n.inputs[0];
            TensorNode& ng = *n.inputs[1];
            TensorNode& nb = *n.inputs[2];
            const double* g = n.grad.data();
            if (ng.requires_grad) {
                ng.ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t f = 0; f < features; ++f)
                        ng.grad[f] += g[r * features + f] * xhat[r * features + f];
            }
            if (nb.requires_grad) {
                nb.ensure_grad();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t f = 0; f < features; ++f) nb.grad[f] += g[r * features + f];
            }
            if (nx.requires_grad) {
                nx.ensure_grad();
                const double* gammav = ng.value.data();
                if (mode == Mode::Eval) {
                    for (int64_t r = 0; r < rows; ++r)
                        for (int64_t f = 0; f < features; ++f)
                            nx.grad[r * features + f] +=
                                g[r * features + f] * gammav[f] * inv_std[f];
                } else {
                    // Batch statistics depend on x: per feature,
                    // dx = inv_std/N * (N*dxhat - sum(dxhat) - xhat*sum(dxhat*xhat)).
                    double N = static_cast<double>(rows);
                    for (int64_t f = 0; f < features; ++f) {
                        double sum_dh = 0.0, sum_dh_h = 0.0;
                        for (int64_t r = 0; r < rows; ++r) {
                            double dh = g[r * features + f] * gammav[f];
                            sum_dh += dh;
                            sum_dh_h += dh * xhat[r * features + f];
                        }
                        for (int64_t r = 0; r < rows; ++r) {
                            double dh = g[r * features + f] * gammav[f];
                            nx.grad[r * features + f] +=
                                inv_std[f] / N *
                                (N * dh - sum_dh - xhat[r * features + f] * sum_dh_h);
                        }
                    }
                }
            }
        };
    }
    return out;
}

Tensor dropout(Tape& tape, const Tensor& x, double p, Mode mode, Rng& rng) {
    if (p < 0.0 || p >= 1.0) {
        throw_config("dropout: probability must be in [0, 1), got " + std::to_string(p));
    }
    if (mode == Mode::Eval || p == 0.0) {
        Tensor out = tape.make("dropout", x.shape(), {x});
        out.data() = x.value();
        if (out.requires_grad()) {
            out.node()->backward = [](TensorNode& n) {
                TensorNode& in = *n.inputs[0];
                if (!in.requires_grad) return;
                accumulate_full(in, n.grad);
            };
        }
        return out;
    }
    Tensor out = tape.make("dropout", x.shape(), {x});
    const auto& xv = x.value();
    auto& ov = out.data();
    double keep_scale = 1.0 / (1.0 - p);
    std::vector<uint8_t> kept(xv.size());
    for (size_t i = 0; i < xv.size(); ++i) {
        kept[i] = rng.uniform() >= p;
        ov[i] = kept[i] ? xv[i] * keep_scale : 0.0;
    }
    if (out.requires_grad()) {
        out.node()->backward = [kept = std::move(kept), keep_scale](TensorNode& n) {
            TensorNode& in = *n.inputs[0];
            if (!in.requires_grad) return;
            in.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) {
                if (kept[i]) in.grad[i] += n.grad[i] * keep_scale;
            }
        };
    }
    return out;
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, const Tensor& targets) {
    if (logits.rank() != 2 || targets.shape() != logits.shape()) {
        throw_dimension("softmax_cross_entropy: logits " + shape_str(logits.shape()) +
                        " vs targets " + shape_str(targets.shape()));
    }
    int64_t batch = logits.dim(0), classes = logits.dim(1);
    const double* tv = targets.value().data();
    for (int64_t r = 0; r < batch; ++r) {
        int ones = 0;
        for (int64_t c = 0; c < classes; ++c) {
            double v = tv[r * classes + c];
            if (v == 1.0) {
                ++ones;
            } else if (v != 0.0) {
                throw_validation("softmax_cross_entropy: target row " + std::to_string(r) +
                                 " is not one-hot");
            }
        }
        if (ones != 1) {
            throw_validation("softmax_cross_entropy: target row " + std::to_string(r) +
                             " is not one-hot");
        }
    }

    Tensor out = tape.make("softmax_cross_entropy", Shape{}, {logits, targets});
    const double* lv = logits.value().data();
    std::vector<double> softmax(logits.value().size());
    double total = 0.0;
    for (int64_t r = 0; r < batch; ++r) {
        const double* row = lv + r * classes;
        double mx = row[0];
        for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double denom = 0.0;
        for (int64_t c = 0; c < classes; ++c) denom += std::exp(row[c] - mx);
        double log_denom = std::log(denom);
        for (int64_t c = 0; c < classes; ++c) {
            double logp = row[c] - mx - log_denom;
            softmax[r * classes + c] = std::exp(logp);
            if (tv[r * classes + c] == 1.0) total -= logp;
        }
    }
    out.data()[0] = total / static_cast<double>(batch);
    if (out.requires_grad()) {
        out.node()->backward = [batch, classes, softmax = std::move(softmax)](TensorNode& n) {
            TensorNode& nl = *n.inputs[0];
            TensorNode& nt = *n.inputs[1];
            double g = n.grad[0] / static_cast<double>(batch);
            if (nl.requires_grad) {
                nl.ensure_grad();
                for (size_t i = 0; i < nl.grad.size(); ++i) {
                    nl.grad[i] += g * (softmax[i] - nt.value[i]);
                }
            }
            if (nt.requires_grad) {
                nt.ensure_grad();
                for (size_t i = 0; i < nt.grad.size(); ++i) {
                    nt.grad[i] -= g * std::log(std::max(softmax[i], 1e-300));
                }
            }
        };
    }
    return out;
}

Tensor edge_features(Tape& tape, const Tensor& x, const std::vector<int32_t>& neighbor_ids,
                     int64_t k) {
    if (x.rank() != 2) throw_dimension("edge_features: expected rank-2 input");
    int64_t n_pts = x.dim(0), d = x.dim(1);
    if (static_cast<int64_t>(neighbor_ids.size()) != n_pts * k) {
        throw_dimension("edge_features: neighbor table size " +
                        std::to_string(neighbor_ids.size()) + " != points*k");
    }
    for (int32_t id : neighbor_ids) {
        if (id < 0 || id >= n_pts) throw_validation("edge_features: neighbor id out of range");
    }
    Tensor out = tape.make("edge_features", {n_pts * k, 2 * d}, {x});
    const double* xv = x.value().data();
    double* ov = out.data().data();
    for (int64_t i = 0; i < n_pts; ++i) {
        const double* center = xv + i * d;
        for (int64_t j = 0; j < k; ++j) {
            const double* nb = xv + static_cast<int64_t>(neighbor_ids[i * k + j]) * d;
            double* row = ov + (i * k + j) * 2 * d;
            for (int64_t c = 0; c < d; ++c) {
                row[c] = center[c];
                row[d + c] = nb[c] - center[c];
            }
        }
    }
    if (out.requires_grad()) {
        out.node()->backward = [neighbor_ids, k, d](TensorNode& n) {
            TensorNode& in = *n.inputs[0];
            if (!in.requires_grad) return;
            in.ensure_grad();
            int64_t n_pts2 = in.shape[0];
            for (int64_t i = 0; i < n_pts2; ++i) {
                double* gc = in.grad.data() + i * d;
                for (int64_t j = 0; j < k; ++j) {
                    const double* grow = n.grad.data() + (i * k + j) * 2 * d;
                    double* gn = in.grad.data() + static_cast<int64_t>(neighbor_ids[i * k + j]) * d;
                    for (int64_t c = 0; c < d; ++c) {
                        gc[c] += grow[c] - grow[d + c];
                        gn[c] += grow[d + c];
                    }
                }
            }
        };
    }
    return out;
}

}  // namespace pointmtl
