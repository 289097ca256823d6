#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pointmtl/errors.hpp"
#include "pointmtl/rng.hpp"

namespace pointmtl {

enum class Mode { Train, Eval };

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until gradient flows into this node
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> inputs;
    std::function<void(TensorNode&)> backward;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

// Value-semantics handle to a node in the computation graph. The 64-bit value
// buffer is row-major.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

    static Tensor from_data(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double fill, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return node_->numel(); }
    int64_t dim(size_t i) const { return node_->shape[i]; }
    size_t rank() const { return node_->shape.size(); }

    const std::vector<double>& value() const { return node_->value; }
    std::vector<double>& data() { return node_->value; }
    std::vector<double>& grad() { return node_->grad; }
    const std::vector<double>& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    double item() const;

    const std::shared_ptr<TensorNode>& node() const { return node_; }

  private:
    std::shared_ptr<TensorNode> node_;
};

// Execution-ordered record of graph nodes for one forward pass. Rebuilt per
// pass: the k-NN graph and dropout masks change every step, so there is no
// static graph to cache. backward() walks the record once, in reverse.
class Tape {
  public:
    Tensor make(const char* op, Shape shape, std::vector<Tensor> inputs);

    // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every node on
    // the path to leaves with requires_grad set.
    void backward(const Tensor& loss);

    size_t node_count() const { return order_.size(); }

  private:
    std::vector<std::shared_ptr<TensorNode>> order_;
};

// ---- elementwise ----
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor relu(Tape& tape, const Tensor& a);

// ---- linear algebra ----
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// ---- shape manipulation ----
Tensor concat(Tape& tape, std::span<const Tensor> inputs, size_t axis);
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);
Tensor slice_rows(Tape& tape, const Tensor& a, int64_t begin, int64_t count);

// ---- reductions ----
enum class ReduceKind { Sum, Mean, Max };
Tensor reduce(Tape& tape, ReduceKind kind, const Tensor& a, size_t axis);
Tensor reduce_sum(Tape& tape, const Tensor& a, size_t axis);
Tensor reduce_mean(Tape& tape, const Tensor& a, size_t axis);
Tensor reduce_max(Tape& tape, const Tensor& a, size_t axis);

// ---- neural-net layers ----
struct BatchNormStats {
    std::vector<double> running_mean;
    std::vector<double> running_var;
};

// Normalizes each feature column of x (rows x features). Train mode uses batch
// statistics (biased variance) and folds them into the running stats with the
// given momentum; eval mode uses the running stats. gamma/beta are learnable.
Tensor batch_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormStats& stats, Mode mode, double momentum = 0.1, double eps = 1e-5);

Tensor dropout(Tape& tape, const Tensor& x, double p, Mode mode, Rng& rng);

// Mean over rows of -log softmax(logits) at the target index. targets must be
// one-hot rows. Stabilized by max subtraction.
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, const Tensor& targets);

// Per-edge feature assembly for graph convolution: for point i and its j-th
// neighbor n, output row i*k+j is [x_i || x_n - x_i]. x is (N x d), neighbor
// ids are row-major (N x k); output is (N*k x 2d).
Tensor edge_features(Tape& tape, const Tensor& x, const std::vector<int32_t>& neighbor_ids, int64_t k);

// Hooks for fault-injection in verification tests. Never set in production.
namespace debug {
extern std::atomic<bool> negate_relu_backward;
}

}  // namespace pointmtl
