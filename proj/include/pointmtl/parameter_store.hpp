#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pointmtl/tensor.hpp"

namespace pointmtl {

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

// Named parameters plus optimizer state and batch-norm running statistics.
// Iteration is always in name order, which keeps update order and
// serialization deterministic.
class ParameterStore {
  public:
    Tensor create_param(const std::string& name, Shape shape, std::vector<double> values);
    Tensor param(const std::string& name) const;
    bool has_param(const std::string& name) const;

    BatchNormStats& create_bn_stats(const std::string& name, int64_t features);
    BatchNormStats& bn_stats(const std::string& name);
    const BatchNormStats& bn_stats(const std::string& name) const;

    // Allocates zero gradients on every parameter.
    void zero_grad();

    // Adam update over all parameters; every gradient must be populated.
    // Gradients are cleared afterwards.
    void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    int64_t parameter_count() const;
    int64_t step() const { return step_; }
    void set_step(int64_t s) { step_ = s; }

    const std::map<std::string, Tensor>& params() const { return params_; }
    std::map<std::string, Tensor>& params() { return params_; }
    const std::map<std::string, AdamMoments>& moments() const { return moments_; }
    std::map<std::string, AdamMoments>& moments() { return moments_; }
    const std::map<std::string, BatchNormStats>& all_bn_stats() const { return bn_stats_; }
    std::map<std::string, BatchNormStats>& all_bn_stats() { return bn_stats_; }

  private:
    std::map<std::string, Tensor> params_;
    std::map<std::string, AdamMoments> moments_;
    std::map<std::string, BatchNormStats> bn_stats_;
    int64_t step_ = 0;
};

}  // namespace pointmtl
