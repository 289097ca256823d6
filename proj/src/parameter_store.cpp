#include "pointmtl/parameter_store.hpp"

#include <cmath>

namespace pointmtl {

Tensor ParameterStore::create_param(const std::string& name, Shape shape,
                                    std::vector<double> values) {
    if (params_.count(name)) throw_state("parameter '" + name + "' already exists");
    Tensor t = Tensor::from_data(std::move(shape), std::move(values), /*requires_grad=*/true);
    params_.emplace(name, t);
    moments_[name] = AdamMoments{std::vector<double>(t.numel(), 0.0),
                                 std::vector<double>(t.numel(), 0.0)};
    return t;
}

Tensor ParameterStore::param(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw_state("unknown parameter '" + name + "'");
    return it->second;
}

bool ParameterStore::has_param(const std::string& name) const { return params_.count(name) > 0; }

BatchNormStats& ParameterStore::create_bn_stats(const std::string& name, int64_t features) {
    if (bn_stats_.count(name)) throw_state("batch-norm stats '" + name + "' already exist");
    BatchNormStats stats;
    stats.running_mean.assign(static_cast<size_t>(features), 0.0);
    stats.running_var.assign(static_cast<size_t>(features), 1.0);
    return bn_stats_.emplace(name, std::move(stats)).first->second;
}

BatchNormStats& ParameterStore::bn_stats(const std::string& name) {
    auto it = bn_stats_.find(name);
    if (it == bn_stats_.end()) throw_state("unknown batch-norm stats '" + name + "'");
    return it->second;
}

const BatchNormStats& ParameterStore::bn_stats(const std::string& name) const {
    auto it = bn_stats_.find(name);
    if (it == bn_stats_.end()) throw_state("unknown batch-norm stats '" + name + "'");
    return it->second;
}

void ParameterStore::zero_grad() {
    for (auto& [name, p] : params_) {
        auto& g = p.grad();
        g.assign(p.value().size(), 0.0);
    }
}

void ParameterStore::adam_step(double lr, double beta1, double beta2, double eps) {
    for (auto& [name, p] : params_) {
        if (!p.has_grad()) throw_state("adam_step: missing gradient for parameter '" + name + "'");
    }
    step_ += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    for (auto& [name, p] : params_) {
        AdamMoments& mom = moments_.at(name);
        auto& value = p.data();
        auto& grad = p.grad();
        for (size_t i = 0; i < value.size(); ++i) {
            double g = grad[i];
            mom.m[i] = beta1 * mom.m[i] + (1.0 - beta1) * g;
            mom.v[i] = beta2 * mom.v[i] + (1.0 - beta2) * g * g;
            double m_hat = mom.m[i] / bc1;
            double v_hat = mom.v[i] / bc2;
            value[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
        grad.clear();
    }
}

int64_t ParameterStore::parameter_count() const {
    int64_t total = 0;
    for (const auto& [name, p] : params_) total += p.numel();
    return total;
}

}  // namespace pointmtl
