#include "pointmtl/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "pointmtl/rng.hpp"

namespace pointmtl {

namespace {

double eval_scalar(const std::function<Tensor(Tape&)>& f) {
    Tape tape;
    Tensor out = f(tape);
    double v = out.item();
    if (!std::isfinite(v)) throw_numeric("grad_check: function value is not finite");
    return v;
}

}  // namespace

double grad_check(const std::function<Tensor(Tape&)>& f, std::vector<Tensor> inputs,
                  const GradCheckOptions& opts) {
    if (opts.eps <= 0.0) throw_validation("grad_check: eps must be positive");
    for (auto& in : inputs) in.set_requires_grad(true);

    // Analytic pass. Gradients accumulate, so stale buffers must go first.
    for (auto& in : inputs) in.grad().clear();
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor loss = f(tape);
        if (!std::isfinite(loss.item())) throw_numeric("grad_check: loss is not finite");
        tape.backward(loss);
        for (auto& in : inputs) {
            if (in.has_grad()) {
                analytic.push_back(in.grad());
            } else {
                analytic.emplace_back(in.numel(), 0.0);
            }
            in.grad().clear();
        }
    }

    double worst = 0.0;
    for (size_t t = 0; t < inputs.size(); ++t) {
        Tensor& in = inputs[t];
        int64_t n = in.numel();
        std::vector<int64_t> coords(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        if (opts.max_coords_per_input > 0 && opts.max_coords_per_input < n) {
            Rng rng(opts.sample_seed);
            Rng sampler = rng.split(t);
            sampler.shuffle(coords);
            coords.resize(static_cast<size_t>(opts.max_coords_per_input));
            std::sort(coords.begin(), coords.end());
        }
        for (int64_t i : coords) {
            double saved = in.data()[static_cast<size_t>(i)];
            in.data()[static_cast<size_t>(i)] = saved + opts.eps;
            double plus = eval_scalar(f);
            in.data()[static_cast<size_t>(i)] = saved - opts.eps;
            double minus = eval_scalar(f);
            in.data()[static_cast<size_t>(i)] = saved;
            double fd = (plus - minus) / (2.0 * opts.eps);
            double an = analytic[t][static_cast<size_t>(i)];
            if (!std::isfinite(fd) || !std::isfinite(an)) {
                throw_numeric("grad_check: non-finite gradient encountered");
            }
            double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
            worst = std::max(worst, std::abs(fd - an) / denom);
        }
    }
    return worst;
}

}  // namespace pointmtl
