#include "cebm/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace cebm {

double LrSchedule::at(std::int64_t step) const {
    if (kind == "constant") return base_lr;
    if (kind == "warmup_cosine") {
        if (step < warmup_steps && warmup_steps > 0)
            return base_lr * double(step + 1) / double(warmup_steps);
        double T = double(std::max<std::int64_t>(total_steps - warmup_steps, 1));
        double u = std::min(1.0, double(step - warmup_steps) / T);
        return final_lr + 0.5 * (base_lr - final_lr) * (1.0 + std::cos(M_PI * u));
    }
    throw std::invalid_argument("LrSchedule: unknown kind " + kind);
}

void Adam::step(ParameterVector& params, const ParameterVector& grads) {
    if (!params.same_layout(grads)) throw std::invalid_argument("Adam: shape mismatch");
    if (m_.size() == 0) {
        m_ = params.zeros_like();
        v_ = params.zeros_like();
    }
    ++step_count_;
    double lr = lr_.at(step_count_ - 1);
    double bc1 = 1.0 - std::pow(beta1_, double(step_count_));
    double bc2 = 1.0 - std::pow(beta2_, double(step_count_));
    for (std::size_t e = 0; e < params.size(); ++e) {
        auto& p = params.entries()[e].value.data;
        const auto& g = grads.entries()[e].value.data;
        auto& m = m_.entries()[e].value.data;
        auto& v = v_.entries()[e].value.data;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            p[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p[i]);
        }
    }
}

void Adam::restore(ParameterVector m, ParameterVector v, std::int64_t step_count) {
    m_ = std::move(m);
    v_ = std::move(v);
    step_count_ = step_count;
}

}  // namespace cebm
