#pragma once

#include <cstdint>
#include <string>

#include "cebm/param.hpp"

namespace cebm {

struct LrSchedule {
    std::string kind = "constant";  // constant | warmup_cosine
    double base_lr = 1e-3;
    std::int64_t warmup_steps = 0;
    std::int64_t total_steps = 0;   // for cosine decay
    double final_lr = 0.0;

    double at(std::int64_t step) const;
};

// Bias-corrected Adam with decoupled weight decay.
class Adam {
 public:
    Adam() = default;
    explicit Adam(LrSchedule lr, double weight_decay = 0.0, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(ParameterVector& params, const ParameterVector& grads);

    std::int64_t step_count() const { return step_count_; }
    const ParameterVector& m() const { return m_; }
    const ParameterVector& v() const { return v_; }
    const LrSchedule& lr() const { return lr_; }
    double weight_decay() const { return weight_decay_; }
    double beta1() const { return beta1_; }
    double beta2() const { return beta2_; }
    double eps() const { return eps_; }

    // checkpoint restore
    void restore(ParameterVector m, ParameterVector v, std::int64_t step_count);

 private:
    LrSchedule lr_;
    double weight_decay_ = 0.0;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    std::int64_t step_count_ = 0;
    ParameterVector m_, v_;
};

}  // namespace cebm
