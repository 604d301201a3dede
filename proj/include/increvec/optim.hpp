#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "increvec/param.hpp"

namespace increvec {

struct AdamwConfig {
    double lr = 2e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// One AdamW update with decoupled weight decay and a linear-decay
// schedule: effective lr = lr * (1 - schedule_frac). Gradients are left
// untouched; callers zero them at the start of the next accumulation.
template <typename T>
void adamw_step(ParamTensor<T>& p, const AdamwConfig& cfg, double schedule_frac) {
    const double frac = std::clamp(schedule_frac, 0.0, 1.0);
    const double lr = cfg.lr * (1.0 - frac);
    p.step_count += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p.step_count));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p.step_count));
    for (std::size_t i = 0; i < p.value.data.size(); ++i) {
        const double g = static_cast<double>(p.grad.data[i]);
        const double m = cfg.beta1 * static_cast<double>(p.adam_m.data[i]) + (1.0 - cfg.beta1) * g;
        const double v = cfg.beta2 * static_cast<double>(p.adam_v.data[i]) + (1.0 - cfg.beta2) * g * g;
        p.adam_m.data[i] = static_cast<T>(m);
        p.adam_v.data[i] = static_cast<T>(v);
        const double m_hat = m / bc1;
        const double v_hat = v / bc2;
        const double update = m_hat / (std::sqrt(v_hat) + cfg.eps) + cfg.weight_decay * static_cast<double>(p.value.data[i]);
        p.value.data[i] = static_cast<T>(static_cast<double>(p.value.data[i]) - lr * update);
    }
}

template <typename T>
void adamw_step(std::vector<ParamTensor<T>*>& params, const AdamwConfig& cfg, double schedule_frac) {
    for (auto* p : params) adamw_step(*p, cfg, schedule_frac);
}

}  // namespace increvec
