#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "increvec/param.hpp"

namespace increvec {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    int worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central-difference gradient verification. loss_fn must recompute the
// scalar loss from the current parameter values; grads must already hold
// the analytic gradient of that loss. Checks up to max_coords_per_tensor
// coordinates per tensor (a deterministic sample plus the coordinate with
// the largest analytic gradient).
//
// Relative error per coordinate is |analytic - numeric| relative to the
// numeric estimate, floored by a small fraction of the largest gradient
// magnitude seen so that dead coordinates cannot dominate the report.
template <typename T>
GradCheckReport grad_check(const std::function<double()>& loss_fn,
                           const std::vector<std::pair<std::string, ParamTensor<T>*>>& params,
                           double eps, int max_coords_per_tensor = 24) {
    static_assert(sizeof(T) >= 8, "grad_check expects double precision");

    double gmax = 0.0;
    for (const auto& [name, p] : params) {
        for (const T g : p->grad.data) gmax = std::max(gmax, std::abs(static_cast<double>(g)));
    }

    GradCheckReport report;
    for (const auto& [name, p] : params) {
        const std::size_t count = p->value.data.size();
        if (count == 0) continue;

        std::vector<std::size_t> coords;
        std::size_t argmax = 0;
        for (std::size_t i = 1; i < count; ++i) {
            if (std::abs(p->grad.data[i]) > std::abs(p->grad.data[argmax])) argmax = i;
        }
        coords.push_back(argmax);
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(max_coords_per_tensor), count);
        Rng rng(mix64(fnv1a(name), 0x6772616463686bULL));
        for (std::size_t s = 0; s + 1 < take; ++s) {
            coords.push_back(static_cast<std::size_t>(rng.next_u64() % count));
        }

        for (const std::size_t idx : coords) {
            const T saved = p->value.data[idx];
            p->value.data[idx] = saved + static_cast<T>(eps);
            const double f_plus = loss_fn();
            p->value.data[idx] = saved - static_cast<T>(eps);
            const double f_minus = loss_fn();
            p->value.data[idx] = saved;

            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double analytic = static_cast<double>(p->grad.data[idx]);
            const double denom = std::max({std::abs(numeric), 1e-3 * gmax, 1e-12});
            const double rel = std::abs(analytic - numeric) / denom;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = name;
                report.worst_index = static_cast<int>(idx);
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace increvec
