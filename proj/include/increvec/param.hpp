#pragma once

#include <functional>
#include <string>

#include "increvec/matrix.hpp"

namespace increvec {

// One trainable tensor plus its gradient and AdamW state. All four
// matrices share one shape; step_count drives bias correction.
template <typename T>
struct ParamTensor {
    Matrix<T> value;
    Matrix<T> grad;
    Matrix<T> adam_m;
    Matrix<T> adam_v;
    long step_count = 0;

    ParamTensor() = default;
    ParamTensor(int rows, int cols)
        : value(rows, cols), grad(rows, cols), adam_m(rows, cols), adam_v(rows, cols) {}

    void init_uniform(Rng& rng, double scale) {
        for (auto& v : value.data) v = static_cast<T>(rng.uniform(-scale, scale));
    }

    void zero_grad() { grad.zero(); }

    void reset_state() {
        grad.zero();
        adam_m.zero();
        adam_v.zero();
        step_count = 0;
    }
};

// Named visitation over a model's parameters; shared by the optimizer,
// the checkpoint writer and grad_check.
template <typename T>
using ParamVisitor = std::function<void(const std::string&, ParamTensor<T>&)>;

}  // namespace increvec
