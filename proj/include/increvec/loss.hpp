#pragma once

#include <cmath>
#include <vector>

#include "increvec/matrix.hpp"

namespace increvec {

// Per-class loss weights, normalized so the mean weight is 1. Keeps loss
// magnitudes comparable between weighted and unweighted runs.
struct ClassWeights {
    std::vector<double> weights;

    static ClassWeights uniform(int num_classes) {
        ClassWeights w;
        w.weights.assign(static_cast<std::size_t>(num_classes), 1.0);
        return w;
    }

    void validate() const {
        if (weights.empty()) throw ConfigError("ClassWeights: empty");
        double sum = 0.0;
        for (double w : weights) {
            if (w <= 0.0) throw ConfigError("ClassWeights: non-positive weight");
            sum += w;
        }
        const double mean = sum / static_cast<double>(weights.size());
        if (std::abs(mean - 1.0) > 1e-9) throw ConfigError("ClassWeights: mean not 1");
    }
};

template <typename T>
struct LossResult {
    double loss = 0.0;
    Matrix<T> dlogits;
};

// loss = sum_b w[y_b] * (-log softmax(logits_b)[y_b]) / sum_b w[y_b]
// dlogits_b = (w[y_b] / sum w) * (softmax(logits_b) - onehot(y_b))
template <typename T>
LossResult<T> weighted_cross_entropy(const Matrix<T>& logits, const std::vector<int>& labels,
                                     const ClassWeights& w) {
    const int batch = logits.rows;
    const int c = logits.cols;
    if (batch < 1 || static_cast<int>(labels.size()) != batch)
        throw ShapeError("cross_entropy: batch/label mismatch");
    if (static_cast<int>(w.weights.size()) != c)
        throw ShapeError("cross_entropy: weight count mismatch");

    LossResult<T> out;
    out.dlogits = Matrix<T>(batch, c);
    double weight_sum = 0.0;
    for (int b = 0; b < batch; ++b) {
        const int y = labels[b];
        if (y < 0 || y >= c) throw std::out_of_range("cross_entropy: label out of range");
        weight_sum += w.weights[static_cast<std::size_t>(y)];
    }
    const double inv_wsum = 1.0 / weight_sum;

    double loss = 0.0;
    for (int b = 0; b < batch; ++b) {
        const T* row = logits.row(b);
        const int y = labels[b];
        double maxv = static_cast<double>(row[0]);
        for (int j = 1; j < c; ++j) maxv = std::max(maxv, static_cast<double>(row[j]));
        double sum = 0.0;
        for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(row[j]) - maxv);
        const double log_z = maxv + std::log(sum);
        const double wb = w.weights[static_cast<std::size_t>(y)];
        loss += wb * (log_z - static_cast<double>(row[y]));

        T* drow = out.dlogits.row(b);
        const double coeff = wb * inv_wsum;
        for (int j = 0; j < c; ++j) {
            const double p = std::exp(static_cast<double>(row[j]) - log_z);
            drow[j] = static_cast<T>(coeff * (p - (j == y ? 1.0 : 0.0)));
        }
    }
    out.loss = loss * inv_wsum;
    return out;
}

}  // namespace increvec
