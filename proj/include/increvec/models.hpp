#pragma once

#include <map>
#include <string>
#include <vector>

#include "increvec/history.hpp"
#include "increvec/nn.hpp"

namespace increvec {

// Feature layouts from the batch study plus the incremental path.
// Components are always concatenated in the fixed order [q, U_p, U_h]
// (incremental: [q, B]).
enum class FeatureVariant { Q, Q_UP, Q_UP_UH_MEAN, Q_UP_UH_ATTN, INCREMENTAL };

inline const char* variant_name(FeatureVariant v) {
    switch (v) {
        case FeatureVariant::Q: return "q";
        case FeatureVariant::Q_UP: return "q_up";
        case FeatureVariant::Q_UP_UH_MEAN: return "mean_pooling";
        case FeatureVariant::Q_UP_UH_ATTN: return "self_attention";
        case FeatureVariant::INCREMENTAL: return "incremental";
    }
    return "?";
}

inline FeatureVariant variant_from_name(const std::string& name) {
    if (name == "q") return FeatureVariant::Q;
    if (name == "q_up") return FeatureVariant::Q_UP;
    if (name == "mean_pooling") return FeatureVariant::Q_UP_UH_MEAN;
    if (name == "self_attention") return FeatureVariant::Q_UP_UH_ATTN;
    if (name == "incremental") return FeatureVariant::INCREMENTAL;
    throw ConfigError("unknown model variant: " + name);
}

inline bool variant_uses_history(FeatureVariant v) {
    return v == FeatureVariant::Q_UP_UH_MEAN || v == FeatureVariant::Q_UP_UH_ATTN;
}

// Number of d-sized components the head consumes. use_profile drops U_p
// (the sequential-dataset setting keeps no user attributes).
inline int variant_components(FeatureVariant v, bool use_profile) {
    switch (v) {
        case FeatureVariant::Q: return 1;
        case FeatureVariant::Q_UP: return 2;
        case FeatureVariant::Q_UP_UH_MEAN:
        case FeatureVariant::Q_UP_UH_ATTN: return use_profile ? 3 : 2;
        case FeatureVariant::INCREMENTAL: return 2;
    }
    return 0;
}

// Linear classifier over concatenated feature vectors.
template <typename T>
struct ClassifierHead {
    LinearParams<T> lin;

    ClassifierHead() = default;
    ClassifierHead(int input_dim, int num_classes) : lin(input_dim, num_classes) {}

    int input_dim() const { return lin.in_dim(); }
    int num_classes() const { return lin.out_dim(); }

    void init(Rng& rng) { lin.init(rng); }

    void visit(const ParamVisitor<T>& fn) {
        fn("head.w", lin.w);
        fn("head.b", lin.b);
    }

    Matrix<T> forward(const Matrix<T>& features) const { return linear_forward(features, lin); }
    Matrix<T> backward(const Matrix<T>& features, const Matrix<T>& dlogits) {
        return linear_backward(features, lin, dlogits);
    }
};

// Transformer encoder applied over embedding sequences (not tokens):
// the recent-history window plus the accumulated vector, or all history
// embeddings in the batch self-attention baseline.
template <typename T>
struct UpperTransformer {
    TransformerParams<T> tx;

    UpperTransformer() = default;
    UpperTransformer(const AttentionConfig& cfg, int max_seq) : tx(cfg, max_seq) {}

    int dim() const { return tx.cfg.model_dim; }
    int max_seq() const { return tx.max_seq(); }

    void init(Rng& rng) { tx.init(rng); }

    void visit(const ParamVisitor<T>& fn) { tx.visit("upper", fn); }

    Matrix<T> forward(const Matrix<T>& x, const DropoutPlan& drop = DropoutPlan::eval(),
                      TransformerCache<T>* cache = nullptr) {
        if (x.rows > max_seq()) throw ShapeError("upper transformer: sequence exceeds positional table");
        return transformer_forward(x, tx, x.rows, drop, cache);
    }

    Matrix<T> backward(TransformerCache<T>& cache, const Matrix<T>& dout) {
        return transformer_backward(cache, tx, dout);
    }
};

template <typename T>
std::vector<T> aggregate_mean(const Matrix<T>& history_embs) {
    if (history_embs.rows < 1) throw DataError("aggregate_mean: empty history");
    return mean_rows(history_embs);
}

// Mean over rows of the transformer output.
template <typename T>
std::vector<T> aggregate_attn(const Matrix<T>& history_embs, UpperTransformer<T>& ut,
                              const DropoutPlan& drop = DropoutPlan::eval(),
                              TransformerCache<T>* cache = nullptr) {
    if (history_embs.rows < 1) throw DataError("aggregate_attn: empty history");
    Matrix<T> out = ut.forward(history_embs, drop, cache);
    return mean_rows(out);
}

// Gradient of a row-mean reduction: spread d_pooled evenly over rows.
template <typename T>
Matrix<T> mean_rows_backward(const std::vector<T>& d_pooled, int rows) {
    Matrix<T> d(rows, static_cast<int>(d_pooled.size()));
    const T inv = T(1) / static_cast<T>(rows);
    for (int r = 0; r < rows; ++r) {
        T* row = d.row(r);
        for (std::size_t c = 0; c < d_pooled.size(); ++c) row[c] = d_pooled[c] * inv;
    }
    return d;
}

template <typename T>
struct IncrementalOut {
    std::vector<T> u_profile;
    std::vector<T> b_new;
    Matrix<T> logits;  // 1 x C
    Matrix<T> features;
    TransformerCache<T> ut_cache;
    int fused_rows = 0;
};

// One forward step of the incremental model: fuse [history ; past_activity]
// through the upper transformer, mean-pool all rows into u_profile, blend
// into the accumulated vector, classify [q || B_new]. classify_pre_update
// feeds the head the pre-blend accumulated vector instead (ablation).
template <typename T>
IncrementalOut<T> incremental_forward(const std::vector<T>& q, const WindowView<T>& window, double alpha,
                                      UpperTransformer<T>& ut, ClassifierHead<T>& head,
                                      const DropoutPlan& drop = DropoutPlan::eval(),
                                      bool classify_pre_update = false) {
    const int d = static_cast<int>(q.size());
    if (window.history.cols != d || static_cast<int>(window.past_activity.size()) != d)
        throw ShapeError("incremental_forward: dim mismatch");
    if (head.input_dim() != 2 * d) throw ShapeError("incremental_forward: head expects 2d inputs");

    IncrementalOut<T> out;
    Matrix<T> fused(window.history.rows + 1, d);
    for (int r = 0; r < window.history.rows; ++r) {
        const T* src = window.history.row(r);
        T* dst = fused.row(r);
        for (int c = 0; c < d; ++c) dst[c] = src[c];
    }
    {
        T* dst = fused.row(window.history.rows);
        for (int c = 0; c < d; ++c) dst[c] = window.past_activity[static_cast<std::size_t>(c)];
    }
    out.fused_rows = fused.rows;
    Matrix<T> encoded = ut.forward(fused, drop, &out.ut_cache);
    out.u_profile = mean_rows(encoded);

    const T a = static_cast<T>(alpha);
    out.b_new.resize(static_cast<std::size_t>(d));
    for (int c = 0; c < d; ++c)
        out.b_new[static_cast<std::size_t>(c)] =
            a * out.u_profile[static_cast<std::size_t>(c)] +
            (T(1) - a) * window.prev_accumulated[static_cast<std::size_t>(c)];

    const std::vector<T>& b_feat = classify_pre_update ? window.prev_accumulated : out.b_new;
    out.features = Matrix<T>(1, 2 * d);
    for (int c = 0; c < d; ++c) {
        out.features(0, c) = q[static_cast<std::size_t>(c)];
        out.features(0, d + c) = b_feat[static_cast<std::size_t>(c)];
    }
    out.logits = head.forward(out.features);
    return out;
}

// Backward for the incremental step. Stored history and accumulated
// vectors are constants; gradients reach only the upper transformer and
// the head.
template <typename T>
void incremental_backward(IncrementalOut<T>& fwd, double alpha, UpperTransformer<T>& ut,
                          ClassifierHead<T>& head, const Matrix<T>& dlogits,
                          bool classify_pre_update = false) {
    const int d = static_cast<int>(fwd.u_profile.size());
    Matrix<T> dfeat = head.backward(fwd.features, dlogits);
    if (classify_pre_update) return;  // no path into the upper transformer
    std::vector<T> d_uprofile(static_cast<std::size_t>(d));
    const T a = static_cast<T>(alpha);
    for (int c = 0; c < d; ++c) d_uprofile[static_cast<std::size_t>(c)] = a * dfeat(0, d + c);
    Matrix<T> d_encoded = mean_rows_backward(d_uprofile, fwd.fused_rows);
    ut.backward(fwd.ut_cache, d_encoded);
}

// Modal class of a most-recent-first label list; ties go to the class
// whose latest occurrence is most recent.
inline int majority_count(const std::vector<int>& history_labels) {
    if (history_labels.empty()) throw DataError("majority_count: empty history");
    std::map<int, int> counts;
    for (int y : history_labels) ++counts[y];
    int best = -1;
    int best_count = 0;
    for (int y : history_labels) {  // most-recent-first: first hit wins ties
        const int c = counts[y];
        if (c > best_count) {
            best_count = c;
            best = y;
        }
    }
    return best;
}

template <typename T>
struct BatchForwardCache {
    Matrix<T> features;
    TransformerCache<T> ut_cache;
    int hist_rows = 0;
};

// Concatenates the active components in fixed order and classifies.
// U_h comes from mean pooling or the upper transformer per the variant.
template <typename T>
Matrix<T> batch_forward(FeatureVariant variant, bool use_profile, const std::vector<T>& q,
                        const std::vector<T>* u_p, const Matrix<T>* history_embs,
                        UpperTransformer<T>* ut, ClassifierHead<T>& head,
                        const DropoutPlan& drop = DropoutPlan::eval(),
                        BatchForwardCache<T>* cache = nullptr) {
    const int d = static_cast<int>(q.size());
    const bool wants_profile = (variant == FeatureVariant::Q_UP) ||
                               (variant_uses_history(variant) && use_profile);
    if (variant == FeatureVariant::INCREMENTAL)
        throw ConfigError("batch_forward: incremental variant is not a batch model");
    if (wants_profile && u_p == nullptr) throw ConfigError("batch_forward: missing profile component");
    if (variant_uses_history(variant) && history_embs == nullptr)
        throw ConfigError("batch_forward: missing history component");
    if (variant == FeatureVariant::Q_UP_UH_ATTN && ut == nullptr)
        throw ConfigError("batch_forward: missing upper transformer");

    std::vector<T> u_h;
    if (variant_uses_history(variant)) {
        if (variant == FeatureVariant::Q_UP_UH_ATTN) {
            u_h = aggregate_attn(*history_embs, *ut, drop, cache ? &cache->ut_cache : nullptr);
        } else {
            u_h = aggregate_mean(*history_embs);
        }
        if (cache) cache->hist_rows = history_embs->rows;
    }

    std::vector<const std::vector<T>*> parts;
    parts.push_back(&q);
    if (wants_profile) parts.push_back(u_p);
    if (!u_h.empty()) parts.push_back(&u_h);

    const int total = static_cast<int>(parts.size()) * d;
    if (head.input_dim() != total) throw ShapeError("batch_forward: head input dim mismatch");
    Matrix<T> features(1, total);
    int off = 0;
    for (const auto* part : parts) {
        for (int c = 0; c < d; ++c) features(0, off + c) = (*part)[static_cast<std::size_t>(c)];
        off += d;
    }
    Matrix<T> logits = head.forward(features);
    if (cache) cache->features = std::move(features);
    return logits;
}

}  // namespace increvec
