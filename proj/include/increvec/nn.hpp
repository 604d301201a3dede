#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "increvec/matrix.hpp"
#include "increvec/param.hpp"

namespace increvec {

// Upper bound used by the softmax finiteness check; inputs are shifted by
// the row max before exponentiation so the bound is about input sanity,
// not numeric range.
struct AttentionConfig {
    int num_layers = 4;
    int num_heads = 8;
    int model_dim = 64;
    int ff_dim = 256;
    double dropout_p = 0.1;

    void validate() const {
        if (model_dim <= 0 || num_heads <= 0 || num_layers < 0)
            throw ConfigError("AttentionConfig: non-positive dimension");
        if (model_dim % num_heads != 0)
            throw ConfigError("AttentionConfig: model_dim not divisible by num_heads");
        if (dropout_p < 0.0 || dropout_p >= 1.0)
            throw ConfigError("AttentionConfig: dropout_p outside [0,1)");
    }
};

// Deterministic dropout stream. key is derived by the caller from
// (seed, step, sample, role); each site inside the stack further mixes in
// its layer index and slot, so masks are reproducible without storing RNG
// state anywhere.
struct DropoutPlan {
    bool enabled = false;
    double p = 0.0;
    std::uint64_t key = 0;

    static DropoutPlan eval() { return DropoutPlan{}; }
    static DropoutPlan train(double p, std::uint64_t seed, std::uint64_t step, std::uint64_t slot) {
        DropoutPlan plan;
        plan.enabled = p > 0.0;
        plan.p = p;
        plan.key = mix64(seed, step, slot);
        return plan;
    }
};

// In-place row softmax over the leading valid_cols entries; remaining
// columns are set to exactly zero (masked keys carry no weight).
template <typename T>
void softmax_rows_masked(Matrix<T>& m, int valid_cols) {
    if (valid_cols < 1 || valid_cols > m.cols) throw ShapeError("softmax: bad valid_cols");
    for (int r = 0; r < m.rows; ++r) {
        T* row = m.row(r);
        T maxv = row[0];
        for (int c = 0; c < valid_cols; ++c) {
            if (!std::isfinite(static_cast<double>(row[c])))
                throw NumericDomainError("softmax: non-finite input");
            maxv = std::max(maxv, row[c]);
        }
        T sum = T(0);
        for (int c = 0; c < valid_cols; ++c) {
            row[c] = std::exp(row[c] - maxv);
            sum += row[c];
        }
        const T inv = T(1) / sum;
        for (int c = 0; c < valid_cols; ++c) row[c] *= inv;
        for (int c = valid_cols; c < m.cols; ++c) row[c] = T(0);
    }
}

template <typename T>
Matrix<T> softmax_rows(const Matrix<T>& m) {
    Matrix<T> out = m;
    softmax_rows_masked(out, m.cols);
    return out;
}

inline double gelu_scalar(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440));
}

inline double gelu_grad_scalar(double x) {
    const double phi = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
    const double pdf = std::exp(-0.5 * x * x) * 0.39894228040143267794;
    return phi + x * pdf;
}

// y = x * W^T + b, W is (out x in), b is (1 x out).
template <typename T>
struct LinearParams {
    ParamTensor<T> w;
    ParamTensor<T> b;

    LinearParams() = default;
    LinearParams(int in, int out) : w(out, in), b(1, out) {}

    void init(Rng& rng) {
        // Xavier-uniform
        const double scale = std::sqrt(6.0 / (w.value.cols + w.value.rows));
        w.init_uniform(rng, scale);
        b.value.zero();
    }

    int in_dim() const { return w.value.cols; }
    int out_dim() const { return w.value.rows; }
};

template <typename T>
Matrix<T> linear_forward(const Matrix<T>& x, const LinearParams<T>& lin) {
    if (x.cols != lin.in_dim()) throw ShapeError("linear: input dim mismatch");
    Matrix<T> y(x.rows, lin.out_dim());
    gemm_nt(x, lin.w.value, y);
    for (int r = 0; r < y.rows; ++r) {
        T* row = y.row(r);
        const T* b = lin.b.value.row(0);
        for (int c = 0; c < y.cols; ++c) row[c] += b[c];
    }
    return y;
}

// Accumulates parameter grads, returns dx.
template <typename T>
Matrix<T> linear_backward(const Matrix<T>& x, LinearParams<T>& lin, const Matrix<T>& dy) {
    gemm_tn_acc(dy, x, lin.w.grad);
    T* db = lin.b.grad.row(0);
    for (int r = 0; r < dy.rows; ++r) {
        const T* row = dy.row(r);
        for (int c = 0; c < dy.cols; ++c) db[c] += row[c];
    }
    Matrix<T> dx(x.rows, x.cols);
    gemm_nn(dy, lin.w.value, dx);
    return dx;
}

template <typename T>
struct LayerNormParams {
    ParamTensor<T> gamma;
    ParamTensor<T> beta;
    static constexpr double kEps = 1e-5;

    LayerNormParams() = default;
    explicit LayerNormParams(int d) : gamma(1, d), beta(1, d) {
        gamma.value.fill(T(1));
    }
};

template <typename T>
struct LayerNormCache {
    Matrix<T> x;
    std::vector<T> mean;
    std::vector<T> inv_std;
};

template <typename T>
Matrix<T> layernorm_forward(const Matrix<T>& x, const LayerNormParams<T>& ln, LayerNormCache<T>* cache) {
    const int d = x.cols;
    Matrix<T> y(x.rows, d);
    if (cache) {
        cache->x = x;
        cache->mean.assign(x.rows, T(0));
        cache->inv_std.assign(x.rows, T(0));
    }
    const T* g = ln.gamma.value.row(0);
    const T* b = ln.beta.value.row(0);
    for (int r = 0; r < x.rows; ++r) {
        const T* xr = x.row(r);
        T mean = T(0);
        for (int c = 0; c < d; ++c) mean += xr[c];
        mean /= static_cast<T>(d);
        T var = T(0);
        for (int c = 0; c < d; ++c) {
            const T dv = xr[c] - mean;
            var += dv * dv;
        }
        var /= static_cast<T>(d);
        const T inv_std = T(1) / std::sqrt(var + static_cast<T>(LayerNormParams<T>::kEps));
        T* yr = y.row(r);
        for (int c = 0; c < d; ++c) yr[c] = (xr[c] - mean) * inv_std * g[c] + b[c];
        if (cache) {
            cache->mean[r] = mean;
            cache->inv_std[r] = inv_std;
        }
    }
    return y;
}

template <typename T>
Matrix<T> layernorm_backward(const LayerNormCache<T>& cache, LayerNormParams<T>& ln, const Matrix<T>& dy) {
    const int d = cache.x.cols;
    Matrix<T> dx(cache.x.rows, d);
    T* dgamma = ln.gamma.grad.row(0);
    T* dbeta = ln.beta.grad.row(0);
    const T* g = ln.gamma.value.row(0);
    for (int r = 0; r < cache.x.rows; ++r) {
        const T* xr = cache.x.row(r);
        const T* dyr = dy.row(r);
        T* dxr = dx.row(r);
        const T mean = cache.mean[r];
        const T inv_std = cache.inv_std[r];
        T sum_dxhat = T(0);
        T sum_dxhat_xhat = T(0);
        for (int c = 0; c < d; ++c) {
            const T xhat = (xr[c] - mean) * inv_std;
            const T dxhat = dyr[c] * g[c];
            dgamma[c] += dyr[c] * xhat;
            dbeta[c] += dyr[c];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
        }
        const T inv_d = T(1) / static_cast<T>(d);
        for (int c = 0; c < d; ++c) {
            const T xhat = (xr[c] - mean) * inv_std;
            const T dxhat = dyr[c] * g[c];
            dxr[c] = inv_std * (dxhat - inv_d * sum_dxhat - xhat * inv_d * sum_dxhat_xhat);
        }
    }
    return dx;
}

template <typename T>
struct AttentionParams {
    LinearParams<T> wq, wk, wv, wo;

    AttentionParams() = default;
    explicit AttentionParams(int d) : wq(d, d), wk(d, d), wv(d, d), wo(d, d) {}

    void init(Rng& rng) {
        wq.init(rng);
        wk.init(rng);
        wv.init(rng);
        wo.init(rng);
    }
};

template <typename T>
struct AttentionCache {
    Matrix<T> x;
    Matrix<T> q, k, v;
    std::vector<Matrix<T>> probs;  // one seq x seq matrix per head
    Matrix<T> ctx;
    int valid_len = 0;
};

// Standard multi-head self-attention. Keys/values beyond valid_len are
// masked out of the softmax (their attention weight is exactly zero).
template <typename T>
Matrix<T> attention_forward(const Matrix<T>& x, const AttentionParams<T>& p, const AttentionConfig& cfg,
                            int valid_len, AttentionCache<T>* cache = nullptr) {
    const int seq = x.rows;
    const int d = cfg.model_dim;
    const int heads = cfg.num_heads;
    const int dh = d / heads;
    if (x.cols != d) throw ShapeError("attention: input dim mismatch");
    if (valid_len < 1 || valid_len > seq) throw ShapeError("attention: bad valid_len");

    Matrix<T> q = linear_forward(x, p.wq);
    Matrix<T> k = linear_forward(x, p.wk);
    Matrix<T> v = linear_forward(x, p.wv);

    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    Matrix<T> ctx(seq, d);
    std::vector<Matrix<T>> probs(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        Matrix<T> scores(seq, seq);
        for (int i = 0; i < seq; ++i) {
            const T* qi = q.row(i) + off;
            T* srow = scores.row(i);
            for (int j = 0; j < valid_len; ++j) {
                const T* kj = k.row(j) + off;
                T acc = T(0);
                for (int c = 0; c < dh; ++c) acc += qi[c] * kj[c];
                srow[j] = acc * scale;
            }
        }
        softmax_rows_masked(scores, valid_len);
        for (int i = 0; i < seq; ++i) {
            const T* prow = scores.row(i);
            T* crow = ctx.row(i) + off;
            for (int c = 0; c < dh; ++c) crow[c] = T(0);
            for (int j = 0; j < valid_len; ++j) {
                const T pij = prow[j];
                const T* vj = v.row(j) + off;
                for (int c = 0; c < dh; ++c) crow[c] += pij * vj[c];
            }
        }
        probs[static_cast<std::size_t>(h)] = std::move(scores);
    }

    Matrix<T> out = linear_forward(ctx, p.wo);
    if (cache) {
        cache->x = x;
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->probs = std::move(probs);
        cache->ctx = std::move(ctx);
        cache->valid_len = valid_len;
    }
    return out;
}

template <typename T>
Matrix<T> attention_backward(const AttentionCache<T>& cache, AttentionParams<T>& p, const AttentionConfig& cfg,
                             const Matrix<T>& dout) {
    const int seq = cache.x.rows;
    const int d = cfg.model_dim;
    const int heads = cfg.num_heads;
    const int dh = d / heads;
    const int valid = cache.valid_len;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    Matrix<T> dctx = linear_backward(cache.ctx, p.wo, dout);

    Matrix<T> dq(seq, d), dk(seq, d), dv(seq, d);
    for (int h = 0; h < heads; ++h) {
        const int off = h * dh;
        const Matrix<T>& probs = cache.probs[static_cast<std::size_t>(h)];
        // dV = P^T * dCtx_h ; dP = dCtx_h * V_h^T
        Matrix<T> dp(seq, seq);
        for (int i = 0; i < seq; ++i) {
            const T* dci = dctx.row(i) + off;
            const T* pi = probs.row(i);
            T* dpi = dp.row(i);
            for (int j = 0; j < valid; ++j) {
                const T* vj = cache.v.row(j) + off;
                T acc = T(0);
                for (int c = 0; c < dh; ++c) acc += dci[c] * vj[c];
                dpi[j] = acc;
                const T pij = pi[j];
                T* dvj = dv.row(j) + off;
                for (int c = 0; c < dh; ++c) dvj[c] += pij * dci[c];
            }
        }
        // softmax backward: dS = P o (dP - rowsum(dP o P))
        for (int i = 0; i < seq; ++i) {
            const T* pi = probs.row(i);
            T* dpi = dp.row(i);
            T dot = T(0);
            for (int j = 0; j < valid; ++j) dot += dpi[j] * pi[j];
            for (int j = 0; j < valid; ++j) dpi[j] = pi[j] * (dpi[j] - dot);
        }
        // dQ_h = dS * K_h * scale ; dK_h = dS^T * Q_h * scale
        for (int i = 0; i < seq; ++i) {
            const T* dsi = dp.row(i);
            T* dqi = dq.row(i) + off;
            const T* qi = cache.q.row(i) + off;
            for (int j = 0; j < valid; ++j) {
                const T dsij = dsi[j] * scale;
                if (dsij == T(0)) continue;
                const T* kj = cache.k.row(j) + off;
                T* dkj = dk.row(j) + off;
                for (int c = 0; c < dh; ++c) {
                    dqi[c] += dsij * kj[c];
                    dkj[c] += dsij * qi[c];
                }
            }
        }
    }

    Matrix<T> dx = linear_backward(cache.x, p.wq, dq);
    add_inplace(dx, linear_backward(cache.x, p.wk, dk));
    add_inplace(dx, linear_backward(cache.x, p.wv, dv));
    return dx;
}

template <typename T>
struct EncoderLayerParams {
    AttentionParams<T> attn;
    LayerNormParams<T> ln1;
    LinearParams<T> ff1;
    LinearParams<T> ff2;
    LayerNormParams<T> ln2;

    EncoderLayerParams() = default;
    EncoderLayerParams(int d, int ff) : attn(d), ln1(d), ff1(d, ff), ff2(ff, d), ln2(d) {}

    void init(Rng& rng) {
        attn.init(rng);
        ff1.init(rng);
        ff2.init(rng);
    }
};

template <typename T>
struct EncoderLayerCache {
    AttentionCache<T> attn;
    Matrix<T> drop1;  // scale factors, empty when dropout off
    LayerNormCache<T> ln1;
    Matrix<T> a;       // ln1 output
    Matrix<T> ff_pre;  // ff1 output, pre-GELU
    Matrix<T> ff_act;
    Matrix<T> drop2;
    LayerNormCache<T> ln2;
};

template <typename T>
void apply_dropout(Matrix<T>& x, const DropoutPlan& plan, std::uint64_t site, Matrix<T>* mask_out = nullptr) {
    if (!plan.enabled) return;
    Matrix<T> mask(x.rows, x.cols);
    const T keep_scale = static_cast<T>(1.0 / (1.0 - plan.p));
    const std::uint64_t site_key = mix64(plan.key, site);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const bool keep = u64_to_unit(mix64(site_key, i)) >= plan.p;
        mask.data[i] = keep ? keep_scale : T(0);
        x.data[i] *= mask.data[i];
    }
    if (mask_out) *mask_out = std::move(mask);
}

// Post-norm encoder layer: x -> LN(x + drop(attn(x))) -> LN(a + drop(ff(a))).
template <typename T>
Matrix<T> encoder_layer_forward(const Matrix<T>& x, EncoderLayerParams<T>& p, const AttentionConfig& cfg,
                                int valid_len, const DropoutPlan& drop, std::uint64_t layer_idx,
                                EncoderLayerCache<T>* cache = nullptr) {
    Matrix<T> attn_out = attention_forward(x, p.attn, cfg, valid_len, cache ? &cache->attn : nullptr);
    apply_dropout(attn_out, drop, layer_idx * 2, cache ? &cache->drop1 : nullptr);
    add_inplace(attn_out, x);
    Matrix<T> a = layernorm_forward(attn_out, p.ln1, cache ? &cache->ln1 : nullptr);

    Matrix<T> ff_pre = linear_forward(a, p.ff1);
    Matrix<T> ff_act(ff_pre.rows, ff_pre.cols);
    for (std::size_t i = 0; i < ff_pre.data.size(); ++i)
        ff_act.data[i] = static_cast<T>(gelu_scalar(static_cast<double>(ff_pre.data[i])));
    Matrix<T> ff_out = linear_forward(ff_act, p.ff2);
    apply_dropout(ff_out, drop, layer_idx * 2 + 1, cache ? &cache->drop2 : nullptr);
    add_inplace(ff_out, a);
    Matrix<T> out = layernorm_forward(ff_out, p.ln2, cache ? &cache->ln2 : nullptr);

    if (cache) {
        cache->a = std::move(a);
        cache->ff_pre = std::move(ff_pre);
        cache->ff_act = std::move(ff_act);
    }
    return out;
}

template <typename T>
Matrix<T> encoder_layer_backward(const EncoderLayerCache<T>& cache, EncoderLayerParams<T>& p,
                                 const AttentionConfig& cfg, const Matrix<T>& dout) {
    Matrix<T> d_b_in = layernorm_backward(cache.ln2, p.ln2, dout);

    Matrix<T> d_ff_out = d_b_in;
    if (cache.drop2.rows > 0) {
        for (std::size_t i = 0; i < d_ff_out.data.size(); ++i) d_ff_out.data[i] *= cache.drop2.data[i];
    }
    Matrix<T> d_ff_act = linear_backward(cache.ff_act, p.ff2, d_ff_out);
    Matrix<T> d_ff_pre(d_ff_act.rows, d_ff_act.cols);
    for (std::size_t i = 0; i < d_ff_pre.data.size(); ++i)
        d_ff_pre.data[i] = d_ff_act.data[i] * static_cast<T>(gelu_grad_scalar(static_cast<double>(cache.ff_pre.data[i])));
    Matrix<T> da = linear_backward(cache.a, p.ff1, d_ff_pre);
    add_inplace(da, d_b_in);  // residual branch

    Matrix<T> d_a_in = layernorm_backward(cache.ln1, p.ln1, da);

    Matrix<T> d_attn_out = d_a_in;
    if (cache.drop1.rows > 0) {
        for (std::size_t i = 0; i < d_attn_out.data.size(); ++i) d_attn_out.data[i] *= cache.drop1.data[i];
    }
    Matrix<T> dx = attention_backward(cache.attn, p.attn, cfg, d_attn_out);
    add_inplace(dx, d_a_in);  // residual branch
    return dx;
}

// Transformer stack with a learned positional table added once at entry.
template <typename T>
struct TransformerParams {
    AttentionConfig cfg;
    ParamTensor<T> pos;  // max_seq x d
    std::vector<EncoderLayerParams<T>> layers;

    TransformerParams() = default;
    TransformerParams(const AttentionConfig& c, int max_seq) : cfg(c), pos(max_seq, c.model_dim) {
        cfg.validate();
        layers.reserve(static_cast<std::size_t>(cfg.num_layers));
        for (int i = 0; i < cfg.num_layers; ++i) layers.emplace_back(cfg.model_dim, cfg.ff_dim);
    }

    void init(Rng& rng, double pos_scale = 0.02) {
        pos.init_uniform(rng, pos_scale);
        for (auto& l : layers) l.init(rng);
    }

    int max_seq() const { return pos.value.rows; }

    void visit(const std::string& prefix, const ParamVisitor<T>& fn) {
        fn(prefix + ".pos", pos);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const std::string lp = prefix + ".layer" + std::to_string(i);
            auto& l = layers[i];
            fn(lp + ".wq.w", l.attn.wq.w);
            fn(lp + ".wq.b", l.attn.wq.b);
            fn(lp + ".wk.w", l.attn.wk.w);
            fn(lp + ".wk.b", l.attn.wk.b);
            fn(lp + ".wv.w", l.attn.wv.w);
            fn(lp + ".wv.b", l.attn.wv.b);
            fn(lp + ".wo.w", l.attn.wo.w);
            fn(lp + ".wo.b", l.attn.wo.b);
            fn(lp + ".ln1.g", l.ln1.gamma);
            fn(lp + ".ln1.b", l.ln1.beta);
            fn(lp + ".ff1.w", l.ff1.w);
            fn(lp + ".ff1.b", l.ff1.b);
            fn(lp + ".ff2.w", l.ff2.w);
            fn(lp + ".ff2.b", l.ff2.b);
            fn(lp + ".ln2.g", l.ln2.gamma);
            fn(lp + ".ln2.b", l.ln2.beta);
        }
    }
};

template <typename T>
struct TransformerCache {
    Matrix<T> entry;  // input + positional rows, post entry-dropout
    Matrix<T> entry_drop;
    std::vector<EncoderLayerCache<T>> layers;
    int valid_len = 0;
};

template <typename T>
Matrix<T> transformer_forward(const Matrix<T>& x, TransformerParams<T>& p, int valid_len,
                              const DropoutPlan& drop, TransformerCache<T>* cache = nullptr) {
    if (x.cols != p.cfg.model_dim) throw ShapeError("transformer: input dim mismatch");
    if (x.rows > p.max_seq()) throw ShapeError("transformer: sequence exceeds positional table");
    Matrix<T> h = x;
    for (int r = 0; r < h.rows; ++r) {
        T* hr = h.row(r);
        const T* pr = p.pos.value.row(r);
        for (int c = 0; c < h.cols; ++c) hr[c] += pr[c];
    }
    apply_dropout(h, drop, 1000, cache ? &cache->entry_drop : nullptr);
    if (cache) {
        cache->entry = h;
        cache->valid_len = valid_len;
        cache->layers.assign(p.layers.size(), EncoderLayerCache<T>{});
    }
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        h = encoder_layer_forward(h, p.layers[i], p.cfg, valid_len, drop, i,
                                  cache ? &cache->layers[i] : nullptr);
    }
    return h;
}

// Returns the gradient w.r.t. the stack input (pre positional add).
template <typename T>
Matrix<T> transformer_backward(TransformerCache<T>& cache, TransformerParams<T>& p, const Matrix<T>& dout) {
    Matrix<T> dh = dout;
    for (std::size_t i = p.layers.size(); i-- > 0;) {
        dh = encoder_layer_backward(cache.layers[i], p.layers[i], p.cfg, dh);
    }
    if (cache.entry_drop.rows > 0) {
        for (std::size_t i = 0; i < dh.data.size(); ++i) dh.data[i] *= cache.entry_drop.data[i];
    }
    for (int r = 0; r < dh.rows; ++r) {
        T* pg = p.pos.grad.row(r);
        const T* dr = dh.row(r);
        for (int c = 0; c < dh.cols; ++c) pg[c] += dr[c];
    }
    return dh;
}

}  // namespace increvec
