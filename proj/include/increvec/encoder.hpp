#pragma once

#include <string>
#include <vector>

#include "increvec/nn.hpp"
#include "increvec/vocab.hpp"

namespace increvec {

template <typename T>
struct EncoderCache {
    TokenSequence seq;
    TransformerCache<T> tx;
    Matrix<T> out;  // final layer output, all rows
};

// Small trainable transformer text encoder; the frozen-encoder stand-in.
// The first row ([CLS]) of the final layer is the sequence embedding.
template <typename T>
struct EncoderModel {
    Vocab vocab;
    int max_seq_len = 32;
    ParamTensor<T> tok_emb;  // |V| x d
    TransformerParams<T> tx;
    bool frozen = false;

    EncoderModel() = default;
    EncoderModel(const Vocab& v, const AttentionConfig& cfg, int max_len)
        : vocab(v), max_seq_len(max_len), tok_emb(v.size(), cfg.model_dim), tx(cfg, max_len) {}

    int dim() const { return tx.cfg.model_dim; }

    void init(Rng& rng) {
        tok_emb.init_uniform(rng, 0.05);
        tx.init(rng);
    }

    void visit(const ParamVisitor<T>& fn) {
        fn("enc.tok_emb", tok_emb);
        tx.visit("enc.tx", fn);
    }

    Matrix<T> embed(const TokenSequence& seq) const {
        Matrix<T> x(seq.length(), dim());
        for (int p = 0; p < seq.length(); ++p) {
            const int id = seq.ids[static_cast<std::size_t>(p)];
            if (id < 0 || id >= tok_emb.value.rows) throw std::out_of_range("encode: token id outside vocabulary");
            const T* src = tok_emb.value.row(id);
            T* dst = x.row(p);
            for (int c = 0; c < dim(); ++c) dst[c] = src[c];
        }
        return x;
    }

    // Returns the [CLS] embedding. Pass a cache to enable backward.
    std::vector<T> encode(const TokenSequence& seq, const DropoutPlan& drop = DropoutPlan::eval(),
                          EncoderCache<T>* cache = nullptr) {
        if (seq.length() < 1 || seq.length() > max_seq_len) throw ShapeError("encode: bad sequence length");
        if (seq.valid_len < 1 || seq.valid_len > seq.length()) throw ShapeError("encode: bad valid_len");
        Matrix<T> x = embed(seq);
        Matrix<T> h = transformer_forward(x, tx, seq.valid_len, drop, cache ? &cache->tx : nullptr);
        std::vector<T> cls(h.row(0), h.row(0) + dim());
        if (cache) {
            cache->seq = seq;
            cache->out = std::move(h);
        }
        return cls;
    }

    // Backward from the [CLS] gradient; accumulates parameter grads.
    void backward_cls(EncoderCache<T>& cache, const std::vector<T>& dcls) {
        Matrix<T> dh(cache.out.rows, cache.out.cols, T(0));
        for (int c = 0; c < dim(); ++c) dh(0, c) = dcls[static_cast<std::size_t>(c)];
        Matrix<T> dx = transformer_backward(cache.tx, tx, dh);
        for (int p = 0; p < cache.seq.length(); ++p) {
            const int id = cache.seq.ids[static_cast<std::size_t>(p)];
            T* grow = tok_emb.grad.row(id);
            const T* drow = dx.row(p);
            for (int c = 0; c < dim(); ++c) grow[c] += drow[c];
        }
    }

    // Checksum over parameter bytes; used to verify the frozen contract.
    std::uint64_t param_checksum() {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        visit([&](const std::string& name, ParamTensor<T>& p) {
            h = fnv1a(name.data(), name.size(), h);
            h = fnv1a(p.value.data.data(), p.value.data.size() * sizeof(T), h);
        });
        return h;
    }
};

}  // namespace increvec
