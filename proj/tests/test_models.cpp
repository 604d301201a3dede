#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "increvec/gradcheck.hpp"
#include "increvec/loss.hpp"
#include "increvec/models.hpp"
#include "test_oracles.hpp"

using namespace increvec;

namespace {

template <typename T>
Matrix<T> random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
    Matrix<T> m(rows, cols);
    for (auto& v : m.data) v = static_cast<T>(rng.uniform(-scale, scale));
    return m;
}

UpperTransformer<double> zero_pos_ut(int layers, int d, int max_seq, std::uint64_t seed) {
    AttentionConfig cfg{layers, 2, d, 2 * d, 0.0};
    UpperTransformer<double> ut(cfg, max_seq);
    Rng rng(seed);
    ut.init(rng);
    ut.tx.pos.value.zero();
    return ut;
}

// brute-force frequency counter with most-recent tie-break
int majority_oracle(const std::vector<int>& labels) {
    int best = -1, best_count = 0, best_pos = 1 << 30;
    std::map<int, int> counts;
    for (int y : labels) ++counts[y];
    for (const auto& [y, c] : counts) {
        int pos = 0;
        while (labels[static_cast<std::size_t>(pos)] != y) ++pos;
        if (c > best_count || (c == best_count && pos < best_pos)) {
            best = y;
            best_count = c;
            best_pos = pos;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("aggregate_mean: identity on a single row") {
    Matrix<double> m(1, 4);
    for (int c = 0; c < 4; ++c) m(0, c) = 0.5 * c;
    auto out = aggregate_mean(m);
    for (int c = 0; c < 4; ++c) CHECK(out[static_cast<std::size_t>(c)] == m(0, c));
}

TEST_CASE("aggregate_mean: two-point mean and empty error") {
    Matrix<double> m(2, 2);
    m(0, 0) = 1;
    m(0, 1) = 0;
    m(1, 0) = 0;
    m(1, 1) = 1;
    auto out = aggregate_mean(m);
    CHECK(out[0] == 0.5);
    CHECK(out[1] == 0.5);
    Matrix<double> empty(0, 2);
    CHECK_THROWS_AS(aggregate_mean(empty), DataError);
}

TEST_CASE("aggregate_mean: h=7 random rows match summation oracle") {
    Rng rng(17);
    auto m = random_matrix<double>(7, 5, rng);
    auto got = aggregate_mean(m);
    for (int c = 0; c < 5; ++c) {
        double acc = 0;
        for (int r = 0; r < 7; ++r) acc += m(r, c);
        CHECK(std::abs(got[static_cast<std::size_t>(c)] - acc / 7.0) < 1e-12);
    }
}

TEST_CASE("aggregate_attn: zero-layer zero-position stack reduces to mean") {
    Rng rng(3);
    auto m = random_matrix<double>(5, 6, rng);
    auto ut = zero_pos_ut(0, 6, 8, 1);
    auto attn = aggregate_attn(m, ut);
    auto mean = aggregate_mean(m);
    for (int c = 0; c < 6; ++c) CHECK(std::abs(attn[static_cast<std::size_t>(c)] - mean[static_cast<std::size_t>(c)]) < 1e-12);
}

TEST_CASE("aggregate_attn: single row returns that transformed row") {
    Rng rng(4);
    auto m = random_matrix<double>(1, 6, rng);
    AttentionConfig cfg{1, 2, 6, 12, 0.0};
    UpperTransformer<double> ut(cfg, 4);
    Rng r2(5);
    ut.init(r2);
    auto pooled = aggregate_attn(m, ut);
    auto full = ut.forward(m);
    for (int c = 0; c < 6; ++c) CHECK(pooled[static_cast<std::size_t>(c)] == full(0, c));
}

TEST_CASE("aggregate_attn: h=3 one-layer matches unrolled oracle") {
    Rng rng(6);
    auto m = random_matrix<double>(3, 4, rng);
    AttentionConfig cfg{1, 2, 4, 8, 0.0};
    UpperTransformer<double> ut(cfg, 4);
    Rng r2(7);
    ut.init(r2);
    auto got = aggregate_attn(m, ut);
    auto oracle_out = oracles::transformer(m, ut.tx);
    for (int c = 0; c < 4; ++c) {
        double acc = 0;
        for (int r = 0; r < 3; ++r) acc += oracle_out(r, c);
        CHECK(std::abs(got[static_cast<std::size_t>(c)] - acc / 3.0) < 1e-10);
    }
}

TEST_CASE("aggregate_attn: history longer than positional table raises") {
    Rng rng(8);
    auto m = random_matrix<double>(6, 4, rng);
    auto ut = zero_pos_ut(1, 4, 4, 2);
    CHECK_THROWS_AS(aggregate_attn(m, ut), ShapeError);
}

TEST_CASE("incremental_forward: degenerate composition with alpha=1, zero-layer ut") {
    const int d = 4, n0 = 2;
    Rng rng(9);
    auto ut = zero_pos_ut(0, d, n0 + 1, 3);
    ClassifierHead<double> head(2 * d, 3);
    Rng r2(10);
    head.init(r2);

    WindowView<double> window;
    window.history = random_matrix<double>(n0, d, rng);
    window.past_activity = {0.1, 0.2, 0.3, 0.4};
    window.prev_accumulated = {9.0, 9.0, 9.0, 9.0};  // replaced entirely at alpha=1
    std::vector<double> q = {1.0, -1.0, 0.5, 0.0};

    auto out = incremental_forward(q, window, 1.0, ut, head);

    std::vector<double> fused_mean(d, 0.0);
    for (int c = 0; c < d; ++c) {
        for (int r = 0; r < n0; ++r) fused_mean[static_cast<std::size_t>(c)] += window.history(r, c);
        fused_mean[static_cast<std::size_t>(c)] += window.past_activity[static_cast<std::size_t>(c)];
        fused_mean[static_cast<std::size_t>(c)] /= (n0 + 1);
    }
    for (int c = 0; c < d; ++c) CHECK(std::abs(out.b_new[static_cast<std::size_t>(c)] - fused_mean[static_cast<std::size_t>(c)]) < 1e-12);

    Matrix<double> feat(1, 2 * d);
    for (int c = 0; c < d; ++c) {
        feat(0, c) = q[static_cast<std::size_t>(c)];
        feat(0, d + c) = fused_mean[static_cast<std::size_t>(c)];
    }
    auto want = head.forward(feat);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(out.logits(0, c) - want(0, c)) < 1e-12);
}

TEST_CASE("incremental_forward: constant fused sequence through zero-layer ut") {
    const int d = 3;
    auto ut = zero_pos_ut(0, d, 2, 4);
    ClassifierHead<double> head(2 * d, 2);
    Rng rng(11);
    head.init(rng);
    std::vector<double> v = {0.7, -0.2, 1.1};
    WindowView<double> window;
    window.history = Matrix<double>(1, d);
    for (int c = 0; c < d; ++c) window.history(0, c) = v[static_cast<std::size_t>(c)];
    window.past_activity = v;
    window.prev_accumulated = v;
    auto out = incremental_forward(v, window, 0.5, ut, head);
    for (int c = 0; c < d; ++c) CHECK(std::abs(out.u_profile[static_cast<std::size_t>(c)] - v[static_cast<std::size_t>(c)]) < 1e-12);
}

TEST_CASE("incremental_forward: full pipeline matches step-by-step oracle") {
    const int d = 4, n0 = 2, classes = 3;
    AttentionConfig cfg{1, 2, d, 8, 0.0};
    UpperTransformer<double> ut(cfg, n0 + 1);
    ClassifierHead<double> head(2 * d, classes);
    Rng rng(12);
    ut.init(rng);
    head.init(rng);
    const double alpha = 0.3;

    WindowView<double> window;
    window.history = random_matrix<double>(n0, d, rng);
    window.past_activity.resize(d);
    window.prev_accumulated.resize(d);
    for (int c = 0; c < d; ++c) {
        window.past_activity[static_cast<std::size_t>(c)] = rng.uniform(-1, 1);
        window.prev_accumulated[static_cast<std::size_t>(c)] = rng.uniform(-1, 1);
    }
    std::vector<double> q(d);
    for (auto& x : q) x = rng.uniform(-1, 1);

    auto out = incremental_forward(q, window, alpha, ut, head);

    // oracle: fuse, unrolled transformer, mean, blend, linear head
    Matrix<double> fused(n0 + 1, d);
    for (int r = 0; r < n0; ++r)
        for (int c = 0; c < d; ++c) fused(r, c) = window.history(r, c);
    for (int c = 0; c < d; ++c) fused(n0, c) = window.past_activity[static_cast<std::size_t>(c)];
    auto enc = oracles::transformer(fused, ut.tx);
    std::vector<double> u(d, 0.0);
    for (int c = 0; c < d; ++c) {
        for (int r = 0; r < n0 + 1; ++r) u[static_cast<std::size_t>(c)] += enc(r, c);
        u[static_cast<std::size_t>(c)] /= (n0 + 1);
    }
    for (int c = 0; c < classes; ++c) {
        double acc = head.lin.b.value(0, c);
        for (int j = 0; j < d; ++j) {
            acc += q[static_cast<std::size_t>(j)] * head.lin.w.value(c, j);
            const double b_new = alpha * u[static_cast<std::size_t>(j)] +
                                 (1 - alpha) * window.prev_accumulated[static_cast<std::size_t>(j)];
            acc += b_new * head.lin.w.value(c, d + j);
        }
        CHECK(std::abs(out.logits(0, c) - acc) < 1e-9);
    }
}

TEST_CASE("incremental_forward: eval reruns are bit-identical") {
    const int d = 4, n0 = 3;
    AttentionConfig cfg{2, 2, d, 8, 0.1};
    UpperTransformer<double> ut(cfg, n0 + 1);
    ClassifierHead<double> head(2 * d, 5);
    Rng rng(13);
    ut.init(rng);
    head.init(rng);
    WindowView<double> window;
    window.history = random_matrix<double>(n0, d, rng);
    window.past_activity.assign(static_cast<std::size_t>(d), 0.25);
    window.prev_accumulated.assign(static_cast<std::size_t>(d), -0.5);
    std::vector<double> q(static_cast<std::size_t>(d), 1.0);
    auto a = incremental_forward(q, window, 0.1, ut, head);
    auto b = incremental_forward(q, window, 0.1, ut, head);
    for (std::size_t i = 0; i < a.logits.data.size(); ++i) CHECK(a.logits.data[i] == b.logits.data[i]);
}

TEST_CASE("incremental step gradients pass grad_check") {
    const int d = 6, n0 = 2, classes = 4;
    AttentionConfig cfg{1, 2, d, 12, 0.0};
    UpperTransformer<double> ut(cfg, n0 + 1);
    ClassifierHead<double> head(2 * d, classes);
    Rng rng(14);
    ut.init(rng);
    head.init(rng);
    const double alpha = 0.1;

    WindowView<double> window;
    window.history = random_matrix<double>(n0, d, rng);
    window.past_activity.resize(d);
    window.prev_accumulated.resize(d);
    for (int c = 0; c < d; ++c) {
        window.past_activity[static_cast<std::size_t>(c)] = rng.uniform(-1, 1);
        window.prev_accumulated[static_cast<std::size_t>(c)] = rng.uniform(-1, 1);
    }
    std::vector<double> q(d);
    for (auto& x : q) x = rng.uniform(-1, 1);
    std::vector<int> label = {2};
    auto weights = ClassWeights::uniform(classes);

    auto loss_fn = [&]() {
        auto out = incremental_forward(q, window, alpha, ut, head);
        return weighted_cross_entropy(out.logits, label, weights).loss;
    };

    auto out = incremental_forward(q, window, alpha, ut, head);
    auto res = weighted_cross_entropy(out.logits, label, weights);
    incremental_backward(out, alpha, ut, head, res.dlogits);

    std::vector<std::pair<std::string, ParamTensor<double>*>> params;
    ut.visit([&](const std::string& n, ParamTensor<double>& p) { params.emplace_back(n, &p); });
    head.visit([&](const std::string& n, ParamTensor<double>& p) { params.emplace_back(n, &p); });
    auto report = grad_check<double>(loss_fn, params, 1e-5);
    INFO("worst ", report.worst_param, " analytic ", report.analytic, " numeric ", report.numeric);
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("majority_count: examples") {
    CHECK(majority_count({3, 3, 1}) == 3);
    CHECK(majority_count({1}) == 1);
    CHECK(majority_count({2, 5, 5, 2}) == 2);  // tie, class 2 most recent
    CHECK_THROWS_AS(majority_count({}), DataError);
}

TEST_CASE("majority_count: agrees with brute-force counter on random lists") {
    Rng rng(2025);
    for (int iter = 0; iter < 10000; ++iter) {
        const int len = 1 + rng.uniform_int(40);
        std::vector<int> labels(static_cast<std::size_t>(len));
        for (auto& y : labels) y = rng.uniform_int(8);
        CHECK(majority_count(labels) == majority_oracle(labels));
    }
}

TEST_CASE("batch_forward: variant arity and composition") {
    const int d = 4, classes = 3;
    Rng rng(15);
    std::vector<double> q(d), up(d);
    for (auto& x : q) x = rng.uniform(-1, 1);
    for (auto& x : up) x = rng.uniform(-1, 1);
    auto hist = random_matrix<double>(5, d, rng);

    ClassifierHead<double> head_q(d, classes);
    head_q.init(rng);
    auto logits_q = batch_forward<double>(FeatureVariant::Q, true, q, nullptr, nullptr, nullptr, head_q);
    CHECK(logits_q.cols == classes);

    ClassifierHead<double> head3(3 * d, classes);
    head3.init(rng);
    auto ut = zero_pos_ut(0, d, 8, 16);
    auto logits_mean = batch_forward<double>(FeatureVariant::Q_UP_UH_MEAN, true, q, &up, &hist, nullptr, head3);
    // manual composition
    auto uh = aggregate_mean(hist);
    Matrix<double> feat(1, 3 * d);
    for (int c = 0; c < d; ++c) {
        feat(0, c) = q[static_cast<std::size_t>(c)];
        feat(0, d + c) = up[static_cast<std::size_t>(c)];
        feat(0, 2 * d + c) = uh[static_cast<std::size_t>(c)];
    }
    auto want = head3.forward(feat);
    for (int c = 0; c < classes; ++c) CHECK(logits_mean(0, c) == doctest::Approx(want(0, c)).epsilon(1e-12));

    // order is contractual: swapping q and up changes the logits
    Matrix<double> swapped(1, 3 * d);
    for (int c = 0; c < d; ++c) {
        swapped(0, c) = up[static_cast<std::size_t>(c)];
        swapped(0, d + c) = q[static_cast<std::size_t>(c)];
        swapped(0, 2 * d + c) = uh[static_cast<std::size_t>(c)];
    }
    auto perm = head3.forward(swapped);
    bool any_diff = false;
    for (int c = 0; c < classes; ++c) any_diff |= std::abs(perm(0, c) - want(0, c)) > 1e-9;
    CHECK(any_diff);
}

TEST_CASE("batch_forward: missing components raise configuration errors") {
    const int d = 4;
    Rng rng(17);
    std::vector<double> q(static_cast<std::size_t>(d), 0.5);
    ClassifierHead<double> head(2 * d, 3);
    head.init(rng);
    CHECK_THROWS_AS(batch_forward<double>(FeatureVariant::Q_UP, true, q, nullptr, nullptr, nullptr, head),
                    ConfigError);
    std::vector<double> up(static_cast<std::size_t>(d), 0.1);
    ClassifierHead<double> head3(3 * d, 3);
    head3.init(rng);
    CHECK_THROWS_AS(
        batch_forward<double>(FeatureVariant::Q_UP_UH_ATTN, true, q, &up, nullptr, nullptr, head3),
        ConfigError);
}

TEST_CASE("variant component counts") {
    CHECK(variant_components(FeatureVariant::Q, true) == 1);
    CHECK(variant_components(FeatureVariant::Q_UP, true) == 2);
    CHECK(variant_components(FeatureVariant::Q_UP_UH_MEAN, true) == 3);
    CHECK(variant_components(FeatureVariant::Q_UP_UH_ATTN, false) == 2);
    CHECK(variant_components(FeatureVariant::INCREMENTAL, false) == 2);
    CHECK(variant_from_name(variant_name(FeatureVariant::Q_UP_UH_ATTN)) == FeatureVariant::Q_UP_UH_ATTN);
}
