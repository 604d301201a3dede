#pragma once

#include <optional>
#include <vector>

#include "increvec/matrix.hpp"

namespace increvec {

// Which B slot read_window returns as past_activity. The published
// pseudocode reads t-n0-1 while writing t-1; ReadPrev is an ablation that
// reads the write slot instead.
enum class ReadIndexMode { Lagged, Prev };

template <typename T>
struct WindowView {
    Matrix<T> history;               // n0 x d, rows A[i][t-n0 .. t-1] ascending in time
    std::vector<T> past_activity;    // B[i][t-n0-1] (or B[i][t-1] in Prev mode)
    std::vector<T> prev_accumulated; // B[i][t-1], the momentum blend target before update
};

// Owns the history tensor A and the accumulated tensor B, both n x T x d,
// plus per-user write cursors. Reads and writes follow a strict
// chronological protocol: read_window(i, t) then momentum_update(i, t),
// with t = cursor[i] + 1.
template <typename T>
class HistoryStore {
public:
    HistoryStore(int n, int t_span, int d, int t0, int n0, double alpha,
                 ReadIndexMode read_mode = ReadIndexMode::Lagged, bool ring_buffer = false)
        : n_(n), t_span_(t_span), d_(d), t0_(t0), n0_(n0), alpha_(alpha),
          read_mode_(read_mode), ring_(ring_buffer) {
        if (alpha < 0.0 || alpha > 1.0) throw ConfigError("HistoryStore: alpha outside [0,1]");
        if (t0 < n0 + 1) throw ConfigError("HistoryStore: t0 < n0+1");
        if (n < 1 || t_span < 1 || d < 1 || n0 < 1) throw ConfigError("HistoryStore: bad dimensions");
        a_ = Tensor3<T>(n, t_span, d);
        if (ring_) {
            ring_b_.assign(static_cast<std::size_t>(n) * (n0_ + 1) * d_, T(0));
            prefix_sum_.assign(static_cast<std::size_t>(n) * d_, T(0));
            prefix_count_.assign(static_cast<std::size_t>(n), 0);
        } else {
            b_ = Tensor3<T>(n, t_span, d);
        }
        cursor_.assign(static_cast<std::size_t>(n), -1);
        len_.assign(static_cast<std::size_t>(n), 0);
        pending_read_.assign(static_cast<std::size_t>(n), -1);
    }

    int users() const { return n_; }
    int time_span() const { return t_span_; }
    int dim() const { return d_; }
    int t0() const { return t0_; }
    int n0() const { return n0_; }
    double alpha() const { return alpha_; }
    bool ring_buffer() const { return ring_; }
    int cursor(int i) const { return cursor_.at(static_cast<std::size_t>(i)); }
    int user_len(int i) const { return len_.at(static_cast<std::size_t>(i)); }

    // Fills A[i][j] for every provided embedding and B[i][j] with the
    // inclusive prefix mean of A[i][0..=j]; cursor starts at t0-1.
    void initialize(const std::vector<std::vector<std::vector<T>>>& encoded_histories) {
        if (static_cast<int>(encoded_histories.size()) != n_)
            throw ShapeError("initialize: user count mismatch");
        for (int i = 0; i < n_; ++i) {
            const auto& rows = encoded_histories[static_cast<std::size_t>(i)];
            if (static_cast<int>(rows.size()) < t0_)
                throw DataError("initialize: user " + std::to_string(i) + " has fewer than t0 histories");
            if (static_cast<int>(rows.size()) > t_span_)
                throw ShapeError("initialize: user history exceeds time span");
            len_[static_cast<std::size_t>(i)] = static_cast<int>(rows.size());
            std::vector<T> run(static_cast<std::size_t>(d_), T(0));
            for (int j = 0; j < static_cast<int>(rows.size()); ++j) {
                const auto& v = rows[static_cast<std::size_t>(j)];
                if (static_cast<int>(v.size()) != d_) throw ShapeError("initialize: embedding dim mismatch");
                T* arow = a_.at(i, j);
                for (int c = 0; c < d_; ++c) {
                    arow[c] = v[static_cast<std::size_t>(c)];
                    run[static_cast<std::size_t>(c)] += v[static_cast<std::size_t>(c)];
                }
                const T inv = T(1) / static_cast<T>(j + 1);
                if (ring_) {
                    // keep only the live window [t0-n0-1, t0-1]
                    if (j >= t0_ - n0_ - 1 && j <= t0_ - 1) {
                        T* slot = ring_slot(i, j);
                        for (int c = 0; c < d_; ++c) slot[c] = run[static_cast<std::size_t>(c)] * inv;
                    }
                    if (j == t0_ - 1) {
                        T* ps = prefix_sum_.data() + static_cast<std::size_t>(i) * d_;
                        for (int c = 0; c < d_; ++c) ps[c] = run[static_cast<std::size_t>(c)];
                        prefix_count_[static_cast<std::size_t>(i)] = j + 1;
                    }
                } else {
                    T* brow = b_.at(i, j);
                    for (int c = 0; c < d_; ++c) brow[c] = run[static_cast<std::size_t>(c)] * inv;
                }
            }
            cursor_[static_cast<std::size_t>(i)] = t0_ - 1;
            pending_read_[static_cast<std::size_t>(i)] = -1;
        }
        initialized_ = true;
    }

    WindowView<T> read_window(int i, int t) {
        check_user(i);
        if (!initialized_) throw ProtocolError("read_window before initialize");
        const int cur = cursor_[static_cast<std::size_t>(i)];
        if (t != cur + 1)
            throw ChronologyError("read_window: expected t=" + std::to_string(cur + 1) + " for user " +
                                  std::to_string(i) + ", got " + std::to_string(t));
        if (t < t0_ || t >= len_[static_cast<std::size_t>(i)])
            throw ChronologyError("read_window: t outside stream range");
        if (t - n0_ - 1 < 0) throw ChronologyError("read_window: window underflow");

        WindowView<T> view;
        view.history = Matrix<T>(n0_, d_);
        for (int k = 0; k < n0_; ++k) {
            const T* arow = a_.at(i, t - n0_ + k);
            T* dst = view.history.row(k);
            for (int c = 0; c < d_; ++c) dst[c] = arow[c];
        }
        const int read_idx = (read_mode_ == ReadIndexMode::Lagged) ? t - n0_ - 1 : t - 1;
        view.past_activity = read_b(i, read_idx);
        view.prev_accumulated = read_b(i, t - 1);
        pending_read_[static_cast<std::size_t>(i)] = t;
        return view;
    }

    // B[i][t-1] <- alpha * u_profile + (1 - alpha) * B[i][t-1]
    std::vector<T> momentum_update(int i, int t, const std::vector<T>& u_profile) {
        check_user(i);
        if (pending_read_[static_cast<std::size_t>(i)] != t)
            throw ProtocolError("momentum_update without matching read_window");
        if (static_cast<int>(u_profile.size()) != d_) throw ShapeError("momentum_update: dim mismatch");

        const T alpha = static_cast<T>(alpha_);
        const T keep = T(1) - alpha;
        std::vector<T> out(static_cast<std::size_t>(d_));
        T* slot = ring_ ? ring_slot(i, t - 1) : b_.at(i, t - 1);
        for (int c = 0; c < d_; ++c) {
            slot[c] = alpha * u_profile[static_cast<std::size_t>(c)] + keep * slot[c];
            out[static_cast<std::size_t>(c)] = slot[c];
        }
        cursor_[static_cast<std::size_t>(i)] = t;
        pending_read_[static_cast<std::size_t>(i)] = -1;
        if (ring_) advance_ring(i, t);
        return out;
    }

    const Tensor3<T>& a() const { return a_; }
    const Tensor3<T>& b() const {
        if (ring_) throw ProtocolError("full B tensor unavailable in ring-buffer mode");
        return b_;
    }
    Tensor3<T>& mutable_a() { return a_; }
    Tensor3<T>& mutable_b() {
        if (ring_) throw ProtocolError("full B tensor unavailable in ring-buffer mode");
        return b_;
    }

    std::vector<T> b_value(int i, int j) const { return read_b(i, j); }

    std::vector<T> a_value(int i, int j) const {
        const T* row = a_.at(i, j);
        return std::vector<T>(row, row + d_);
    }

    std::vector<int>& cursors() { return cursor_; }
    const std::vector<int>& cursors() const { return cursor_; }
    std::vector<int>& lengths() { return len_; }
    const std::vector<int>& lengths() const { return len_; }
    void mark_initialized() { initialized_ = true; }

    // State digest over B, cursors and pending reads; A is immutable
    // during a stream so it is deliberately excluded.
    std::uint64_t checksum() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        if (ring_) {
            h = fnv1a(ring_b_.data(), ring_b_.size() * sizeof(T), h);
            h = fnv1a(prefix_sum_.data(), prefix_sum_.size() * sizeof(T), h);
        } else {
            h = fnv1a(b_.data.data(), b_.data.size() * sizeof(T), h);
        }
        h = fnv1a(cursor_.data(), cursor_.size() * sizeof(int), h);
        h = fnv1a(pending_read_.data(), pending_read_.size() * sizeof(int), h);
        return h;
    }

    struct Snapshot {
        std::vector<T> b;
        std::vector<T> ring_b;
        std::vector<T> prefix_sum;
        std::vector<int> prefix_count;
        std::vector<int> cursor;
        std::vector<int> pending;
    };

    Snapshot snapshot() const {
        Snapshot s;
        if (ring_) {
            s.ring_b = ring_b_;
            s.prefix_sum = prefix_sum_;
            s.prefix_count = prefix_count_;
        } else {
            s.b = b_.data;
        }
        s.cursor = cursor_;
        s.pending = pending_read_;
        return s;
    }

    void restore(const Snapshot& s) {
        if (ring_) {
            ring_b_ = s.ring_b;
            prefix_sum_ = s.prefix_sum;
            prefix_count_ = s.prefix_count;
        } else {
            b_.data = s.b;
        }
        cursor_ = s.cursor;
        pending_read_ = s.pending;
    }

private:
    void check_user(int i) const {
        if (i < 0 || i >= n_) throw std::out_of_range("HistoryStore: user index");
    }

    std::vector<T> read_b(int i, int j) const {
        if (j < 0 || j >= len_[static_cast<std::size_t>(i)]) throw ChronologyError("B read out of range");
        const T* row;
        if (ring_) {
            const int oldest = cursor_[static_cast<std::size_t>(i)] - n0_;
            if (j < oldest || j > cursor_[static_cast<std::size_t>(i)])
                throw ProtocolError("ring-buffer mode: B slot evicted");
            row = const_cast<HistoryStore*>(this)->ring_slot(i, j);
        } else {
            row = b_.at(i, j);
        }
        return std::vector<T>(row, row + d_);
    }

    T* ring_slot(int i, int j) {
        const int slot = j % (n0_ + 1);
        return ring_b_.data() + (static_cast<std::size_t>(i) * (n0_ + 1) + slot) * d_;
    }

    // After writing index t-1 the live window shifts to [t-n0, t]; slot t
    // is seeded with the inclusive prefix mean of A[i][0..=t], continuing
    // the same running sum used at initialization so values are
    // bit-identical to full mode.
    void advance_ring(int i, int t) {
        if (t >= len_[static_cast<std::size_t>(i)]) return;
        T* ps = prefix_sum_.data() + static_cast<std::size_t>(i) * d_;
        int& count = prefix_count_[static_cast<std::size_t>(i)];
        while (count <= t) {
            const T* arow = a_.at(i, count);
            for (int c = 0; c < d_; ++c) ps[c] += arow[c];
            ++count;
        }
        const T inv = T(1) / static_cast<T>(count);
        T* slot = ring_slot(i, t);
        for (int c = 0; c < d_; ++c) slot[c] = ps[c] * inv;
    }

    int n_, t_span_, d_, t0_, n0_;
    double alpha_;
    ReadIndexMode read_mode_;
    bool ring_;
    bool initialized_ = false;
    Tensor3<T> a_;
    Tensor3<T> b_;
    std::vector<T> ring_b_;       // ring mode: n x (n0+1) x d live B slots
    std::vector<T> prefix_sum_;   // ring mode: running sum of A rows per user
    std::vector<int> prefix_count_;
    std::vector<int> cursor_;
    std::vector<int> len_;
    std::vector<int> pending_read_;
};

}  // namespace increvec
