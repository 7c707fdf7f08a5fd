#pragma once

// Reverse-mode differentiation over 1-D values, restricted to the handful of fused
// operations the walker model needs. A Tape in non-recording mode is a plain
// forward evaluator and may be used concurrently on separate tapes sharing the same
// (read-only) parameters.

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mwalk/errors.hpp"
#include "mwalk/tensor.hpp"

namespace mwalk {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

template <class T>
class Tape {
public:
    explicit Tape(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }
    void set_recording(bool r) { recording_ = r; }

    /// Drops all nodes and recorded operations; node storage is kept for reuse.
    void clear() {
        used_ = 0;
        ops_.clear();
    }

    Var constant(std::span<const T> values) {
        Var v = make(values.size(), false);
        std::copy(values.begin(), values.end(), nodes_[v.id].value.begin());
        return v;
    }
    Var constant(const std::vector<T>& values) { return constant(std::span<const T>(values)); }
    Var zeros(std::size_t n) { return make(n, false); }

    /// New node of width n. Values are zero-initialised; the gradient buffer is
    /// allocated only when recording and the node depends on parameters.
    Var make(std::size_t n, bool needs_grad) {
        if (used_ == nodes_.size()) nodes_.emplace_back();
        Node& node = nodes_[used_];
        node.value.assign(n, T(0));
        node.needs_grad = recording_ && needs_grad;
        if (node.needs_grad) node.grad.assign(n, T(0));
        return Var{static_cast<int>(used_++)};
    }

    std::vector<T>& value(Var v) { return nodes_[v.id].value; }
    const std::vector<T>& value(Var v) const { return nodes_[v.id].value; }
    std::vector<T>& grad(Var v) { return nodes_[v.id].grad; }
    bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
    std::size_t width(Var v) const { return nodes_[v.id].value.size(); }
    std::size_t node_count() const { return used_; }

    void record(std::function<void()> op) {
        if (recording_) ops_.push_back(std::move(op));
    }

    /// Propagates the gradients seeded on output nodes back into parameters.
    void backward() {
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    struct Node {
        std::vector<T> value;
        std::vector<T> grad;
        bool needs_grad = false;
    };
    std::vector<Node> nodes_;
    std::size_t used_ = 0;
    std::vector<std::function<void()>> ops_;
    bool recording_;
};

namespace ops {

/// y = b + x W with W stored input-major ([in, out]). Zero input entries are skipped,
/// which makes one-hot inputs cheap.
template <class T>
Var linear(Tape<T>& tape, Param<T>& W, Param<T>& b, Var x) {
    const std::size_t in = W.value.shape[0];
    const std::size_t out = W.value.shape[1];
    if (tape.width(x) != in)
        throw DimensionError(W.name + ": expected input width " + std::to_string(in) + ", got " +
                             std::to_string(tape.width(x)));
    Var y = tape.make(out, true);
    auto& yv = tape.value(y);
    const auto& xv = tape.value(x);
    std::copy(b.value.data.begin(), b.value.data.end(), yv.begin());
    const T* w = W.data();
    for (std::size_t i = 0; i < in; ++i) {
        const T xi = xv[i];
        if (xi == T(0)) continue;
        const T* row = w + i * out;
        for (std::size_t o = 0; o < out; ++o) yv[o] += xi * row[o];
    }
    if (tape.recording()) {
        tape.record([&tape, &W, &b, x, y, in, out] {
            const auto& dy = tape.grad(y);
            const auto& xv = tape.value(x);
            for (std::size_t o = 0; o < out; ++o) b.grad[o] += dy[o];
            const T* w = W.data();
            T* gw = W.grad.data();
            const bool dx_needed = tape.needs_grad(x);
            for (std::size_t i = 0; i < in; ++i) {
                const T xi = xv[i];
                if (xi != T(0)) {
                    T* grow = gw + i * out;
                    for (std::size_t o = 0; o < out; ++o) grow[o] += xi * dy[o];
                }
                if (dx_needed) {
                    const T* row = w + i * out;
                    T acc = 0;
                    for (std::size_t o = 0; o < out; ++o) acc += row[o] * dy[o];
                    tape.grad(x)[i] += acc;
                }
            }
        });
    }
    return y;
}

template <class T>
Var relu(Tape<T>& tape, Var x) {
    const std::size_t n = tape.width(x);
    Var y = tape.make(n, tape.needs_grad(x));
    auto& yv = tape.value(y);
    const auto& xv = tape.value(x);
    for (std::size_t i = 0; i < n; ++i) yv[i] = xv[i] > T(0) ? xv[i] : T(0);
    if (tape.needs_grad(y))
        tape.record([&tape, x, y, n] {
            const auto& xv = tape.value(x);
            const auto& dy = tape.grad(y);
            auto& dx = tape.grad(x);
            for (std::size_t i = 0; i < n; ++i)
                if (xv[i] > T(0)) dx[i] += dy[i];
        });
    return y;
}

template <class T>
Var tanh(Tape<T>& tape, Var x) {
    const std::size_t n = tape.width(x);
    Var y = tape.make(n, tape.needs_grad(x));
    auto& yv = tape.value(y);
    const auto& xv = tape.value(x);
    for (std::size_t i = 0; i < n; ++i) yv[i] = std::tanh(xv[i]);
    if (tape.needs_grad(y))
        tape.record([&tape, x, y, n] {
            const auto& yv = tape.value(y);
            const auto& dy = tape.grad(y);
            auto& dx = tape.grad(x);
            for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * (T(1) - yv[i] * yv[i]);
        });
    return y;
}

template <class T>
Var concat(Tape<T>& tape, std::initializer_list<Var> parts) {
    std::size_t n = 0;
    bool ng = false;
    for (Var p : parts) {
        n += tape.width(p);
        ng = ng || tape.needs_grad(p);
    }
    Var y = tape.make(n, ng);
    std::size_t off = 0;
    std::vector<Var> pv(parts);
    for (Var p : pv) {
        const auto& src = tape.value(p);
        std::copy(src.begin(), src.end(), tape.value(y).begin() + static_cast<std::ptrdiff_t>(off));
        off += src.size();
    }
    if (ng)
        tape.record([&tape, pv, y] {
            std::size_t off = 0;
            const auto& dy = tape.grad(y);
            for (Var p : pv) {
                const std::size_t w = tape.width(p);
                if (tape.needs_grad(p)) {
                    auto& dp = tape.grad(p);
                    for (std::size_t i = 0; i < w; ++i) dp[i] += dy[off + i];
                }
                off += w;
            }
        });
    return y;
}

/// Coordinate-wise maximum over equally sized inputs; ties route the gradient to the
/// first maximising input.
template <class T>
Var max_pool(Tape<T>& tape, std::span<const Var> xs) {
    if (xs.empty()) throw ParameterError("max_pool over an empty set");
    const std::size_t n = tape.width(xs[0]);
    bool ng = false;
    for (Var x : xs) {
        if (tape.width(x) != n) throw DimensionError("max_pool inputs differ in width");
        ng = ng || tape.needs_grad(x);
    }
    Var y = tape.make(n, ng);
    std::vector<int> arg(n, 0);
    auto& yv = tape.value(y);
    yv = tape.value(xs[0]);
    for (std::size_t k = 1; k < xs.size(); ++k) {
        const auto& xv = tape.value(xs[k]);
        for (std::size_t i = 0; i < n; ++i)
            if (xv[i] > yv[i]) {
                yv[i] = xv[i];
                arg[i] = static_cast<int>(k);
            }
    }
    if (ng)
        tape.record([&tape, in = std::vector<Var>(xs.begin(), xs.end()), arg = std::move(arg), y, n] {
            const auto& dy = tape.grad(y);
            for (std::size_t i = 0; i < n; ++i) {
                Var src = in[static_cast<std::size_t>(arg[i])];
                if (tape.needs_grad(src)) tape.grad(src)[i] += dy[i];
            }
        });
    return y;
}

/// Inner product, returned as a width-1 node.
template <class T>
Var dot(Tape<T>& tape, Var a, Var b) {
    const std::size_t n = tape.width(a);
    if (tape.width(b) != n) throw DimensionError("dot: operand widths differ");
    Var y = tape.make(1, tape.needs_grad(a) || tape.needs_grad(b));
    const auto& av = tape.value(a);
    const auto& bv = tape.value(b);
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += av[i] * bv[i];
    tape.value(y)[0] = acc;
    if (tape.needs_grad(y))
        tape.record([&tape, a, b, y, n] {
            const T g = tape.grad(y)[0];
            if (tape.needs_grad(a)) {
                auto& da = tape.grad(a);
                const auto& bv = tape.value(b);
                for (std::size_t i = 0; i < n; ++i) da[i] += g * bv[i];
            }
            if (tape.needs_grad(b)) {
                auto& db = tape.grad(b);
                const auto& av = tape.value(a);
                for (std::size_t i = 0; i < n; ++i) db[i] += g * av[i];
            }
        });
    return y;
}

/// Gathers width-1 nodes into one vector.
template <class T>
Var stack(Tape<T>& tape, std::span<const Var> scalars) {
    bool ng = false;
    for (Var s : scalars) ng = ng || tape.needs_grad(s);
    Var y = tape.make(scalars.size(), ng);
    for (std::size_t i = 0; i < scalars.size(); ++i) tape.value(y)[i] = tape.value(scalars[i])[0];
    if (ng)
        tape.record([&tape, in = std::vector<Var>(scalars.begin(), scalars.end()), y] {
            const auto& dy = tape.grad(y);
            for (std::size_t i = 0; i < in.size(); ++i)
                if (tape.needs_grad(in[i])) tape.grad(in[i])[0] += dy[i];
        });
    return y;
}

/// Row `row` of an embedding table shaped [rows, dim].
template <class T>
Var lookup(Tape<T>& tape, Param<T>& table, std::size_t row) {
    const std::size_t rows = table.value.shape[0];
    const std::size_t dim = table.value.shape[1];
    if (row >= rows)
        throw DimensionError(table.name + ": row " + std::to_string(row) + " out of range " +
                             std::to_string(rows));
    Var y = tape.make(dim, true);
    std::copy_n(table.data() + row * dim, dim, tape.value(y).begin());
    if (tape.recording())
        tape.record([&tape, &table, row, dim, y] {
            const auto& dy = tape.grad(y);
            T* g = table.grad.data() + row * dim;
            for (std::size_t i = 0; i < dim; ++i) g[i] += dy[i];
        });
    return y;
}

template <class T>
inline T sigmoid_scalar(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

/// Parameters of one GRU cell, gate order (z, r, candidate).
template <class T>
struct GruParams {
    Param<T>* Wx = nullptr;   // [in, 3H]
    Param<T>* Uzr = nullptr;  // [H, 2H]
    Param<T>* Uh = nullptr;   // [H, H]
    Param<T>* b = nullptr;    // [3H]

    std::size_t hidden() const { return Uh->value.shape[0]; }
    std::size_t input() const { return Wx->value.shape[0]; }
};

/// z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br),
/// c = tanh(Wc x + Uc (r*h) + bc), h' = (1-z)*h + z*c.
template <class T>
Var gru(Tape<T>& tape, const GruParams<T>& p, Var h, Var x) {
    const std::size_t H = p.hidden();
    const std::size_t in = p.input();
    if (tape.width(h) != H)
        throw DimensionError(p.Uh->name + ": expected hidden width " + std::to_string(H) + ", got " +
                             std::to_string(tape.width(h)));
    if (tape.width(x) != in)
        throw DimensionError(p.Wx->name + ": expected input width " + std::to_string(in) + ", got " +
                             std::to_string(tape.width(x)));
    const std::size_t G = 3 * H;
    std::vector<T> pre(p.b->value.data.begin(), p.b->value.data.end());
    {
        const auto& xv = tape.value(x);
        const T* w = p.Wx->data();
        for (std::size_t i = 0; i < in; ++i) {
            const T xi = xv[i];
            if (xi == T(0)) continue;
            const T* row = w + i * G;
            for (std::size_t o = 0; o < G; ++o) pre[o] += xi * row[o];
        }
    }
    const auto hv = tape.value(h);
    {
        const T* u = p.Uzr->data();
        for (std::size_t i = 0; i < H; ++i) {
            const T hi = hv[i];
            if (hi == T(0)) continue;
            const T* row = u + i * 2 * H;
            for (std::size_t o = 0; o < 2 * H; ++o) pre[o] += hi * row[o];
        }
    }
    std::vector<T> z(H), r(H), rh(H), c(H);
    for (std::size_t i = 0; i < H; ++i) {
        z[i] = sigmoid_scalar(pre[i]);
        r[i] = sigmoid_scalar(pre[H + i]);
        rh[i] = r[i] * hv[i];
    }
    {
        const T* u = p.Uh->data();
        for (std::size_t i = 0; i < H; ++i) {
            const T v = rh[i];
            if (v == T(0)) continue;
            const T* row = u + i * H;
            for (std::size_t o = 0; o < H; ++o) pre[2 * H + o] += v * row[o];
        }
    }
    for (std::size_t i = 0; i < H; ++i) c[i] = std::tanh(pre[2 * H + i]);

    Var y = tape.make(H, true);
    auto& yv = tape.value(y);
    for (std::size_t i = 0; i < H; ++i) yv[i] = (T(1) - z[i]) * hv[i] + z[i] * c[i];

    if (tape.recording()) {
        tape.record([&tape, p, h, x, y, H, in, G, z = std::move(z), r = std::move(r), rh = std::move(rh),
                     c = std::move(c)] {
            const auto& dy = tape.grad(y);
            const auto& hv = tape.value(h);
            std::vector<T> da(G);   // pre-activation gradients (z, r, c)
            std::vector<T> dh(H);
            for (std::size_t i = 0; i < H; ++i) {
                const T dz = dy[i] * (c[i] - hv[i]);
                const T dc = dy[i] * z[i];
                dh[i] = dy[i] * (T(1) - z[i]);
                da[i] = dz * z[i] * (T(1) - z[i]);
                da[2 * H + i] = dc * (T(1) - c[i] * c[i]);
            }
            // candidate path through Uh (r * h)
            {
                const T* u = p.Uh->data();
                T* gu = p.Uh->grad.data();
                for (std::size_t i = 0; i < H; ++i) {
                    const T* row = u + i * H;
                    T* grow = gu + i * H;
                    T acc = 0;
                    for (std::size_t o = 0; o < H; ++o) {
                        grow[o] += rh[i] * da[2 * H + o];
                        acc += row[o] * da[2 * H + o];
                    }
                    // acc = d(rh_i)
                    dh[i] += acc * r[i];
                    da[H + i] = acc * hv[i] * r[i] * (T(1) - r[i]);
                }
            }
            {
                const T* u = p.Uzr->data();
                T* gu = p.Uzr->grad.data();
                for (std::size_t i = 0; i < H; ++i) {
                    const T* row = u + i * 2 * H;
                    T* grow = gu + i * 2 * H;
                    T acc = 0;
                    for (std::size_t o = 0; o < 2 * H; ++o) {
                        grow[o] += hv[i] * da[o];
                        acc += row[o] * da[o];
                    }
                    dh[i] += acc;
                }
            }
            for (std::size_t o = 0; o < G; ++o) p.b->grad[o] += da[o];
            {
                const auto& xv = tape.value(x);
                const T* w = p.Wx->data();
                T* gw = p.Wx->grad.data();
                const bool dx_needed = tape.needs_grad(x);
                for (std::size_t i = 0; i < in; ++i) {
                    const T xi = xv[i];
                    if (xi != T(0)) {
                        T* grow = gw + i * G;
                        for (std::size_t o = 0; o < G; ++o) grow[o] += xi * da[o];
                    }
                    if (dx_needed) {
                        const T* row = w + i * G;
                        T acc = 0;
                        for (std::size_t o = 0; o < G; ++o) acc += row[o] * da[o];
                        tape.grad(x)[i] += acc;
                    }
                }
            }
            if (tape.needs_grad(h)) {
                auto& gh = tape.grad(h);
                for (std::size_t i = 0; i < H; ++i) gh[i] += dh[i];
            }
        });
    }
    return y;
}

}  // namespace ops
}  // namespace mwalk
