#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace iedr {

// ---------------------------------------------------------------------------
// Reverse-mode tape. Each Node carries a value tensor and accumulates a
// gradient tensor of the same shape. Ops operate on whole tensors (a batch
// dimension in the rows), so a training step builds a few hundred nodes, not
// one per scalar.
// ---------------------------------------------------------------------------

struct Node {
    Tensor val;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backfn; // accumulates into parents' grads

    explicit Node(Tensor v, bool req = false)
        : val(std::move(v)), grad(Tensor::zeros_like(val)), requires_grad(req) {}
};

class Value {
public:
    Value() = default;
    explicit Value(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    static Value constant(Tensor t) {
        return Value(std::make_shared<Node>(std::move(t), false));
    }

    /// Trainable leaf; gradients accumulate until zeroed.
    static Value leaf(Tensor t) {
        return Value(std::make_shared<Node>(std::move(t), true));
    }

    bool defined() const { return node_ != nullptr; }
    const Tensor& tensor() const { return node_->val; }
    Tensor& tensor() { return node_->val; }
    const Tensor& grad() const { return node_->grad; }
    Tensor& grad() { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    std::shared_ptr<Node> node() const { return node_; }

    void zero_grad() { std::fill(node_->grad.data.begin(), node_->grad.data.end(), 0.0); }

    /// A constant leaf sharing this value's current contents. Used where a
    /// quantity must enter a loss as data rather than as a differentiable
    /// input (e.g. frozen head parameters in the second optimization step).
    Value detach() const { return constant(node_->val); }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

inline std::shared_ptr<Node> make_op(Tensor out, std::vector<Value> parents) {
    bool req = false;
    std::vector<std::shared_ptr<Node>> ps;
    ps.reserve(parents.size());
    for (auto& p : parents) {
        req = req || p.requires_grad();
        ps.push_back(p.node());
    }
    auto n = std::make_shared<Node>(std::move(out), req);
    n->parents = std::move(ps);
    return n;
}

[[noreturn]] inline void op_fail(const std::string& op, const std::string& what) {
    throw std::invalid_argument(op + ": " + what);
}

inline void require_2d(const std::string& op, const Tensor& t) {
    if (t.shape.size() != 2) op_fail(op, "expected rank-2 tensor, got " + t.shape_str());
}

inline void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) op_fail(op, "shape mismatch " + shapes_str(a, b));
}

} // namespace detail

// --- elementwise -----------------------------------------------------------

inline Value add(const Value& a, const Value& b) {
    detail::require_same_shape("add", a.tensor(), b.tensor());
    Tensor out = a.tensor();
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b.tensor().data[i];
    auto n = detail::make_op(std::move(out), {a, b});
    auto* raw = n.get();
    n->backfn = [raw] {
        for (int k = 0; k < 2; ++k) {
            auto& p = *raw->parents[k];
            if (!p.requires_grad) continue;
            for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad.data[i] += raw->grad.data[i];
        }
    };
    return Value(n);
}

inline Value sub(const Value& a, const Value& b) {
    detail::require_same_shape("sub", a.tensor(), b.tensor());
    Tensor out = a.tensor();
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= b.tensor().data[i];
    auto n = detail::make_op(std::move(out), {a, b});
    auto* raw = n.get();
    n->backfn = [raw] {
        auto& pa = *raw->parents[0];
        auto& pb = *raw->parents[1];
        if (pa.requires_grad)
            for (std::size_t i = 0; i < pa.grad.numel(); ++i) pa.grad.data[i] += raw->grad.data[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < pb.grad.numel(); ++i) pb.grad.data[i] -= raw->grad.data[i];
    };
    return Value(n);
}

inline Value mul(const Value& a, const Value& b) {
    detail::require_same_shape("mul", a.tensor(), b.tensor());
    Tensor out = a.tensor();
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= b.tensor().data[i];
    auto n = detail::make_op(std::move(out), {a, b});
    auto* raw = n.get();
    n->backfn = [raw] {
        auto& pa = *raw->parents[0];
        auto& pb = *raw->parents[1];
        if (pa.requires_grad)
            for (std::size_t i = 0; i < pa.grad.numel(); ++i)
                pa.grad.data[i] += raw->grad.data[i] * pb.val.data[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < pb.grad.numel(); ++i)
                pb.grad.data[i] += raw->grad.data[i] * pa.val.data[i];
    };
    return Value(n);
}

inline Value scale(const Value& a, double s) {
    Tensor out = a.tensor();
    for (auto& v : out.data) v *= s;
    auto n = detail::make_op(std::move(out), {a});
    auto* raw = n.get();
    n->backfn = [raw, s] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad.data[i] += s * raw->grad.data[i];
    };
    return Value(n);
}

inline Value relu(const Value& a) {
    Tensor out = a.tensor();
    for (auto& v : out.data) v = std::max(v, 0.0); // NaN propagates
    auto n = detail::make_op(std::move(out), {a});
    auto* raw = n.get();
    n->backfn = [raw] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.numel(); ++i)
            if (p.val.data[i] > 0.0) p.grad.data[i] += raw->grad.data[i];
    };
    return Value(n);
}

inline Value exp_op(const Value& a) {
    Tensor out = a.tensor();
    for (auto& v : out.data) v = std::exp(v);
    auto n = detail::make_op(std::move(out), {a});
    auto* raw = n.get();
    n->backfn = [raw] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.numel(); ++i)
            p.grad.data[i] += raw->grad.data[i] * raw->val.data[i];
    };
    return Value(n);
}

inline Value log_op(const Value& a) {
    Tensor out = a.tensor();
    for (auto& v : out.data) {
        if (v <= 0.0) throw std::domain_error("log: non-positive input");
        v = std::log(v);
    }
    auto n = detail::make_op(std::move(out), {a});
    auto* raw = n.get();
    n->backfn = [raw] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.numel(); ++i)
            p.grad.data[i] += raw->grad.data[i] / p.val.data[i];
    };
    return Value(n);
}

inline Value sigmoid(const Value& a) {
    Tensor out = a.tensor();
    for (auto& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    auto n = detail::make_op(std::move(out), {a});
    auto* raw = n.get();
    n->backfn = [raw] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.numel(); ++i) {
            double s = raw->val.data[i];
            p.grad.data[i] += raw->grad.data[i] * s * (1.0 - s);
        }
    };
    return Value(n);
}

inline Value add_scalar(const Value& a, double s) {
    Tensor out = a.tensor();
    for (auto& v : out.data) v += s;
    auto n = detail::make_op(std::move(out), {a});
    auto* raw = n.get();
    n->backfn = [raw] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad.data[i] += raw->grad.data[i];
    };
    return Value(n);
}

/// Elementwise clamp; gradient is zero outside [lo, hi].
inline Value clamp_op(const Value& a, double lo, double hi) {
    Tensor out = a.tensor();
    for (auto& v : out.data) v = std::clamp(v, lo, hi);
    auto n = detail::make_op(std::move(out), {a});
    auto* raw = n.get();
    n->backfn = [raw, lo, hi] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.numel(); ++i) {
            const double v = p.val.data[i];
            if (v > lo && v < hi) p.grad.data[i] += raw->grad.data[i];
        }
    };
    return Value(n);
}

/// Inverted dropout: surviving entries scaled by 1/(1-rate), so evaluation
/// needs no rescaling. The mask is recorded for the backward pass.
inline Value dropout(const Value& a, double rate, RngStream& rng) {
    if (rate < 0.0 || rate >= 1.0)
        detail::op_fail("dropout", "rate must be in [0,1), got " + std::to_string(rate));
    if (rate == 0.0) return scale(a, 1.0);
    const double keep = 1.0 - rate;
    auto mask = std::make_shared<std::vector<double>>(a.tensor().numel());
    Tensor out = a.tensor();
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double m = rng.uniform(0.0, 1.0) < rate ? 0.0 : 1.0 / keep;
        (*mask)[i] = m;
        out.data[i] *= m;
    }
    auto n = detail::make_op(std::move(out), {a});
    auto* raw = n.get();
    n->backfn = [raw, mask] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.numel(); ++i)
            p.grad.data[i] += raw->grad.data[i] * (*mask)[i];
    };
    return Value(n);
}

// --- dense linear algebra ---------------------------------------------------

/// y = x W^T + b with x:[N,in], W:[out,in], b:[out].
inline Value affine(const Value& x, const Value& W, const Value& b) {
    detail::require_2d("affine", x.tensor());
    detail::require_2d("affine", W.tensor());
    const std::size_t N = x.tensor().shape[0], in = x.tensor().shape[1];
    const std::size_t out = W.tensor().shape[0];
    if (W.tensor().shape[1] != in)
        detail::op_fail("affine", "x/W inner dim mismatch " + shapes_str(x.tensor(), W.tensor()));
    if (b.tensor().shape != std::vector<std::size_t>{out})
        detail::op_fail("affine", "bias shape " + b.tensor().shape_str() + " != [" + std::to_string(out) + "]");

    Tensor y({N, out});
    const double* xp = x.tensor().data.data();
    const double* wp = W.tensor().data.data();
    const double* bp = b.tensor().data.data();
    for (std::size_t n = 0; n < N; ++n) {
        const double* xr = xp + n * in;
        double* yr = y.data.data() + n * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wr = wp + o * in;
            double acc = bp[o];
            for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
            yr[o] = acc;
        }
    }
    auto nd = detail::make_op(std::move(y), {x, W, b});
    auto* raw = nd.get();
    nd->backfn = [raw, N, in, out] {
        auto& px = *raw->parents[0];
        auto& pw = *raw->parents[1];
        auto& pb = *raw->parents[2];
        const double* gp = raw->grad.data.data();
        if (px.requires_grad) {
            const double* wp2 = pw.val.data.data();
            for (std::size_t n = 0; n < N; ++n) {
                double* gxr = px.grad.data.data() + n * in;
                const double* gr = gp + n * out;
                for (std::size_t o = 0; o < out; ++o) {
                    const double g = gr[o];
                    if (g == 0.0) continue;
                    const double* wr = wp2 + o * in;
                    for (std::size_t i = 0; i < in; ++i) gxr[i] += g * wr[i];
                }
            }
        }
        if (pw.requires_grad) {
            const double* xp2 = px.val.data.data();
            for (std::size_t n = 0; n < N; ++n) {
                const double* xr = xp2 + n * in;
                const double* gr = gp + n * out;
                for (std::size_t o = 0; o < out; ++o) {
                    const double g = gr[o];
                    if (g == 0.0) continue;
                    double* gwr = pw.grad.data.data() + o * in;
                    for (std::size_t i = 0; i < in; ++i) gwr[i] += g * xr[i];
                }
            }
        }
        if (pb.requires_grad) {
            for (std::size_t n = 0; n < N; ++n) {
                const double* gr = gp + n * out;
                for (std::size_t o = 0; o < out; ++o) pb.grad.data[o] += gr[o];
            }
        }
    };
    return Value(nd);
}

// --- gather / segment -------------------------------------------------------

/// Row gather; doubles as embedding lookup when `table` is an embedding
/// matrix. Backward scatter-adds into the gathered rows.
inline Value gather_rows(const Value& table, std::vector<std::size_t> idx) {
    detail::require_2d("gather_rows", table.tensor());
    const std::size_t V = table.tensor().shape[0], d = table.tensor().shape[1];
    for (auto i : idx)
        if (i >= V)
            detail::op_fail("gather_rows", "index " + std::to_string(i) + " out of range for " +
                                               table.tensor().shape_str());
    Tensor out({idx.size(), d});
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy_n(table.tensor().data.data() + idx[r] * d, d, out.data.data() + r * d);
    auto n = detail::make_op(std::move(out), {table});
    auto* raw = n.get();
    auto ids = std::make_shared<std::vector<std::size_t>>(std::move(idx));
    n->backfn = [raw, ids, d] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t r = 0; r < ids->size(); ++r) {
            double* dst = p.grad.data.data() + (*ids)[r] * d;
            const double* src = raw->grad.data.data() + r * d;
            for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
    };
    return Value(n);
}

inline Value lookup_rows(const Value& table, const std::vector<std::size_t>& idx) {
    return gather_rows(table, idx);
}

/// Per-segment mean over rows: X:[N,d], seg[i] in [0,S) -> [S,d].
inline Value seg_mean(const Value& x, std::vector<std::size_t> seg, std::size_t S) {
    detail::require_2d("seg_mean", x.tensor());
    const std::size_t N = x.tensor().shape[0], d = x.tensor().shape[1];
    if (seg.size() != N) detail::op_fail("seg_mean", "segment ids length != rows");
    std::vector<std::size_t> count(S, 0);
    for (auto s : seg) {
        if (s >= S) detail::op_fail("seg_mean", "segment id out of range");
        ++count[s];
    }
    for (std::size_t s = 0; s < S; ++s)
        if (count[s] == 0) detail::op_fail("seg_mean", "empty segment " + std::to_string(s));
    Tensor out({S, d});
    for (std::size_t r = 0; r < N; ++r) {
        const double* src = x.tensor().data.data() + r * d;
        double* dst = out.data.data() + seg[r] * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
    for (std::size_t s = 0; s < S; ++s) {
        double inv = 1.0 / static_cast<double>(count[s]);
        double* dst = out.data.data() + s * d;
        for (std::size_t c = 0; c < d; ++c) dst[c] *= inv;
    }
    auto n = detail::make_op(std::move(out), {x});
    auto* raw = n.get();
    auto segp = std::make_shared<std::vector<std::size_t>>(std::move(seg));
    auto cntp = std::make_shared<std::vector<std::size_t>>(std::move(count));
    n->backfn = [raw, segp, cntp, d] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t r = 0; r < segp->size(); ++r) {
            std::size_t s = (*segp)[r];
            double inv = 1.0 / static_cast<double>((*cntp)[s]);
            const double* src = raw->grad.data.data() + s * d;
            double* dst = p.grad.data.data() + r * d;
            for (std::size_t c = 0; c < d; ++c) dst[c] += src[c] * inv;
        }
    };
    return Value(n);
}

/// Per-segment sum over a vector: x:[N], seg[i] in [0,S) -> [S].
inline Value seg_sum(const Value& x, std::vector<std::size_t> seg, std::size_t S) {
    if (x.tensor().shape.size() != 1) detail::op_fail("seg_sum", "expected rank-1 tensor");
    const std::size_t N = x.tensor().shape[0];
    if (seg.size() != N) detail::op_fail("seg_sum", "segment ids length != size");
    Tensor out({S});
    for (std::size_t i = 0; i < N; ++i) {
        if (seg[i] >= S) detail::op_fail("seg_sum", "segment id out of range");
        out.data[seg[i]] += x.tensor().data[i];
    }
    auto n = detail::make_op(std::move(out), {x});
    auto* raw = n.get();
    auto segp = std::make_shared<std::vector<std::size_t>>(std::move(seg));
    n->backfn = [raw, segp] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < segp->size(); ++i)
            p.grad.data[i] += raw->grad.data[(*segp)[i]];
    };
    return Value(n);
}

// --- structure --------------------------------------------------------------

inline Value concat_rows(const Value& a, const Value& b) {
    detail::require_2d("concat_rows", a.tensor());
    detail::require_2d("concat_rows", b.tensor());
    if (a.tensor().shape[1] != b.tensor().shape[1])
        detail::op_fail("concat_rows", "column mismatch " + shapes_str(a.tensor(), b.tensor()));
    const std::size_t na = a.tensor().shape[0], nb = b.tensor().shape[0], d = a.tensor().shape[1];
    Tensor out({na + nb, d});
    std::copy(a.tensor().data.begin(), a.tensor().data.end(), out.data.begin());
    std::copy(b.tensor().data.begin(), b.tensor().data.end(), out.data.begin() + na * d);
    auto n = detail::make_op(std::move(out), {a, b});
    auto* raw = n.get();
    n->backfn = [raw, na, nb, d] {
        auto& pa = *raw->parents[0];
        auto& pb = *raw->parents[1];
        if (pa.requires_grad)
            for (std::size_t i = 0; i < na * d; ++i) pa.grad.data[i] += raw->grad.data[i];
        if (pb.requires_grad)
            for (std::size_t i = 0; i < nb * d; ++i) pb.grad.data[i] += raw->grad.data[na * d + i];
    };
    return Value(n);
}

inline Value concat_cols(const Value& a, const Value& b) {
    detail::require_2d("concat_cols", a.tensor());
    detail::require_2d("concat_cols", b.tensor());
    if (a.tensor().shape[0] != b.tensor().shape[0])
        detail::op_fail("concat_cols", "row mismatch " + shapes_str(a.tensor(), b.tensor()));
    const std::size_t N = a.tensor().shape[0], da = a.tensor().shape[1], db = b.tensor().shape[1];
    Tensor out({N, da + db});
    for (std::size_t r = 0; r < N; ++r) {
        std::copy_n(a.tensor().data.data() + r * da, da, out.data.data() + r * (da + db));
        std::copy_n(b.tensor().data.data() + r * db, db, out.data.data() + r * (da + db) + da);
    }
    auto n = detail::make_op(std::move(out), {a, b});
    auto* raw = n.get();
    n->backfn = [raw, N, da, db] {
        auto& pa = *raw->parents[0];
        auto& pb = *raw->parents[1];
        for (std::size_t r = 0; r < N; ++r) {
            const double* g = raw->grad.data.data() + r * (da + db);
            if (pa.requires_grad) {
                double* dst = pa.grad.data.data() + r * da;
                for (std::size_t c = 0; c < da; ++c) dst[c] += g[c];
            }
            if (pb.requires_grad) {
                double* dst = pb.grad.data.data() + r * db;
                for (std::size_t c = 0; c < db; ++c) dst[c] += g[da + c];
            }
        }
    };
    return Value(n);
}

/// Column slice [c0, c1) of a rank-2 tensor.
inline Value slice_cols(const Value& a, std::size_t c0, std::size_t c1) {
    detail::require_2d("slice_cols", a.tensor());
    const std::size_t N = a.tensor().shape[0], d = a.tensor().shape[1];
    if (c0 >= c1 || c1 > d) detail::op_fail("slice_cols", "bad column range");
    const std::size_t w = c1 - c0;
    Tensor out({N, w});
    for (std::size_t r = 0; r < N; ++r)
        std::copy_n(a.tensor().data.data() + r * d + c0, w, out.data.data() + r * w);
    auto n = detail::make_op(std::move(out), {a});
    auto* raw = n.get();
    n->backfn = [raw, N, d, c0, w] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t r = 0; r < N; ++r) {
            const double* src = raw->grad.data.data() + r * w;
            double* dst = p.grad.data.data() + r * d + c0;
            for (std::size_t c = 0; c < w; ++c) dst[c] += src[c];
        }
    };
    return Value(n);
}

/// Rank-2 -> rank-1 view of the same elements.
inline Value flatten(const Value& a) {
    detail::require_2d("flatten", a.tensor());
    Tensor out({a.tensor().numel()}, a.tensor().data);
    auto n = detail::make_op(std::move(out), {a});
    auto* raw = n.get();
    n->backfn = [raw] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad.data[i] += raw->grad.data[i];
    };
    return Value(n);
}

/// out[i] = X[i, cols[i]].
inline Value pick(const Value& x, std::vector<std::size_t> cols) {
    detail::require_2d("pick", x.tensor());
    const std::size_t N = x.tensor().shape[0], K = x.tensor().shape[1];
    if (cols.size() != N) detail::op_fail("pick", "column index count != rows");
    Tensor out({N});
    for (std::size_t i = 0; i < N; ++i) {
        if (cols[i] >= K) detail::op_fail("pick", "column index out of range");
        out.data[i] = x.tensor().at(i, cols[i]);
    }
    auto n = detail::make_op(std::move(out), {x});
    auto* raw = n.get();
    auto cp = std::make_shared<std::vector<std::size_t>>(std::move(cols));
    n->backfn = [raw, cp, K] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        for (std::size_t i = 0; i < cp->size(); ++i)
            p.grad.data[i * K + (*cp)[i]] += raw->grad.data[i];
    };
    return Value(n);
}

// --- row reductions ---------------------------------------------------------

inline Value dot_rows(const Value& a, const Value& b) {
    detail::require_2d("dot_rows", a.tensor());
    detail::require_same_shape("dot_rows", a.tensor(), b.tensor());
    const std::size_t N = a.tensor().shape[0], d = a.tensor().shape[1];
    Tensor out({N});
    for (std::size_t r = 0; r < N; ++r) {
        const double* x = a.tensor().data.data() + r * d;
        const double* y = b.tensor().data.data() + r * d;
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += x[c] * y[c];
        out.data[r] = acc;
    }
    auto n = detail::make_op(std::move(out), {a, b});
    auto* raw = n.get();
    n->backfn = [raw, N, d] {
        auto& pa = *raw->parents[0];
        auto& pb = *raw->parents[1];
        for (std::size_t r = 0; r < N; ++r) {
            const double g = raw->grad.data[r];
            if (g == 0.0) continue;
            if (pa.requires_grad) {
                const double* y = pb.val.data.data() + r * d;
                double* dst = pa.grad.data.data() + r * d;
                for (std::size_t c = 0; c < d; ++c) dst[c] += g * y[c];
            }
            if (pb.requires_grad) {
                const double* x = pa.val.data.data() + r * d;
                double* dst = pb.grad.data.data() + r * d;
                for (std::size_t c = 0; c < d; ++c) dst[c] += g * x[c];
            }
        }
    };
    return Value(n);
}

/// Row-wise cosine similarity. Zero-norm rows are rejected.
inline Value cosine_rows(const Value& a, const Value& b) {
    detail::require_2d("cosine_rows", a.tensor());
    detail::require_same_shape("cosine_rows", a.tensor(), b.tensor());
    const std::size_t N = a.tensor().shape[0], d = a.tensor().shape[1];
    Tensor out({N});
    auto norms = std::make_shared<std::vector<double>>(2 * N);
    for (std::size_t r = 0; r < N; ++r) {
        const double* x = a.tensor().data.data() + r * d;
        const double* y = b.tensor().data.data() + r * d;
        double s = 0.0, nx = 0.0, ny = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            s += x[c] * y[c];
            nx += x[c] * x[c];
            ny += y[c] * y[c];
        }
        nx = std::sqrt(nx);
        ny = std::sqrt(ny);
        if (nx == 0.0 || ny == 0.0)
            throw std::domain_error("cosine_rows: zero-norm row " + std::to_string(r));
        (*norms)[2 * r] = nx;
        (*norms)[2 * r + 1] = ny;
        out.data[r] = s / (nx * ny);
    }
    auto n = detail::make_op(std::move(out), {a, b});
    auto* raw = n.get();
    n->backfn = [raw, norms, N, d] {
        auto& pa = *raw->parents[0];
        auto& pb = *raw->parents[1];
        for (std::size_t r = 0; r < N; ++r) {
            const double g = raw->grad.data[r];
            if (g == 0.0) continue;
            const double c = raw->val.data[r];
            const double nx = (*norms)[2 * r], ny = (*norms)[2 * r + 1];
            const double* x = pa.val.data.data() + r * d;
            const double* y = pb.val.data.data() + r * d;
            if (pa.requires_grad) {
                double* dst = pa.grad.data.data() + r * d;
                for (std::size_t k = 0; k < d; ++k)
                    dst[k] += g * (y[k] / (nx * ny) - c * x[k] / (nx * nx));
            }
            if (pb.requires_grad) {
                double* dst = pb.grad.data.data() + r * d;
                for (std::size_t k = 0; k < d; ++k)
                    dst[k] += g * (x[k] / (nx * ny) - c * y[k] / (ny * ny));
            }
        }
    };
    return Value(n);
}

/// Row-wise mean squared error: [N,d] x [N,d] -> [N].
inline Value mse_rows(const Value& a, const Value& b) {
    detail::require_2d("mse_rows", a.tensor());
    detail::require_same_shape("mse_rows", a.tensor(), b.tensor());
    const std::size_t N = a.tensor().shape[0], d = a.tensor().shape[1];
    Tensor out({N});
    for (std::size_t r = 0; r < N; ++r) {
        const double* x = a.tensor().data.data() + r * d;
        const double* y = b.tensor().data.data() + r * d;
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            double e = x[c] - y[c];
            acc += e * e;
        }
        out.data[r] = acc / static_cast<double>(d);
    }
    auto n = detail::make_op(std::move(out), {a, b});
    auto* raw = n.get();
    n->backfn = [raw, N, d] {
        auto& pa = *raw->parents[0];
        auto& pb = *raw->parents[1];
        const double inv = 2.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < N; ++r) {
            const double g = raw->grad.data[r] * inv;
            if (g == 0.0) continue;
            const double* x = pa.val.data.data() + r * d;
            const double* y = pb.val.data.data() + r * d;
            for (std::size_t c = 0; c < d; ++c) {
                const double e = g * (x[c] - y[c]);
                if (pa.requires_grad) pa.grad.data[r * d + c] += e;
                if (pb.requires_grad) pb.grad.data[r * d + c] -= e;
            }
        }
    };
    return Value(n);
}

// --- full reductions --------------------------------------------------------

inline Value sum_all(const Value& a) {
    double acc = 0.0;
    for (double v : a.tensor().data) acc += v;
    auto n = detail::make_op(Tensor::scalar(acc), {a});
    auto* raw = n.get();
    n->backfn = [raw] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        const double g = raw->grad.data[0];
        for (auto& v : p.grad.data) v += g;
    };
    return Value(n);
}

inline Value mean_all(const Value& a) {
    const std::size_t n_el = a.tensor().numel();
    if (n_el == 0) detail::op_fail("mean_all", "empty tensor");
    double acc = 0.0;
    for (double v : a.tensor().data) acc += v;
    auto n = detail::make_op(Tensor::scalar(acc / static_cast<double>(n_el)), {a});
    auto* raw = n.get();
    n->backfn = [raw, n_el] {
        auto& p = *raw->parents[0];
        if (!p.requires_grad) return;
        const double g = raw->grad.data[0] / static_cast<double>(n_el);
        for (auto& v : p.grad.data) v += g;
    };
    return Value(n);
}

// --- losses ------------------------------------------------------------------

/// Elementwise binary cross-entropy with probabilities clamped to
/// [1e-7, 1-1e-7]. Labels enter as data.
inline Value bce(const Value& p, std::vector<double> labels) {
    if (p.tensor().shape.size() != 1) detail::op_fail("bce", "expected rank-1 probabilities");
    const std::size_t N = p.tensor().shape[0];
    if (labels.size() != N) detail::op_fail("bce", "label count != probabilities");
    constexpr double kClamp = 1e-7;
    Tensor out({N});
    for (std::size_t i = 0; i < N; ++i) {
        const double y = labels[i];
        if (y != 0.0 && y != 1.0) detail::op_fail("bce", "label not in {0,1}");
        const double pc = std::clamp(p.tensor().data[i], kClamp, 1.0 - kClamp);
        out.data[i] = -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
    }
    auto n = detail::make_op(std::move(out), {p});
    auto* raw = n.get();
    auto lp = std::make_shared<std::vector<double>>(std::move(labels));
    n->backfn = [raw, lp, kClamp] {
        auto& pp = *raw->parents[0];
        if (!pp.requires_grad) return;
        for (std::size_t i = 0; i < lp->size(); ++i) {
            const double pv = pp.val.data[i];
            if (pv <= kClamp || pv >= 1.0 - kClamp) continue; // clamped region
            pp.grad.data[i] += raw->grad.data[i] * (pv - (*lp)[i]) / (pv * (1.0 - pv));
        }
    };
    return Value(n);
}

// --- backward ----------------------------------------------------------------

/// Reverse accumulation from a scalar root. Repeated calls without zeroing
/// accumulate gradients.
inline void backward(const Value& root) {
    if (root.tensor().numel() != 1)
        throw std::invalid_argument("backward: root must be scalar, got " +
                                    root.tensor().shape_str());
    // Iterative topological sort.
    std::vector<Node*> order;
    std::unordered_set<Node*> done;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node().get(), 0}};
    std::unordered_set<Node*> on_stack{root.node().get()};
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (!done.count(p) && !on_stack.count(p)) {
                stack.emplace_back(p, 0);
                on_stack.insert(p);
            }
        } else {
            order.push_back(n);
            done.insert(n);
            on_stack.erase(n);
            stack.pop_back();
        }
    }
    // Interior grads are per-call scratch; only leaves accumulate across calls.
    for (Node* n : order)
        if (!n->parents.empty()) std::fill(n->grad.data.begin(), n->grad.data.end(), 0.0);
    root.node()->grad.data[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backfn && n->requires_grad) n->backfn();
    }
}

} // namespace iedr
