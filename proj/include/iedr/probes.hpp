#pragma once

#include <numeric>
#include <vector>

#include "params.hpp"

namespace iedr {

/// Verification-only mutual-information estimators (never fed back into model
/// training). Both train a small auxiliary net on paired samples and return an
/// estimate in nats.
struct ProbeConfig {
    std::size_t hidden = 64;
    std::size_t epochs = 200;
    double lr = 5e-3;
    std::uint64_t seed = 7;
    std::size_t eval_permutations = 16;
};

namespace detail {

inline void check_probe_inputs(const Tensor& a, const Tensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[0] != b.shape[0] || a.shape[0] < 4)
        throw std::invalid_argument("probe: need two [N x d] sample sets with N >= 4");
}

inline std::vector<std::size_t> permutation(std::size_t n, RngStream& rng) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.index(i)]);
    return p;
}

inline Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
    Tensor out({t.shape[0], t.shape[1]});
    for (std::size_t r = 0; r < t.shape[0]; ++r)
        std::copy_n(t.data.data() + perm[r] * t.shape[1], t.shape[1],
                    out.data.data() + r * t.shape[1]);
    return out;
}

inline Tensor concat_cols_plain(const Tensor& a, const Tensor& b) {
    Tensor out({a.shape[0], a.shape[1] + b.shape[1]});
    for (std::size_t r = 0; r < a.shape[0]; ++r) {
        std::copy_n(a.data.data() + r * a.shape[1], a.shape[1],
                    out.data.data() + r * out.shape[1]);
        std::copy_n(b.data.data() + r * b.shape[1], b.shape[1],
                    out.data.data() + r * out.shape[1] + a.shape[1]);
    }
    return out;
}

inline Value log_mean_exp(const Value& x) {
    double m = *std::max_element(x.tensor().data.begin(), x.tensor().data.end());
    return add_scalar(log_op(mean_all(exp_op(add_scalar(x, -m)))), m);
}

} // namespace detail

/// Donsker-Varadhan lower bound (MINE): trains a critic T to maximize
/// E_joint[T] - log E_marginal[e^T]. The returned estimate averages the bound
/// over fresh marginal permutations.
inline double probe_mine(const Tensor& a, const Tensor& b, const ProbeConfig& cfg = {}) {
    detail::check_probe_inputs(a, b);
    RngStream init(cfg.seed, "probe_mine.init");
    RngStream shuffle(cfg.seed, "probe_mine.shuffle");
    const std::size_t N = a.shape[0];
    ParameterStore store;
    Mlp critic = Mlp::create(store, "critic", a.shape[1] + b.shape[1], cfg.hidden, 1, init,
                             Group::omega);
    Adam opt(store.group(Group::omega), cfg.lr);
    Value joint = Value::constant(detail::concat_cols_plain(a, b));

    auto bound = [&](const Tensor& marg_b) {
        Value marg = Value::constant(detail::concat_cols_plain(a, marg_b));
        Value tj = mean_all(critic.apply(joint));
        Value tm = detail::log_mean_exp(critic.apply(marg));
        return sub(tj, tm);
    };

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        Tensor marg_b = detail::permute_rows(b, detail::permutation(N, shuffle));
        Value dv = bound(marg_b);
        opt.zero_grad();
        backward(scale(dv, -1.0));
        opt.step();
    }
    double est = 0.0;
    for (std::size_t k = 0; k < cfg.eval_permutations; ++k) {
        Tensor marg_b = detail::permute_rows(b, detail::permutation(N, shuffle));
        est += bound(marg_b).tensor().value();
    }
    return est / static_cast<double>(cfg.eval_permutations);
}

/// Contrastive log-ratio upper bound (CLUB): fits a Gaussian variational net
/// q(a|b) with learned mean and per-dimension variance, then estimates
/// E_joint[log q] - E_marginal[log q].
inline double probe_club(const Tensor& a, const Tensor& b, const ProbeConfig& cfg = {}) {
    detail::check_probe_inputs(a, b);
    RngStream init(cfg.seed, "probe_club.init");
    RngStream shuffle(cfg.seed, "probe_club.shuffle");
    const std::size_t N = a.shape[0], da = a.shape[1];
    ParameterStore store;
    AffineLayer trunk = AffineLayer::create(store, "trunk", b.shape[1], cfg.hidden, init,
                                            Group::omega);
    AffineLayer mean_head = AffineLayer::create(store, "mean", cfg.hidden, da, init, Group::omega);
    AffineLayer logvar_head =
        AffineLayer::create(store, "logvar", cfg.hidden, da, init, Group::omega);
    Adam opt(store.group(Group::omega), cfg.lr);
    Value bv = Value::constant(b);
    Value av = Value::constant(a);

    // Per-row sum over dims of ((a - mu)^2 / var + logvar); log q(a|b) is
    // -1/2 of this up to an additive constant that cancels in the contrast.
    auto nll_terms = [&](const Value& target) {
        Value h = relu(trunk.apply(bv));
        Value mu = mean_head.apply(h);
        Value lv = clamp_op(logvar_head.apply(h), -8.0, 8.0);
        Value diff = sub(target, mu);
        Value sq = mul(diff, diff);
        return add(mul(sq, exp_op(scale(lv, -1.0))), lv);
    };

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        opt.zero_grad();
        backward(mean_all(nll_terms(av)));
        opt.step();
    }
    const double joint = mean_all(nll_terms(av)).tensor().value() * da;
    double marg = 0.0;
    for (std::size_t k = 0; k < cfg.eval_permutations; ++k) {
        Tensor shuf_a = detail::permute_rows(a, detail::permutation(N, shuffle));
        marg += mean_all(nll_terms(Value::constant(shuf_a))).tensor().value() * da;
    }
    marg /= static_cast<double>(cfg.eval_permutations);
    return 0.5 * (marg - joint);
}

} // namespace iedr
