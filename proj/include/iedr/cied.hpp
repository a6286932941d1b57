#pragma once

#include <string>
#include <vector>

#include "factors.hpp"
#include "params.hpp"

namespace iedr {

enum class NegGenMode { NegGen1, NegGen2, Both };
enum class DisMode { BiDis, Vclub, Off };

inline NegGenMode neggen_from(const std::string& s) {
    if (s == "NegGen1") return NegGenMode::NegGen1;
    if (s == "NegGen2") return NegGenMode::NegGen2;
    if (s == "Both") return NegGenMode::Both;
    throw std::invalid_argument("unknown neggen mode: " + s);
}

inline DisMode dis_mode_from(const std::string& s) {
    if (s == "BiDis") return DisMode::BiDis;
    if (s == "vCLUB") return DisMode::Vclub;
    if (s == "off") return DisMode::Off;
    throw std::invalid_argument("unknown dis mode: " + s);
}

inline const char* neggen_name(NegGenMode m) {
    switch (m) {
        case NegGenMode::NegGen1: return "NegGen1";
        case NegGenMode::NegGen2: return "NegGen2";
        default: return "Both";
    }
}

inline const char* dis_mode_name(DisMode m) {
    switch (m) {
        case DisMode::BiDis: return "BiDis";
        case DisMode::Vclub: return "vCLUB";
        default: return "off";
    }
}

struct CiclConfig {
    double tau = 0.5;
    std::size_t num_negatives = 40;   // L; the loss denominator sees 2L terms
    double neg_context_dropout = 0.5; // NegGen2 dropout rate
    NegGenMode neggen_mode = NegGenMode::Both;

    void validate() const {
        if (tau <= 0) throw std::invalid_argument("CiclConfig: tau must be > 0");
        if (num_negatives < 1) throw std::invalid_argument("CiclConfig: L must be >= 1");
        if (neg_context_dropout <= 0 || neg_context_dropout >= 1)
            throw std::invalid_argument("CiclConfig: dropout must be in (0,1)");
    }
};

struct DisConfig {
    std::size_t num_negatives = 5; // L_dis per direction
    DisMode mode = DisMode::BiDis;

    void validate() const {
        if (num_negatives < 1) throw std::invalid_argument("DisConfig: L_dis must be >= 1");
    }
};

/// Variational predictor q of one factor given the other (d -> hidden -> d).
/// Its parameters form the theta optimizer group.
struct VariationalHead {
    Mlp net;

    static VariationalHead create(ParameterStore& store, const std::string& prefix, std::size_t d,
                                  std::size_t hidden, RngStream& rng) {
        return {Mlp::create(store, prefix, d, hidden, d, rng, Group::theta)};
    }

    Value apply(const Value& x) const { return net.apply(x); }
    Value apply_frozen(const Value& x) const { return net.apply_frozen(x); }
};

// --- positive-context generation ---------------------------------------------

/// Per-sample plan for the alternative context c_j of a positive pair.
struct PositiveContextPlan {
    bool use_dropout = false;   // NegGen2: heavy dropout of the own context
    std::size_t sampled = 0;    // NegGen1: batch index of the sampled context
    bool fell_back = false;     // NegGen1 requested but no differing context
};

/// Decides how to obtain a positive-pair context for sample i. `differs[j]`
/// says whether batch entry j carries a context distinct from sample i's.
inline PositiveContextPlan plan_positive_context(std::size_t i, const std::vector<bool>& differs,
                                                 NegGenMode mode, RngStream& rng) {
    bool want_sample;
    switch (mode) {
        case NegGenMode::NegGen1: want_sample = true; break;
        case NegGenMode::NegGen2: want_sample = false; break;
        default: want_sample = rng.coin(); break;
    }
    PositiveContextPlan plan;
    if (!want_sample) {
        plan.use_dropout = true;
        return plan;
    }
    std::vector<std::size_t> pool;
    for (std::size_t j = 0; j < differs.size(); ++j)
        if (j != i && differs[j]) pool.push_back(j);
    if (pool.empty()) {
        plan.use_dropout = true;
        plan.fell_back = true;
        return plan;
    }
    plan.sampled = pool[rng.index(pool.size())];
    return plan;
}

/// Which batch entries carry a context representation distinct from row i's.
inline std::vector<bool> context_differs(const Tensor& contexts, std::size_t i) {
    const std::size_t B = contexts.shape[0], d = contexts.shape[1];
    std::vector<bool> out(B, false);
    const double* ri = contexts.data.data() + i * d;
    for (std::size_t j = 0; j < B; ++j) {
        if (j == i) continue;
        const double* rj = contexts.data.data() + j * d;
        for (std::size_t c = 0; c < d; ++c)
            if (ri[c] != rj[c]) {
                out[j] = true;
                break;
            }
    }
    return out;
}

/// Spec-level single-sample operation: returns the alternative context
/// representation for batch row i. For batched training the trainer uses
/// plan_positive_context directly over a shared dropout of the whole batch.
inline Value gen_positive_context(std::size_t i, const Value& batch_contexts,
                                  const CiclConfig& cfg, RngStream& rng,
                                  bool* warned_fallback = nullptr) {
    cfg.validate();
    const auto& t = batch_contexts.tensor();
    if (t.shape.size() != 2 || t.shape[0] < 1 || i >= t.shape[0])
        throw std::invalid_argument("gen_positive_context: bad batch or index");
    auto plan = plan_positive_context(i, context_differs(t, i), cfg.neggen_mode, rng);
    if (plan.fell_back && warned_fallback) *warned_fallback = true;
    if (plan.use_dropout) {
        Value own = gather_rows(batch_contexts, {i});
        return dropout(own, cfg.neg_context_dropout, rng);
    }
    return gather_rows(batch_contexts, {plan.sampled});
}

// --- CICL loss ----------------------------------------------------------------

/// InfoNCE-style contrastive loss per batch row:
///   -log exp(cos(a_i, p_i)/tau) / (exp(cos(a_i, p_i)/tau)
///        + sum_m exp(cos(a_i, n_im)/tau))
/// where `negatives` stacks the per-row negatives in groups of
/// `negatives_per_row`. Returns the [B] per-row loss vector.
inline Value cicl_loss_rows(const Value& anchors, const Value& positives, const Value& negatives,
                            std::size_t negatives_per_row, double tau) {
    if (tau <= 0) throw std::invalid_argument("cicl_loss: tau must be > 0");
    const std::size_t B = anchors.tensor().shape[0];
    if (negatives.tensor().shape[0] != B * negatives_per_row)
        throw std::invalid_argument("cicl_loss: negatives count != B * negatives_per_row");
    std::vector<std::size_t> rep(B * negatives_per_row), seg(B * negatives_per_row);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t m = 0; m < negatives_per_row; ++m) {
            rep[i * negatives_per_row + m] = i;
            seg[i * negatives_per_row + m] = i;
        }
    Value pos_scaled = scale(cosine_rows(anchors, positives), 1.0 / tau);
    Value neg_sim = cosine_rows(gather_rows(anchors, rep), negatives);
    Value denom = add(seg_sum(exp_op(scale(neg_sim, 1.0 / tau)), std::move(seg), B),
                      exp_op(pos_scaled));
    return sub(log_op(denom), pos_scaled);
}

/// Single-anchor form: anchor/positive are [1 x d], negatives [M x d].
inline Value cicl_loss(const Value& anchor, const Value& positive, const Value& negatives,
                       double tau) {
    return mean_all(cicl_loss_rows(anchor, positive, negatives,
                                   negatives.tensor().shape[0], tau));
}

// --- disentanglement losses ----------------------------------------------------

/// Head-fitting loss (step 1): 1/2 (MSE(ex, q1(in)) + MSE(in, q2(ex))) per
/// row. Factors are expected to enter detached so gradients reach only the
/// heads.
inline Value bi_appr_loss_rows(const FactorPair& pair, const VariationalHead& q1,
                               const VariationalHead& q2) {
    Value fwd = mse_rows(pair.extrinsic, q1.apply(pair.intrinsic));
    Value bwd = mse_rows(pair.intrinsic, q2.apply(pair.extrinsic));
    return scale(add(fwd, bwd), 0.5);
}

inline Value bi_appr_loss(const FactorPair& pair, const VariationalHead& q1,
                          const VariationalHead& q2) {
    return mean_all(bi_appr_loss_rows(pair, q1, q2));
}

namespace detail {

/// Draws L_dis within-batch indices per row, excluding the row itself.
inline std::vector<std::size_t> dis_negative_indices(std::size_t B, std::size_t l_dis,
                                                     RngStream& rng) {
    if (B < 2) throw std::invalid_argument("dis loss: batch must have >= 2 samples");
    std::vector<std::size_t> idx(B * l_dis);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < l_dis; ++j) {
            std::size_t r;
            do {
                r = rng.index(B);
            } while (r == i);
            idx[i * l_dis + j] = r;
        }
    return idx;
}

struct DisTerms {
    Value pos;      // [B] MSE against own prediction
    Value neg_mean; // [B] mean MSE against other rows' predictions
};

inline DisTerms dis_direction(const Value& target, const Value& preds,
                              const std::vector<std::size_t>& neg_idx, std::size_t l_dis) {
    const std::size_t B = target.tensor().shape[0];
    std::vector<std::size_t> rep(B * l_dis), seg(B * l_dis);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < l_dis; ++j) {
            rep[i * l_dis + j] = i;
            seg[i * l_dis + j] = i;
        }
    Value pos = mse_rows(target, preds);
    Value neg = mse_rows(gather_rows(target, rep), gather_rows(preds, neg_idx));
    Value neg_mean = scale(seg_sum(neg, std::move(seg), B), 1.0 / static_cast<double>(l_dis));
    return {pos, neg_mean};
}

} // namespace detail

/// Bidirectional mutual-information upper-bound surrogate (heads frozen):
/// per row 1/2 ((neg_mean_fwd + neg_mean_bwd) - (pos_fwd + pos_bwd)), averaged
/// over the batch. Gradients reach the factor-producing parameters only.
inline Value bi_dis_loss(const FactorPair& pair, const VariationalHead& q1,
                         const VariationalHead& q2, std::size_t l_dis, RngStream& rng) {
    const std::size_t B = pair.intrinsic.tensor().shape[0];
    auto idx = detail::dis_negative_indices(B, l_dis, rng);
    Value preds_ex = q1.apply_frozen(pair.intrinsic);
    Value preds_in = q2.apply_frozen(pair.extrinsic);
    auto fwd = detail::dis_direction(pair.extrinsic, preds_ex, idx, l_dis);
    auto bwd = detail::dis_direction(pair.intrinsic, preds_in, idx, l_dis);
    Value per_row = scale(sub(add(fwd.neg_mean, bwd.neg_mean), add(fwd.pos, bwd.pos)), 0.5);
    return mean_all(per_row);
}

/// One-directional (q1 only) variant, the asymmetric ablation.
inline Value vclub_loss_asymmetric(const FactorPair& pair, const VariationalHead& q1,
                                   std::size_t l_dis, RngStream& rng) {
    const std::size_t B = pair.intrinsic.tensor().shape[0];
    auto idx = detail::dis_negative_indices(B, l_dis, rng);
    Value preds_ex = q1.apply_frozen(pair.intrinsic);
    auto fwd = detail::dis_direction(pair.extrinsic, preds_ex, idx, l_dis);
    return mean_all(sub(fwd.neg_mean, fwd.pos));
}

/// Step-1 loss for the asymmetric ablation: fit q1 only.
inline Value appr_loss_asymmetric(const FactorPair& pair, const VariationalHead& q1) {
    return mean_all(mse_rows(pair.extrinsic, q1.apply(pair.intrinsic)));
}

} // namespace iedr
