#pragma once

#include <chrono>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>

#include "eval.hpp"
#include "model.hpp"

namespace iedr {

/// Raised when a loss term goes non-finite; carries the per-term dump.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainOptions {
    std::size_t batch_size = 1024;
    std::size_t epochs = 20;
    double lr = 1e-3;
    std::string optimizer = "adam";
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    std::uint64_t seed = 1;
    bool cicl_on = true;
    CiclConfig cicl;
    DisConfig dis;
    std::size_t patience = 5;
    std::size_t step1_every = 1; // run the head-fitting step every k batches
    std::size_t step1_steps = 1; // head-fitting optimizer repetitions per run
    EvalConfig eval;

    void validate() const {
        if (batch_size < 2) throw std::invalid_argument("TrainOptions: batch_size must be >= 2");
        if (lambda1 < 0 || lambda2 < 0)
            throw std::invalid_argument("TrainOptions: lambdas must be >= 0");
        if (step1_every < 1) throw std::invalid_argument("TrainOptions: step1_every must be >= 1");
        if (step1_steps < 1) throw std::invalid_argument("TrainOptions: step1_steps must be >= 1");
        cicl.validate();
        dis.validate();
    }
};

struct LossReport {
    double rp = 0, cicl_u = 0, cicl_v = 0, dis_u = 0, dis_v = 0, appr_u = 0, appr_v = 0,
           total = 0;
};

struct EpochLog {
    std::size_t epoch = 0;
    LossReport mean;
    double val_ndcg10 = 0;
    double wall_ms_per_batch = 0;
    std::size_t batches = 0;
};

struct FitResult {
    std::vector<EpochLog> log;
    double best_val_ndcg10 = 0;
    std::size_t best_epoch = 0;
};

inline void write_training_log(std::ostream& os, const std::vector<EpochLog>& log) {
    os << "epoch,L_RP,L_CICL_u,L_CICL_v,L_Dis_u,L_Dis_v,L_bi_appr_u,L_bi_appr_v,"
          "val_NDCG@10,wall_ms_per_batch\n";
    os << std::setprecision(17);
    for (const auto& e : log)
        os << e.epoch << ',' << e.mean.rp << ',' << e.mean.cicl_u << ',' << e.mean.cicl_v << ','
           << e.mean.dis_u << ',' << e.mean.dis_v << ',' << e.mean.appr_u << ',' << e.mean.appr_v
           << ',' << e.val_ndcg10 << ',' << e.wall_ms_per_batch << '\n';
}

/// Two-step alternating batch trainer. Per batch: build the full loss graph
/// once; step 1 fits the variational heads (theta) against detached factors,
/// step 2 updates everything else (omega) against the combined risk with the
/// heads entering as constants.
class Trainer {
public:
    Trainer(IedrModel& model, const TrainOptions& opt)
        : model_(model),
          opt_(opt),
          shuffle_(opt.seed, "train.shuffle"),
          sampling_(opt.seed, "train.sampling"),
          dropout_(opt.seed, "train.dropout") {
        opt_.validate();
        theta_opt_ = make_optimizer(opt_.optimizer, model_.params().group(Group::theta), opt_.lr);
        omega_opt_ = make_optimizer(opt_.optimizer, model_.params().group(Group::omega), opt_.lr);
    }

    const TrainOptions& options() const { return opt_; }
    bool neggen_fallback_warned() const { return neggen_fallback_warned_; }

    LossReport train_step(const std::vector<const Instance*>& batch) {
        if (batch.size() < 2) throw std::invalid_argument("train_step: batch must have >= 2 rows");
        const bool dis_on = opt_.dis.mode != DisMode::Off;

        Value U = model_.encode_users(batch);
        Value V = model_.encode_items(batch);
        Value C = model_.encode_contexts(batch);
        FactorPair pu = model_.factors(Side::user, U, C);
        FactorPair pv = model_.factors(Side::item, V, C);

        std::vector<double> labels;
        labels.reserve(batch.size());
        for (const auto* inst : batch) labels.push_back(static_cast<double>(inst->label));
        Value l_rp = rp_loss(predict_probs(pu, pv), std::move(labels));

        Value l_cicl_u, l_cicl_v;
        if (opt_.cicl_on) {
            auto ctx_class = context_classes(C.tensor());
            l_cicl_u = cicl_side_loss(Side::user, U, C, pu.intrinsic, ctx_class);
            l_cicl_v = cicl_side_loss(Side::item, V, C, pv.intrinsic, ctx_class);
        }

        Value l_dis_u, l_dis_v, l_appr_u, l_appr_v;
        FactorPair pu_det, pv_det;
        if (dis_on) {
            pu_det = {pu.intrinsic.detach(), pu.extrinsic.detach()};
            pv_det = {pv.intrinsic.detach(), pv.extrinsic.detach()};
            if (opt_.dis.mode == DisMode::BiDis) {
                l_dis_u = bi_dis_loss(pu, model_.q1(Side::user), model_.q2(Side::user),
                                      opt_.dis.num_negatives, sampling_);
                l_dis_v = bi_dis_loss(pv, model_.q1(Side::item), model_.q2(Side::item),
                                      opt_.dis.num_negatives, sampling_);
                l_appr_u = bi_appr_loss(pu_det, model_.q1(Side::user), model_.q2(Side::user));
                l_appr_v = bi_appr_loss(pv_det, model_.q1(Side::item), model_.q2(Side::item));
            } else {
                l_dis_u = vclub_loss_asymmetric(pu, model_.q1(Side::user),
                                                opt_.dis.num_negatives, sampling_);
                l_dis_v = vclub_loss_asymmetric(pv, model_.q1(Side::item),
                                                opt_.dis.num_negatives, sampling_);
                l_appr_u = appr_loss_asymmetric(pu_det, model_.q1(Side::user));
                l_appr_v = appr_loss_asymmetric(pv_det, model_.q1(Side::item));
            }
        }

        Value total = l_rp;
        if (opt_.cicl_on) total = add(total, scale(add(l_cicl_u, l_cicl_v), opt_.lambda1));
        if (dis_on) total = add(total, scale(add(l_dis_u, l_dis_v), opt_.lambda2));

        LossReport rep;
        rep.rp = l_rp.tensor().value();
        rep.cicl_u = opt_.cicl_on ? l_cicl_u.tensor().value() : 0.0;
        rep.cicl_v = opt_.cicl_on ? l_cicl_v.tensor().value() : 0.0;
        rep.dis_u = dis_on ? l_dis_u.tensor().value() : 0.0;
        rep.dis_v = dis_on ? l_dis_v.tensor().value() : 0.0;
        rep.appr_u = dis_on ? l_appr_u.tensor().value() : 0.0;
        rep.appr_v = dis_on ? l_appr_v.tensor().value() : 0.0;
        rep.total = total.tensor().value();
        check_finite(rep);

        model_.params().zero_grad_all();
        if (dis_on && step_counter_ % opt_.step1_every == 0) {
            Value appr = add(l_appr_u, l_appr_v);
            for (std::size_t rep = 0; rep < opt_.step1_steps; ++rep) {
                if (rep > 0) {
                    // The heads moved; the head-fitting graph must be rebuilt.
                    appr = opt_.dis.mode == DisMode::BiDis
                               ? add(bi_appr_loss(pu_det, model_.q1(Side::user),
                                                  model_.q2(Side::user)),
                                     bi_appr_loss(pv_det, model_.q1(Side::item),
                                                  model_.q2(Side::item)))
                               : add(appr_loss_asymmetric(pu_det, model_.q1(Side::user)),
                                     appr_loss_asymmetric(pv_det, model_.q1(Side::item)));
                }
                backward(appr);
                theta_opt_->step();
                theta_opt_->zero_grad();
            }
        }
        backward(total);
        omega_opt_->step();
        ++step_counter_;
        return rep;
    }

    FitResult fit(const std::vector<Instance>& train, const std::vector<Instance>& valid,
                  const ItemCatalog& catalog, const UserHistory& history) {
        if (train.empty()) throw std::invalid_argument("fit: empty training set");
        FitResult result;
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto best = model_.params().snapshot();
        double best_ndcg = -1.0;
        std::size_t stale = 0;
        for (std::size_t epoch = 0; epoch < opt_.epochs; ++epoch) {
            for (std::size_t i = order.size(); i > 1; --i)
                std::swap(order[i - 1], order[shuffle_.index(i)]);
            LossReport sum;
            std::size_t batches = 0;
            auto t0 = std::chrono::steady_clock::now();
            for (std::size_t lo = 0; lo < order.size(); lo += opt_.batch_size) {
                const std::size_t hi = std::min(lo + opt_.batch_size, order.size());
                if (hi - lo < 2) break; // a single leftover row cannot form a batch
                std::vector<const Instance*> batch;
                batch.reserve(hi - lo);
                for (std::size_t k = lo; k < hi; ++k) batch.push_back(&train[order[k]]);
                LossReport r = train_step(batch);
                sum.rp += r.rp;
                sum.cicl_u += r.cicl_u;
                sum.cicl_v += r.cicl_v;
                sum.dis_u += r.dis_u;
                sum.dis_v += r.dis_v;
                sum.appr_u += r.appr_u;
                sum.appr_v += r.appr_v;
                sum.total += r.total;
                ++batches;
            }
            auto t1 = std::chrono::steady_clock::now();
            const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(1, batches));
            EpochLog log;
            log.epoch = epoch;
            log.mean = {sum.rp * inv,     sum.cicl_u * inv, sum.cicl_v * inv, sum.dis_u * inv,
                        sum.dis_v * inv,  sum.appr_u * inv, sum.appr_v * inv, sum.total * inv};
            log.wall_ms_per_batch =
                std::chrono::duration<double, std::milli>(t1 - t0).count() * inv;
            log.batches = batches;
            if (!valid.empty())
                log.val_ndcg10 = evaluate(model_, valid, catalog, history, opt_.eval).ndcg10;
            result.log.push_back(log);
            if (log.val_ndcg10 > best_ndcg) {
                best_ndcg = log.val_ndcg10;
                best = model_.params().snapshot();
                result.best_epoch = epoch;
                stale = 0;
            } else if (++stale >= opt_.patience) {
                break;
            }
        }
        model_.params().restore(best);
        result.best_val_ndcg10 = best_ndcg;
        return result;
    }

private:
    /// Equality classes of context rows (contexts are equal iff their encoded
    /// rows are identical).
    static std::vector<std::size_t> context_classes(const Tensor& c) {
        const std::size_t B = c.shape[0], d = c.shape[1];
        std::vector<std::size_t> cls(B);
        std::vector<std::size_t> reps;
        for (std::size_t i = 0; i < B; ++i) {
            bool found = false;
            for (auto r : reps) {
                bool eq = true;
                for (std::size_t k = 0; k < d; ++k)
                    if (c.at(i, k) != c.at(r, k)) {
                        eq = false;
                        break;
                    }
                if (eq) {
                    cls[i] = cls[r];
                    found = true;
                    break;
                }
            }
            if (!found) {
                cls[i] = reps.size();
                reps.push_back(i);
            }
        }
        return cls;
    }

    /// Contrastive loss of one side, per Algorithm 1: anchor (o_in)_ii reuses
    /// the prediction-path factors; the positive re-runs f_ie under an
    /// alternative context; 2L negatives come from random other batch users
    /// under c_i and c_j.
    Value cicl_side_loss(Side side, const Value& entities, const Value& contexts,
                         const Value& anchors, const std::vector<std::size_t>& ctx_class) {
        const std::size_t B = entities.tensor().shape[0];
        const std::size_t L = opt_.cicl.num_negatives;
        const auto& gen = model_.factor_generator(side);

        if (gen.config().variant == FactorVariant::Split) {
            // The split generator's intrinsic path never sees the context, so
            // context swaps are vacuous; contrast dropout views of the
            // intrinsic representation instead (standard InfoNCE).
            const double p = opt_.cicl.neg_context_dropout;
            Value positives = dropout_view(anchors, p);
            std::vector<std::size_t> ent_idx(B * 2 * L);
            for (std::size_t i = 0; i < B; ++i)
                for (std::size_t m = 0; m < 2 * L; ++m) {
                    std::size_t other;
                    do {
                        other = sampling_.index(B);
                    } while (other == i);
                    ent_idx[i * 2 * L + m] = other;
                }
            Value negatives = dropout_view(gather_rows(anchors, ent_idx), p);
            return mean_all(cicl_loss_rows(anchors, positives, negatives, 2 * L, opt_.cicl.tau));
        }

        Value dropped = dropout(contexts, opt_.cicl.neg_context_dropout, dropout_);
        std::vector<std::size_t> pos_idx(B);
        std::vector<bool> differs(B);
        for (std::size_t i = 0; i < B; ++i) {
            for (std::size_t j = 0; j < B; ++j) differs[j] = ctx_class[j] != ctx_class[i];
            auto plan = plan_positive_context(i, differs, opt_.cicl.neggen_mode, sampling_);
            if (plan.fell_back) neggen_fallback_warned_ = true;
            pos_idx[i] = plan.use_dropout ? B + i : plan.sampled;
        }
        Value pos_ctx = gather_rows(concat_rows(contexts, dropped), pos_idx);
        Value positives = gen.generate_intrinsic(entities, pos_ctx);

        std::vector<std::size_t> ent_idx(B * 2 * L), ctx_idx(B * 2 * L);
        for (std::size_t i = 0; i < B; ++i)
            for (std::size_t m = 0; m < 2 * L; ++m) {
                std::size_t other;
                do {
                    other = sampling_.index(B);
                } while (other == i);
                ent_idx[i * 2 * L + m] = other;
                ctx_idx[i * 2 * L + m] = m < L ? i : B + i; // c_i then c_j
            }
        Value neg_ctx = gather_rows(concat_rows(contexts, pos_ctx), ctx_idx);
        Value negatives = gen.generate_intrinsic(gather_rows(entities, ent_idx), neg_ctx);
        return mean_all(cicl_loss_rows(anchors, positives, negatives, 2 * L, opt_.cicl.tau));
    }

    /// Inverted-dropout view with at least one surviving entry per row, since
    /// these views feed a cosine that rejects zero-norm rows.
    Value dropout_view(const Value& x, double rate) {
        const std::size_t N = x.tensor().shape[0], d = x.tensor().shape[1];
        Tensor mask({N, d});
        const double keep = 1.0 / (1.0 - rate);
        for (std::size_t r = 0; r < N; ++r) {
            bool any = false;
            while (!any) {
                for (std::size_t c = 0; c < d; ++c) {
                    const double m = dropout_.uniform(0.0, 1.0) < rate ? 0.0 : keep;
                    mask.at(r, c) = m;
                    any = any || m != 0.0;
                }
            }
        }
        return mul(x, Value::constant(mask));
    }

    void check_finite(const LossReport& r) const {
        auto bad = [](double v) { return !std::isfinite(v); };
        if (bad(r.rp) || bad(r.cicl_u) || bad(r.cicl_v) || bad(r.dis_u) || bad(r.dis_v) ||
            bad(r.appr_u) || bad(r.appr_v) || bad(r.total)) {
            std::ostringstream os;
            os << "non-finite loss term; magnitudes: rp=" << r.rp << " cicl_u=" << r.cicl_u
               << " cicl_v=" << r.cicl_v << " dis_u=" << r.dis_u << " dis_v=" << r.dis_v
               << " appr_u=" << r.appr_u << " appr_v=" << r.appr_v << " total=" << r.total;
            throw NumericError(os.str());
        }
    }

    IedrModel& model_;
    TrainOptions opt_;
    std::unique_ptr<Optimizer> theta_opt_, omega_opt_;
    RngStream shuffle_, sampling_, dropout_;
    std::size_t step_counter_ = 0;
    bool neggen_fallback_warned_ = false;
};

} // namespace iedr
