#pragma once

#include <future>
#include <iomanip>
#include <map>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "data.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "probes.hpp"

namespace iedr {

struct EvalConfig {
    std::size_t eval_negatives = 99;
    bool exclude_train_items = true;
    std::uint64_t seed = 1;
    std::size_t jobs = 1;
};

using UserHistory = std::unordered_map<std::string, std::unordered_set<std::size_t>>;

/// Ranks each test positive against sampled candidate items under the full
/// prediction pipeline. Candidate draws use per-instance derived streams, so
/// results do not depend on processing order or worker count.
inline MetricsReport evaluate(const IedrModel& model, const std::vector<Instance>& test,
                              const ItemCatalog& catalog, const UserHistory& history,
                              const EvalConfig& cfg, bool* warned_reduced = nullptr) {
    if (test.empty()) throw std::invalid_argument("evaluate: empty test set");

    // Per-instance values land in index-addressed slots and are reduced in
    // index order, so the report is bit-identical for any worker count.
    struct Row {
        double ndcg5, ndcg10, recall5, recall10, auc;
        bool reduced;
    };
    std::vector<Row> rows(test.size());

    auto run_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const Instance& pos = test[i];
            RngStream rng(derive_seed(cfg.seed, "eval.instance", i), "eval");
            const std::unordered_set<std::size_t>* excl = nullptr;
            if (cfg.exclude_train_items) {
                auto it = history.find(pos.user_key);
                if (it != history.end()) excl = &it->second;
            }
            auto cands = sample_eval_candidates(pos, catalog, cfg.eval_negatives, rng, excl);
            std::vector<const std::vector<std::size_t>*> item_sets;
            std::vector<std::string> keys;
            item_sets.reserve(cands.size() + 1);
            keys.reserve(cands.size() + 1);
            item_sets.push_back(&pos.item_feats);
            keys.push_back(pos.item_key);
            for (auto c : cands) {
                item_sets.push_back(&catalog.feats(c));
                keys.push_back(catalog.key(c));
            }
            auto scores = model.score_candidates(pos.user_feats, pos.context_feats, item_sets);
            auto ranked = make_ranked_list(keys, scores, 0, rng);
            rows[i] = {ndcg_at_k(ranked, 5),
                       ndcg_at_k(ranked, 10),
                       recall_at_k(ranked, 5),
                       recall_at_k(ranked, 10),
                       auc(scores[0], {scores.begin() + 1, scores.end()}),
                       cands.size() < cfg.eval_negatives};
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, cfg.jobs);
    if (jobs == 1 || test.size() < 2 * jobs) {
        run_range(0, test.size());
    } else {
        std::vector<std::future<void>> futs;
        const std::size_t chunk = (test.size() + jobs - 1) / jobs;
        for (std::size_t lo = 0; lo < test.size(); lo += chunk)
            futs.push_back(std::async(std::launch::async, run_range, lo,
                                      std::min(lo + chunk, test.size())));
        for (auto& f : futs) f.get();
    }

    MetricsReport total;
    bool reduced = false;
    for (const auto& r : rows) {
        total.ndcg5 += r.ndcg5;
        total.ndcg10 += r.ndcg10;
        total.recall5 += r.recall5;
        total.recall10 += r.recall10;
        total.auc += r.auc;
        reduced = reduced || r.reduced;
    }
    total.count = rows.size();
    const double n = static_cast<double>(total.count);
    total.ndcg5 /= n;
    total.ndcg10 /= n;
    total.recall5 /= n;
    total.recall10 /= n;
    total.auc /= n;
    if (warned_reduced) *warned_reduced = reduced;
    return total;
}

inline void write_metrics_csv(std::ostream& os, const MetricsReport& m) {
    os << "ndcg@5,ndcg@10,recall@5,recall@10,auc,instances\n";
    os << std::setprecision(17) << m.ndcg5 << ',' << m.ndcg10 << ',' << m.recall5 << ','
       << m.recall10 << ',' << m.auc << ',' << m.count << '\n';
}

// --- representation export -----------------------------------------------------

enum class FactorKind { intrinsic, extrinsic, both };

inline FactorKind factor_kind_from(const std::string& s) {
    if (s == "intrinsic") return FactorKind::intrinsic;
    if (s == "extrinsic") return FactorKind::extrinsic;
    if (s == "both") return FactorKind::both;
    throw std::invalid_argument("unknown factor kind: " + s);
}

/// One CSV row per (instance, factor type): instance id, side, factor label,
/// then the d factor values.
inline void export_representations(const IedrModel& model, const std::vector<Instance>& instances,
                                   FactorKind which, Side side, std::ostream& os) {
    const std::size_t d = model.config().dim();
    os << "instance,side,factor";
    for (std::size_t k = 0; k < d; ++k) os << ",v" << k;
    os << '\n';
    os << std::setprecision(17);
    const char* side_name = side == Side::user ? "user" : "item";
    constexpr std::size_t kChunk = 512;
    for (std::size_t lo = 0; lo < instances.size(); lo += kChunk) {
        const std::size_t hi = std::min(lo + kChunk, instances.size());
        std::vector<const Instance*> batch;
        for (std::size_t i = lo; i < hi; ++i) batch.push_back(&instances[i]);
        FactorPair pair = model.instance_factors(side, batch);
        auto emit = [&](const Tensor& t, const char* label) {
            for (std::size_t r = 0; r < t.shape[0]; ++r) {
                os << (lo + r) << ',' << side_name << ',' << label;
                for (std::size_t k = 0; k < d; ++k) os << ',' << t.at(r, k);
                os << '\n';
            }
        };
        if (which != FactorKind::extrinsic) emit(pair.intrinsic.tensor(), "intrinsic");
        if (which != FactorKind::intrinsic) emit(pair.extrinsic.tensor(), "extrinsic");
    }
}

// --- matching-score case study ----------------------------------------------------

/// Per-context intrinsic and extrinsic matching scores of one user against an
/// item subset, plus top-100 lists per factor.
struct MatchingScores {
    std::vector<std::vector<double>> intrinsic, extrinsic;        // [context][item]
    std::vector<std::vector<std::size_t>> top_intrinsic, top_extrinsic; // item subset indices
};

inline MatchingScores
matching_scores(const IedrModel& model, const std::vector<std::size_t>& user_feats,
                const std::vector<std::vector<std::size_t>>& contexts,
                const std::vector<const std::vector<std::size_t>*>& item_sets) {
    if (contexts.empty() || item_sets.empty())
        throw std::invalid_argument("matching_scores: need contexts and items");
    MatchingScores out;
    Value u = model.encode_user_set(user_feats);
    Value items = model.encode_item_sets(item_sets);
    const std::size_t n = item_sets.size();
    const std::size_t top = std::min<std::size_t>(100, n);
    std::vector<std::size_t> rep(n, 0);
    for (const auto& ctx_feats : contexts) {
        Value c = model.encode_context_set(ctx_feats);
        FactorPair fu = model.factors(Side::user, u, c);
        FactorPair fv = model.factors(Side::item, items, gather_rows(c, rep));
        Value s_in = dot_rows(gather_rows(fu.intrinsic, rep), fv.intrinsic);
        Value s_ex = dot_rows(gather_rows(fu.extrinsic, rep), fv.extrinsic);
        out.intrinsic.push_back(s_in.tensor().data);
        out.extrinsic.push_back(s_ex.tensor().data);
        auto top_of = [&](const std::vector<double>& scores) {
            std::vector<std::size_t> idx(n);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            std::stable_sort(idx.begin(), idx.end(),
                             [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
            idx.resize(top);
            return idx;
        };
        out.top_intrinsic.push_back(top_of(out.intrinsic.back()));
        out.top_extrinsic.push_back(top_of(out.extrinsic.back()));
    }
    return out;
}

inline void write_matching_csv(std::ostream& os, const MatchingScores& ms,
                               const std::vector<std::string>& item_keys) {
    os << "context,item,intrinsic_score,extrinsic_score\n";
    os << std::setprecision(17);
    for (std::size_t c = 0; c < ms.intrinsic.size(); ++c)
        for (std::size_t i = 0; i < ms.intrinsic[c].size(); ++i)
            os << c << ',' << item_keys[i] << ',' << ms.intrinsic[c][i] << ','
               << ms.extrinsic[c][i] << '\n';
}

// --- disentanglement report ---------------------------------------------------------

struct DisentanglementReport {
    double mine_intrinsic_ctx = 0, mine_extrinsic_ctx = 0;
    double club_intrinsic_ctx = 0, club_extrinsic_ctx = 0;
    double probe_acc_intrinsic = 0, probe_acc_extrinsic = 0;
    double cross_context_cosine = 0;
    std::size_t samples = 0, n_contexts = 0;
};

namespace detail {

/// Multinomial logistic probe; returns in-sample accuracy.
inline double linear_probe_accuracy(const Tensor& x, const std::vector<std::size_t>& labels,
                                    std::size_t n_classes, std::uint64_t seed,
                                    std::size_t epochs = 150, double lr = 0.05) {
    const std::size_t N = x.shape[0];
    RngStream init(seed, "probe.linear");
    ParameterStore store;
    AffineLayer lin = AffineLayer::create(store, "probe", x.shape[1], n_classes, init,
                                          Group::omega);
    Adam opt(store.group(Group::omega), lr);
    Value xv = Value::constant(x);
    std::vector<std::size_t> seg(N * n_classes);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t k = 0; k < n_classes; ++k) seg[i * n_classes + k] = i;
    for (std::size_t e = 0; e < epochs; ++e) {
        Value logits = lin.apply(xv);
        // Rowwise stabilized log-sum-exp via constant row maxima.
        Tensor shift({N, n_classes});
        Tensor maxv({N});
        for (std::size_t i = 0; i < N; ++i) {
            double m = logits.tensor().at(i, 0);
            for (std::size_t k = 1; k < n_classes; ++k) m = std::max(m, logits.tensor().at(i, k));
            maxv.data[i] = m;
            for (std::size_t k = 0; k < n_classes; ++k) shift.at(i, k) = -m;
        }
        Value lse = add(log_op(seg_sum(flatten(exp_op(add(logits, Value::constant(shift)))), seg,
                                       N)),
                        Value::constant(maxv));
        Value loss = mean_all(sub(lse, pick(logits, labels)));
        opt.zero_grad();
        backward(loss);
        opt.step();
    }
    Value logits = lin.apply(xv);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < N; ++i) {
        std::size_t arg = 0;
        for (std::size_t k = 1; k < n_classes; ++k)
            if (logits.tensor().at(i, k) > logits.tensor().at(i, arg)) arg = k;
        if (arg == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(N);
}

} // namespace detail

/// Verifies the factor-learning claims on a dataset with enumerable contexts:
/// MI probes between each factor and the context identity, a linear probe
/// predicting the context from each factor, and the cross-context cosine of
/// the intrinsic factor for the same user.
inline DisentanglementReport disentanglement_report(const IedrModel& model,
                                                    const std::vector<Instance>& instances,
                                                    const ProbeConfig& probe_cfg,
                                                    std::uint64_t seed,
                                                    std::size_t max_samples = 4000) {
    if (instances.empty()) throw std::invalid_argument("disentanglement_report: no instances");
    // Dense context ids from distinct context feature sets.
    std::map<std::vector<std::size_t>, std::size_t> ctx_ids;
    for (const auto& inst : instances) ctx_ids.try_emplace(inst.context_feats, ctx_ids.size());
    const std::size_t K = ctx_ids.size();
    if (K < 2) throw std::invalid_argument("disentanglement_report: need >= 2 distinct contexts");

    // Deterministic subsample.
    std::vector<std::size_t> idx(instances.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    RngStream rng(seed, "report.sample");
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
    idx.resize(std::min(max_samples, idx.size()));

    std::vector<const Instance*> batch;
    std::vector<std::size_t> labels;
    for (auto i : idx) {
        batch.push_back(&instances[i]);
        labels.push_back(ctx_ids.at(instances[i].context_feats));
    }
    FactorPair pair = model.instance_factors(Side::user, batch);
    const Tensor o_in = pair.intrinsic.tensor();
    const Tensor o_ex = pair.extrinsic.tensor();
    Tensor onehot({labels.size(), K});
    for (std::size_t i = 0; i < labels.size(); ++i) onehot.at(i, labels[i]) = 1.0;

    DisentanglementReport rep;
    rep.samples = labels.size();
    rep.n_contexts = K;
    rep.mine_intrinsic_ctx = probe_mine(o_in, onehot, probe_cfg);
    rep.mine_extrinsic_ctx = probe_mine(o_ex, onehot, probe_cfg);
    rep.club_intrinsic_ctx = probe_club(o_in, onehot, probe_cfg);
    rep.club_extrinsic_ctx = probe_club(o_ex, onehot, probe_cfg);
    rep.probe_acc_intrinsic = detail::linear_probe_accuracy(o_in, labels, K, seed);
    rep.probe_acc_extrinsic = detail::linear_probe_accuracy(o_ex, labels, K, seed);

    // Cross-context cosine of the intrinsic factor per user.
    std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> pick_rows;
    std::unordered_map<std::string, std::size_t> first_row;
    for (std::size_t r = 0; r < batch.size(); ++r) {
        const auto& key = batch[r]->user_key;
        auto it = first_row.find(key);
        if (it == first_row.end()) {
            first_row[key] = r;
        } else if (!pick_rows.count(key) && labels[it->second] != labels[r]) {
            pick_rows[key] = {it->second, r};
        }
    }
    double cos_sum = 0.0;
    std::size_t cos_n = 0;
    const std::size_t d = o_in.shape[1];
    for (const auto& [key, rows] : pick_rows) {
        const double* a = o_in.data.data() + rows.first * d;
        const double* b = o_in.data.data() + rows.second * d;
        double s = 0, na = 0, nb = 0;
        for (std::size_t k = 0; k < d; ++k) {
            s += a[k] * b[k];
            na += a[k] * a[k];
            nb += b[k] * b[k];
        }
        if (na > 0 && nb > 0) {
            cos_sum += s / std::sqrt(na * nb);
            ++cos_n;
        }
    }
    rep.cross_context_cosine = cos_n ? cos_sum / static_cast<double>(cos_n) : 0.0;
    return rep;
}

inline void write_report(std::ostream& os, const DisentanglementReport& r) {
    os << std::setprecision(10);
    os << "samples," << r.samples << "\n";
    os << "contexts," << r.n_contexts << "\n";
    os << "mine_intrinsic_ctx," << r.mine_intrinsic_ctx << "\n";
    os << "mine_extrinsic_ctx," << r.mine_extrinsic_ctx << "\n";
    os << "club_intrinsic_ctx," << r.club_intrinsic_ctx << "\n";
    os << "club_extrinsic_ctx," << r.club_extrinsic_ctx << "\n";
    os << "probe_acc_intrinsic," << r.probe_acc_intrinsic << "\n";
    os << "probe_acc_extrinsic," << r.probe_acc_extrinsic << "\n";
    os << "cross_context_cosine," << r.cross_context_cosine << "\n";
}

} // namespace iedr
