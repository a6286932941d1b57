#pragma once

#include <algorithm>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "data.hpp"
#include "rng.hpp"

namespace iedr {

/// Generator spec for datasets with known intrinsic/extrinsic structure.
/// Selection scores decompose into a context-invariant user-item affinity and
/// a context-driven component, so disentanglement claims can be probed against
/// ground truth.
struct SyntheticSpec {
    std::size_t n_users = 200;
    std::size_t n_items = 500;
    std::size_t n_contexts = 20;
    std::size_t latent_dim = 8;
    double intrinsic_strength = 1.0;
    double extrinsic_strength = 1.0;
    double noise_std = 0.1;
    std::uint64_t seed = 1;
    std::size_t positives_per_context = 1; // top-scoring items emitted per (user, context)
    // This many designated contexts are visited last by every user, so a
    // leave-last-two split evaluates on contexts absent from training: the
    // regime where context-invariance of the intrinsic factor is the only
    // reliable ranking signal. Zero disables the hold-out.
    std::size_t holdout_contexts = 2;
    // Mixes the context taste between a shared per-context vector (0: the
    // extrinsic appeal is a context-item effect every user agrees on) and a
    // per-(user, context) vector (1: the appeal is a genuine user-by-context
    // interaction that no additive user-term + context-term model can fit).
    double user_taste_mix = 0.0;

    void validate() const {
        if (n_users < 2 || n_items < 2 || n_contexts < 2)
            throw std::invalid_argument("SyntheticSpec: all counts must be >= 2");
        if (latent_dim < 1) throw std::invalid_argument("SyntheticSpec: latent_dim must be >= 1");
        if (intrinsic_strength < 0 || extrinsic_strength < 0 || noise_std < 0)
            throw std::invalid_argument("SyntheticSpec: strengths must be >= 0");
        if (positives_per_context < 1 || positives_per_context > n_items)
            throw std::invalid_argument("SyntheticSpec: bad positives_per_context");
        if (holdout_contexts >= n_contexts)
            throw std::invalid_argument("SyntheticSpec: holdout_contexts must be < n_contexts");
        if (user_taste_mix < 0 || user_taste_mix > 1)
            throw std::invalid_argument("SyntheticSpec: user_taste_mix must be in [0,1]");
    }
};

struct SyntheticGroundTruth {
    std::size_t latent_dim = 0;
    // Latent vectors, flattened row-major.
    std::vector<double> user_intrinsic;         // [n_users x dim], g_u
    std::vector<double> item_intrinsic;         // [n_items x dim], g_v
    std::vector<double> context_taste;          // [n_contexts x dim], t_c
    std::vector<double> user_context_taste;     // [n_users x n_contexts x dim], only if mixed in
    std::vector<double> item_context_extrinsic; // [n_items x n_contexts x dim], e_{v,c}
    double user_taste_mix = 0.0;
    std::size_t n_users = 0, n_items = 0, n_contexts = 0;

    void save(const std::string& path) const {
        nlohmann::json j;
        j["latent_dim"] = latent_dim;
        j["n_users"] = n_users;
        j["n_items"] = n_items;
        j["n_contexts"] = n_contexts;
        j["user_intrinsic"] = user_intrinsic;
        j["item_intrinsic"] = item_intrinsic;
        j["context_taste"] = context_taste;
        j["user_context_taste"] = user_context_taste;
        j["user_taste_mix"] = user_taste_mix;
        j["item_context_extrinsic"] = item_context_extrinsic;
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write ground truth: " + path);
        out << j.dump() << '\n';
    }

    static SyntheticGroundTruth load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot read ground truth: " + path);
        nlohmann::json j = nlohmann::json::parse(in);
        SyntheticGroundTruth gt;
        gt.latent_dim = j.at("latent_dim").get<std::size_t>();
        gt.n_users = j.at("n_users").get<std::size_t>();
        gt.n_items = j.at("n_items").get<std::size_t>();
        gt.n_contexts = j.at("n_contexts").get<std::size_t>();
        gt.user_intrinsic = j.at("user_intrinsic").get<std::vector<double>>();
        gt.item_intrinsic = j.at("item_intrinsic").get<std::vector<double>>();
        gt.context_taste = j.at("context_taste").get<std::vector<double>>();
        gt.user_context_taste = j.at("user_context_taste").get<std::vector<double>>();
        gt.user_taste_mix = j.at("user_taste_mix").get<double>();
        gt.item_context_extrinsic = j.at("item_context_extrinsic").get<std::vector<double>>();
        return gt;
    }
};

struct SyntheticDataset {
    Vocabulary vocab;
    std::vector<Instance> instances;
    SyntheticGroundTruth truth;
};

/// Selection score used by the generator:
///   s(u,v,c) = a * <g_u, g_v>/sqrt(dim) + b * <t_c, e_{v,c}>/sqrt(dim) + noise.
/// The first term is invariant to the context. The second is independent of
/// g_u and varies per context: a context-specific item appeal shared by all
/// users (e.g. in-context popularity).
inline SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    RngStream rng(spec.seed, "synthetic");
    const std::size_t D = spec.latent_dim;
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(D));

    SyntheticDataset ds;
    auto draw = [&](std::vector<double>& dst, std::size_t n) {
        dst.resize(n);
        for (auto& v : dst) v = rng.gauss();
    };
    auto& gt = ds.truth;
    gt.latent_dim = D;
    gt.n_users = spec.n_users;
    gt.n_items = spec.n_items;
    gt.n_contexts = spec.n_contexts;
    draw(gt.user_intrinsic, spec.n_users * D);
    draw(gt.item_intrinsic, spec.n_items * D);
    draw(gt.context_taste, spec.n_contexts * D);
    gt.user_taste_mix = spec.user_taste_mix;
    if (spec.user_taste_mix > 0)
        draw(gt.user_context_taste, spec.n_users * spec.n_contexts * D);
    draw(gt.item_context_extrinsic, spec.n_items * spec.n_contexts * D);

    auto dot = [&](const double* a, const double* b) {
        double s = 0.0;
        for (std::size_t k = 0; k < D; ++k) s += a[k] * b[k];
        return s;
    };

    // Register vocabulary entries in a stable order.
    std::vector<std::size_t> user_fid(spec.n_users), item_fid(spec.n_items),
        ctx_fid(spec.n_contexts);
    for (std::size_t u = 0; u < spec.n_users; ++u)
        user_fid[u] = ds.vocab.add("user", "u" + std::to_string(u), FieldGroup::user);
    for (std::size_t v = 0; v < spec.n_items; ++v)
        item_fid[v] = ds.vocab.add("item", "i" + std::to_string(v), FieldGroup::item);
    for (std::size_t c = 0; c < spec.n_contexts; ++c)
        ctx_fid[c] = ds.vocab.add("ctx", "c" + std::to_string(c), FieldGroup::context);

    std::vector<std::size_t> ctx_order(spec.n_contexts);
    std::vector<std::pair<double, std::size_t>> scored(spec.n_items);
    for (std::size_t u = 0; u < spec.n_users; ++u) {
        const double* gu = gt.user_intrinsic.data() + u * D;
        // Random per-user visit order, except that the designated hold-out
        // contexts (the highest ids) always come last.
        std::iota(ctx_order.begin(), ctx_order.end(), std::size_t{0});
        const std::size_t trained = spec.n_contexts - spec.holdout_contexts;
        for (std::size_t i = trained; i > 1; --i)
            std::swap(ctx_order[i - 1], ctx_order[rng.index(i)]);
        for (std::size_t i = spec.holdout_contexts; i > 1; --i)
            std::swap(ctx_order[trained + i - 1], ctx_order[trained + rng.index(i)]);
        long long order = 0;
        const double w_shared = std::sqrt(1.0 - spec.user_taste_mix);
        const double w_user = std::sqrt(spec.user_taste_mix);
        std::vector<double> taste(D);
        for (std::size_t ci = 0; ci < spec.n_contexts; ++ci) {
            const std::size_t c = ctx_order[ci];
            const double* tc = gt.context_taste.data() + c * D;
            const double* tuc = spec.user_taste_mix > 0
                                    ? gt.user_context_taste.data() + (u * spec.n_contexts + c) * D
                                    : nullptr;
            for (std::size_t k = 0; k < D; ++k)
                taste[k] = w_shared * tc[k] + (tuc ? w_user * tuc[k] : 0.0);
            for (std::size_t v = 0; v < spec.n_items; ++v) {
                const double* gv = gt.item_intrinsic.data() + v * D;
                const double* evc =
                    gt.item_context_extrinsic.data() + (v * spec.n_contexts + c) * D;
                double s = spec.intrinsic_strength * dot(gu, gv) * inv_sqrt_d +
                           spec.extrinsic_strength * dot(taste.data(), evc) * inv_sqrt_d;
                if (spec.noise_std > 0) s += spec.noise_std * rng.gauss();
                scored[v] = {s, v};
            }
            std::partial_sort(scored.begin(), scored.begin() + spec.positives_per_context,
                              scored.end(), [](const auto& a, const auto& b) {
                                  return a.first > b.first ||
                                         (a.first == b.first && a.second < b.second);
                              });
            for (std::size_t k = 0; k < spec.positives_per_context; ++k) {
                const std::size_t v = scored[k].second;
                Instance inst;
                inst.label = 1;
                inst.user_key = "u" + std::to_string(u);
                inst.item_key = "i" + std::to_string(v);
                inst.order_key = order++;
                inst.user_feats = {user_fid[u]};
                inst.item_feats = {item_fid[v]};
                inst.context_feats = {ctx_fid[c]};
                ds.instances.push_back(std::move(inst));
            }
        }
    }
    return ds;
}

/// Context index of an instance in a synthetic dataset (single "ctx" feature).
inline std::size_t synthetic_context_id(const Instance& inst, const Vocabulary& vocab) {
    const auto& e = vocab.entry(inst.context_feats.at(0));
    return static_cast<std::size_t>(std::stoull(e.value.substr(1)));
}

} // namespace iedr
