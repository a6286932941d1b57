#pragma once

#include <string>
#include <vector>

#include "cied.hpp"
#include "data.hpp"
#include "encoder.hpp"
#include "factors.hpp"
#include "params.hpp"

namespace iedr {

struct ModelConfig {
    EncoderConfig encoder;
    FactorConfig factors;
    std::size_t q_hidden = 128;
    std::uint64_t seed = 1;

    std::size_t dim() const { return encoder.embed_dim; }
};

enum class Side { user, item };

/// The full recommendation model: a shared embedding table, per-side feature
/// encoders (context encoder shared between sides), two factor generators and
/// four variational heads. Parameter creation order is fixed so a given
/// (vocab size, config, seed) always produces the same initial state.
class IedrModel {
public:
    IedrModel(std::size_t vocab_size, const ModelConfig& cfg) : cfg_(cfg) {
        cfg_.encoder.validate();
        cfg_.factors.validate();
        RngStream init(cfg_.seed, "init");
        embeddings_ = store_.create("embeddings",
                                    init_embedding(vocab_size, cfg_.dim(), init), Group::omega);
        enc_user_ = FeatureEncoder::create(store_, "encoder.user", cfg_.encoder, init);
        enc_item_ = FeatureEncoder::create(store_, "encoder.item", cfg_.encoder, init);
        enc_ctx_ = FeatureEncoder::create(store_, "encoder.ctx", cfg_.encoder, init);
        fie_u_ = FactorGenerator::create(store_, "fie.user", cfg_.dim(), cfg_.factors, init);
        fie_v_ = FactorGenerator::create(store_, "fie.item", cfg_.dim(), cfg_.factors, init);
        q1_u_ = VariationalHead::create(store_, "q1.user", cfg_.dim(), cfg_.q_hidden, init);
        q2_u_ = VariationalHead::create(store_, "q2.user", cfg_.dim(), cfg_.q_hidden, init);
        q1_v_ = VariationalHead::create(store_, "q1.item", cfg_.dim(), cfg_.q_hidden, init);
        q2_v_ = VariationalHead::create(store_, "q2.item", cfg_.dim(), cfg_.q_hidden, init);
    }

    const ModelConfig& config() const { return cfg_; }
    ParameterStore& params() { return store_; }
    const ParameterStore& params() const { return store_; }
    const Value& embeddings() const { return embeddings_; }

    const FactorGenerator& factor_generator(Side s) const {
        return s == Side::user ? fie_u_ : fie_v_;
    }
    const VariationalHead& q1(Side s) const { return s == Side::user ? q1_u_ : q1_v_; }
    const VariationalHead& q2(Side s) const { return s == Side::user ? q2_u_ : q2_v_; }

    Value encode_users(const std::vector<const Instance*>& batch) const {
        return enc_user_.encode_batch(embeddings_, feature_sets(batch, Side::user));
    }
    Value encode_items(const std::vector<const Instance*>& batch) const {
        return enc_item_.encode_batch(embeddings_, feature_sets(batch, Side::item));
    }
    Value encode_contexts(const std::vector<const Instance*>& batch) const {
        std::vector<const std::vector<std::size_t>*> sets;
        sets.reserve(batch.size());
        for (const auto* inst : batch) sets.push_back(&inst->context_feats);
        return enc_ctx_.encode_batch(embeddings_, sets);
    }

    Value encode_item_sets(const std::vector<const std::vector<std::size_t>*>& sets) const {
        return enc_item_.encode_batch(embeddings_, sets);
    }
    Value encode_user_set(const std::vector<std::size_t>& ids) const {
        return enc_user_.encode(embeddings_, ids);
    }
    Value encode_context_set(const std::vector<std::size_t>& ids) const {
        return enc_ctx_.encode(embeddings_, ids);
    }

    FactorPair factors(Side s, const Value& entity, const Value& ctx) const {
        return factor_generator(s).generate(entity, ctx);
    }

    /// Selection probabilities for a one-user, many-candidate-items query: the
    /// evaluation hot path. User and context are encoded once and broadcast.
    std::vector<double> score_candidates(const std::vector<std::size_t>& user_feats,
                                         const std::vector<std::size_t>& ctx_feats,
                                         const std::vector<const std::vector<std::size_t>*>&
                                             item_sets) const {
        Value u = encode_user_set(user_feats);
        Value c = encode_context_set(ctx_feats);
        Value items = encode_item_sets(item_sets);
        FactorPair fu = factors(Side::user, u, c);
        FactorPair fv = factors(Side::item, items,
                                gather_rows(c, std::vector<std::size_t>(item_sets.size(), 0)));
        std::vector<std::size_t> rep(item_sets.size(), 0);
        Value usum = gather_rows(add(fu.intrinsic, fu.extrinsic), rep);
        Value probs = sigmoid(dot_rows(usum, add(fv.intrinsic, fv.extrinsic)));
        return probs.tensor().data;
    }

    /// Factor pairs for a list of instances (both sides available for export
    /// and probing).
    FactorPair instance_factors(Side s, const std::vector<const Instance*>& batch) const {
        Value ctx = encode_contexts(batch);
        Value ent = s == Side::user ? encode_users(batch) : encode_items(batch);
        return factors(s, ent, ctx);
    }

private:
    std::vector<const std::vector<std::size_t>*>
    feature_sets(const std::vector<const Instance*>& batch, Side s) const {
        std::vector<const std::vector<std::size_t>*> sets;
        sets.reserve(batch.size());
        for (const auto* inst : batch)
            sets.push_back(s == Side::user ? &inst->user_feats : &inst->item_feats);
        return sets;
    }

    ModelConfig cfg_;
    ParameterStore store_;
    Value embeddings_;
    FeatureEncoder enc_user_, enc_item_, enc_ctx_;
    FactorGenerator fie_u_, fie_v_;
    VariationalHead q1_u_, q2_u_, q1_v_, q2_v_;
};

// --- prediction head -----------------------------------------------------------

/// logit = (o_in_u + o_ex_u) . (o_in_v + o_ex_v), rowwise.
inline Value predict_logits(const FactorPair& u, const FactorPair& v) {
    return dot_rows(add(u.intrinsic, u.extrinsic), add(v.intrinsic, v.extrinsic));
}

inline Value predict_probs(const FactorPair& u, const FactorPair& v) {
    return sigmoid(predict_logits(u, v));
}

/// Cross-entropy of predicted probabilities against {0,1} labels, mean over
/// the batch. Probabilities are clamped to [1e-7, 1-1e-7] inside.
inline Value rp_loss(const Value& probs, std::vector<double> labels) {
    return mean_all(bce(probs, std::move(labels)));
}

} // namespace iedr
