#pragma once

#include <string>
#include <vector>

#include "params.hpp"

namespace iedr {

enum class EncoderVariant { Sign, Avg, Mlp, Bi };

inline EncoderVariant encoder_variant_from(const std::string& s) {
    if (s == "SIGN") return EncoderVariant::Sign;
    if (s == "AVG") return EncoderVariant::Avg;
    if (s == "MLP") return EncoderVariant::Mlp;
    if (s == "BI") return EncoderVariant::Bi;
    throw std::invalid_argument("unknown encoder variant: " + s);
}

inline const char* encoder_variant_name(EncoderVariant v) {
    switch (v) {
        case EncoderVariant::Sign: return "SIGN";
        case EncoderVariant::Avg: return "AVG";
        case EncoderVariant::Mlp: return "MLP";
        default: return "BI";
    }
}

struct EncoderConfig {
    EncoderVariant variant = EncoderVariant::Sign;
    std::size_t embed_dim = 32;
    std::size_t hidden_dim = 128;
    bool include_self_pairs = true;
    bool pair_concat = false; // feed [z_i, z_j] to h instead of z_i (*) z_j

    void validate() const {
        if (embed_dim < 1 || hidden_dim < 1)
            throw std::invalid_argument("EncoderConfig: dims must be >= 1");
    }
};

/// Maps a feature set to a d-dimensional representation. The SIGN variant
/// treats the set as a complete feature graph: every (ordered) feature pair
/// is modeled by a shared MLP h over the elementwise product of the two
/// embeddings, then mean-aggregated over neighbors and nodes. With a complete
/// graph both means collapse to one mean over the pair list.
class FeatureEncoder {
public:
    static FeatureEncoder create(ParameterStore& store, const std::string& prefix,
                                 const EncoderConfig& cfg, RngStream& rng) {
        cfg.validate();
        FeatureEncoder enc;
        enc.cfg_ = cfg;
        const std::size_t d = cfg.embed_dim;
        if (cfg.variant == EncoderVariant::Sign) {
            const std::size_t in = cfg.pair_concat ? 2 * d : d;
            enc.net_ = Mlp::create(store, prefix + ".h", in, cfg.hidden_dim, d, rng, Group::omega);
        } else if (cfg.variant == EncoderVariant::Mlp) {
            enc.net_ = Mlp::create(store, prefix + ".top", d, cfg.hidden_dim, d, rng, Group::omega);
        }
        return enc;
    }

    const EncoderConfig& config() const { return cfg_; }

    /// Encodes a batch of feature sets against the shared embedding table.
    Value encode_batch(const Value& embeddings,
                       const std::vector<const std::vector<std::size_t>*>& sets) const {
        const std::size_t B = sets.size();
        if (B == 0) throw std::invalid_argument("encode: empty batch");
        for (const auto* s : sets)
            if (s->empty()) throw std::invalid_argument("encode: empty feature set");
        switch (cfg_.variant) {
            case EncoderVariant::Avg: return avg_batch(embeddings, sets);
            case EncoderVariant::Mlp: return net_.apply(avg_batch(embeddings, sets));
            case EncoderVariant::Sign:
            case EncoderVariant::Bi: return pair_batch(embeddings, sets);
        }
        throw std::logic_error("unreachable");
    }

    /// Single feature set -> [1 x d].
    Value encode(const Value& embeddings, const std::vector<std::size_t>& ids) const {
        return encode_batch(embeddings, {&ids});
    }

private:
    Value avg_batch(const Value& embeddings,
                    const std::vector<const std::vector<std::size_t>*>& sets) const {
        std::vector<std::size_t> flat, seg;
        for (std::size_t b = 0; b < sets.size(); ++b)
            for (auto id : *sets[b]) {
                flat.push_back(id);
                seg.push_back(b);
            }
        return seg_mean(lookup_rows(embeddings, flat), std::move(seg), sets.size());
    }

    Value pair_batch(const Value& embeddings,
                     const std::vector<const std::vector<std::size_t>*>& sets) const {
        std::vector<std::size_t> left, right, seg;
        for (std::size_t b = 0; b < sets.size(); ++b) {
            const auto& ids = *sets[b];
            for (std::size_t i = 0; i < ids.size(); ++i)
                for (std::size_t j = 0; j < ids.size(); ++j) {
                    if (i == j && !cfg_.include_self_pairs) continue;
                    left.push_back(ids[i]);
                    right.push_back(ids[j]);
                    seg.push_back(b);
                }
            if (ids.size() == 1 && !cfg_.include_self_pairs)
                throw std::invalid_argument(
                    "encode: singleton feature set needs include_self_pairs");
        }
        Value zi = lookup_rows(embeddings, left);
        Value zj = lookup_rows(embeddings, right);
        Value inter = cfg_.pair_concat ? concat_cols(zi, zj) : mul(zi, zj);
        if (cfg_.variant == EncoderVariant::Sign) inter = net_.apply(inter);
        return seg_mean(inter, std::move(seg), sets.size());
    }

    EncoderConfig cfg_;
    Mlp net_;
};

} // namespace iedr
