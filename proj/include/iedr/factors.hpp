#pragma once

#include <array>
#include <string>

#include "params.hpp"

namespace iedr {

enum class FactorVariant { Nonlinear, Linear, Split };
enum class Combine { Concat, Product, Sum };

inline FactorVariant factor_variant_from(const std::string& s) {
    if (s == "Nonlinear") return FactorVariant::Nonlinear;
    if (s == "Linear") return FactorVariant::Linear;
    if (s == "Split") return FactorVariant::Split;
    throw std::invalid_argument("unknown factor variant: " + s);
}

inline Combine combine_from(const std::string& s) {
    if (s == "concat") return Combine::Concat;
    if (s == "product") return Combine::Product;
    if (s == "sum") return Combine::Sum;
    throw std::invalid_argument("unknown combine op: " + s);
}

inline const char* factor_variant_name(FactorVariant v) {
    switch (v) {
        case FactorVariant::Nonlinear: return "Nonlinear";
        case FactorVariant::Linear: return "Linear";
        default: return "Split";
    }
}

inline const char* combine_name(Combine c) {
    switch (c) {
        case Combine::Concat: return "concat";
        case Combine::Product: return "product";
        default: return "sum";
    }
}

struct FactorConfig {
    FactorVariant variant = FactorVariant::Nonlinear;
    Combine combine = Combine::Product;
    std::size_t hidden_dim = 128;

    void validate() const {
        if (hidden_dim < 1) throw std::invalid_argument("FactorConfig: hidden_dim must be >= 1");
        if (variant == FactorVariant::Linear && combine != Combine::Concat)
            throw std::invalid_argument("FactorConfig: Linear variant requires concat combine");
    }
};

/// Intrinsic/extrinsic halves of a factor-generator output, each [N x d].
struct FactorPair {
    Value intrinsic, extrinsic;
};

/// The factor generator f_ie: (entity representation, context representation)
/// -> (intrinsic, extrinsic). Output indices [0,d) are the intrinsic half and
/// [d,2d) the extrinsic half, always.
class FactorGenerator {
public:
    static FactorGenerator create(ParameterStore& store, const std::string& prefix, std::size_t d,
                                  const FactorConfig& cfg, RngStream& rng) {
        cfg.validate();
        FactorGenerator g;
        g.cfg_ = cfg;
        g.d_ = d;
        const std::size_t in = cfg.combine == Combine::Concat ? 2 * d : d;
        switch (cfg.variant) {
            case FactorVariant::Nonlinear:
                g.net_ = Mlp::create(store, prefix + ".net", in, cfg.hidden_dim, 2 * d, rng,
                                     Group::omega);
                jitter_bias(g.net_.l2.b, rng);
                break;
            case FactorVariant::Linear:
                g.lin_ = AffineLayer::create(store, prefix + ".lin", 2 * d, 2 * d, rng,
                                             Group::omega);
                jitter_bias(g.lin_.b, rng);
                break;
            case FactorVariant::Split:
                g.net_in_ = Mlp::create(store, prefix + ".fin", d, cfg.hidden_dim, d, rng,
                                        Group::omega);
                g.net_ex_ = Mlp::create(store, prefix + ".fex", in, cfg.hidden_dim, d, rng,
                                        Group::omega);
                jitter_bias(g.net_in_.l2.b, rng);
                jitter_bias(g.net_ex_.l2.b, rng);
                break;
        }
        return g;
    }

    const FactorConfig& config() const { return cfg_; }
    std::size_t dim() const { return d_; }

    FactorPair generate(const Value& entity, const Value& ctx) const {
        check_dims(entity, ctx);
        switch (cfg_.variant) {
            case FactorVariant::Nonlinear: {
                Value out = net_.apply(combine(entity, ctx));
                return {slice_cols(out, 0, d_), slice_cols(out, d_, 2 * d_)};
            }
            case FactorVariant::Linear: {
                Value out = lin_.apply(concat_cols(entity, ctx));
                return {slice_cols(out, 0, d_), slice_cols(out, d_, 2 * d_)};
            }
            case FactorVariant::Split:
                return {net_in_.apply(entity), net_ex_.apply(combine(entity, ctx))};
        }
        throw std::logic_error("unreachable");
    }

    /// Intrinsic half only; avoids the extrinsic computation for the Split
    /// variant, where the intrinsic path ignores the context entirely.
    Value generate_intrinsic(const Value& entity, const Value& ctx) const {
        if (cfg_.variant == FactorVariant::Split) return net_in_.apply(entity);
        return generate(entity, ctx).intrinsic;
    }

    /// Mean absolute weight of the {entity, context} -> {intrinsic, extrinsic}
    /// blocks, in the order (u->in, u->ex, c->in, c->ex). For the Linear
    /// variant these are blocks of the single weight matrix; for the Nonlinear
    /// variant with concat combine, the absolute path product |W2||W1| stands
    /// in for the per-block mapping weight. Other configurations do not have a
    /// single input-to-output weight structure and are rejected.
    std::array<double, 4> weight_block_masses() const {
        Tensor m; // [2d x 2d], rows outputs, cols inputs
        if (cfg_.variant == FactorVariant::Linear) {
            m = lin_.W.tensor();
            for (auto& v : m.data) v = std::abs(v);
        } else if (cfg_.variant == FactorVariant::Nonlinear && cfg_.combine == Combine::Concat) {
            const Tensor& w1 = net_.l1.W.tensor(); // [h, 2d]
            const Tensor& w2 = net_.l2.W.tensor(); // [2d, h]
            const std::size_t h = w1.shape[0];
            m = Tensor({2 * d_, 2 * d_});
            for (std::size_t r = 0; r < 2 * d_; ++r)
                for (std::size_t k = 0; k < h; ++k) {
                    const double a = std::abs(w2.at(r, k));
                    if (a == 0.0) continue;
                    for (std::size_t c = 0; c < 2 * d_; ++c)
                        m.at(r, c) += a * std::abs(w1.at(k, c));
                }
        } else {
            throw std::invalid_argument(
                "weight_block_masses: variant has no single input weight matrix (need Linear, or "
                "Nonlinear with concat combine)");
        }
        std::array<double, 4> out{};
        auto block_mean = [&](std::size_t r0, std::size_t c0) {
            double s = 0.0;
            for (std::size_t r = r0; r < r0 + d_; ++r)
                for (std::size_t c = c0; c < c0 + d_; ++c) s += m.at(r, c);
            return s / static_cast<double>(d_ * d_);
        };
        out[0] = block_mean(0, 0);       // entity -> intrinsic
        out[1] = block_mean(d_, 0);      // entity -> extrinsic
        out[2] = block_mean(0, d_);      // context -> intrinsic
        out[3] = block_mean(d_, d_);     // context -> extrinsic
        return out;
    }

private:
    // Factor vectors feed a cosine that rejects zero norms; an exactly-zero
    // output bias would produce exact-zero factors for degenerate inputs
    // (fully dropped context under a product combine, dead ReLU rows), so the
    // output bias gets a tiny symmetry-breaking init.
    static void jitter_bias(Value& b, RngStream& rng) {
        for (auto& v : b.tensor().data) v = rng.uniform(-0.01, 0.01);
    }

    void check_dims(const Value& entity, const Value& ctx) const {
        const auto& e = entity.tensor();
        const auto& c = ctx.tensor();
        if (e.shape.size() != 2 || e.shape[1] != d_ || !e.same_shape(c))
            throw std::invalid_argument("generate_factors: inputs must be [N x " +
                                        std::to_string(d_) + "], got " + shapes_str(e, c));
    }

    Value combine(const Value& entity, const Value& ctx) const {
        switch (cfg_.combine) {
            case Combine::Concat: return concat_cols(entity, ctx);
            case Combine::Product: return mul(entity, ctx);
            default: return add(entity, ctx);
        }
    }

    FactorConfig cfg_;
    std::size_t d_ = 0;
    Mlp net_, net_in_, net_ex_;
    AffineLayer lin_;
};

} // namespace iedr
