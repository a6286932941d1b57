#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "autodiff.hpp"
#include "rng.hpp"

namespace iedr {

/// Optimizer group. Variational-head parameters live in `theta`, everything
/// else in `omega`; the two-step trainer alternates between the groups.
enum class Group { theta, omega };

struct Parameter {
    std::string name;
    Group group = Group::omega;
    Value value;
};

/// Ordered registry of all trainable parameters of a model. Order is creation
/// order and is part of the determinism contract (optimizer state and
/// checkpoints index into it).
class ParameterStore {
public:
    Value create(const std::string& name, Tensor init, Group group) {
        if (by_name_.count(name)) throw std::logic_error("duplicate parameter: " + name);
        Parameter p{name, group, Value::leaf(std::move(init))};
        by_name_[name] = params_.size();
        params_.push_back(std::move(p));
        return params_.back().value;
    }

    const std::vector<Parameter>& all() const { return params_; }
    std::vector<Parameter>& all() { return params_; }

    const Parameter& at(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
        return params_[it->second];
    }

    Parameter& at(const std::string& name) {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
        return params_[it->second];
    }

    std::vector<Parameter*> group(Group g) {
        std::vector<Parameter*> out;
        for (auto& p : params_)
            if (p.group == g) out.push_back(&p);
        return out;
    }

    void zero_grad(Group g) {
        for (auto& p : params_)
            if (p.group == g) p.value.zero_grad();
    }

    void zero_grad_all() {
        for (auto& p : params_) p.value.zero_grad();
    }

    std::size_t size() const { return params_.size(); }

    /// Deep copy of parameter tensors, e.g. for best-epoch snapshots.
    std::vector<Tensor> snapshot() const {
        std::vector<Tensor> out;
        out.reserve(params_.size());
        for (const auto& p : params_) out.push_back(p.value.tensor());
        return out;
    }

    void restore(const std::vector<Tensor>& snap) {
        if (snap.size() != params_.size())
            throw std::invalid_argument("snapshot size mismatch");
        for (std::size_t i = 0; i < snap.size(); ++i) {
            if (!snap[i].same_shape(params_[i].value.tensor()))
                throw std::invalid_argument("snapshot shape mismatch at " + params_[i].name);
            params_[i].value.tensor() = snap[i];
        }
    }

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> by_name_;
};

// --- initializers -----------------------------------------------------------

inline Tensor init_embedding(std::size_t rows, std::size_t d, RngStream& rng) {
    Tensor t({rows, d});
    const double r = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& v : t.data) v = rng.uniform(-r, r);
    return t;
}

inline Tensor init_glorot(std::size_t out, std::size_t in, RngStream& rng) {
    Tensor t({out, in});
    const double r = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& v : t.data) v = rng.uniform(-r, r);
    return t;
}

inline Tensor init_zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

// --- layers -----------------------------------------------------------------

struct AffineLayer {
    Value W, b;

    static AffineLayer create(ParameterStore& store, const std::string& prefix, std::size_t in,
                              std::size_t out, RngStream& rng, Group group) {
        AffineLayer l;
        l.W = store.create(prefix + ".w", init_glorot(out, in, rng), group);
        l.b = store.create(prefix + ".b", init_zeros({out}), group);
        return l;
    }

    Value apply(const Value& x) const { return affine(x, W, b); }

    /// Applies with parameters entering as constants: gradients flow through
    /// the map into x but never into W/b.
    Value apply_frozen(const Value& x) const { return affine(x, W.detach(), b.detach()); }

    std::size_t in_dim() const { return W.tensor().shape[1]; }
    std::size_t out_dim() const { return W.tensor().shape[0]; }
};

/// One-hidden-layer perceptron with ReLU, the MLP shape used throughout the
/// model (pair interaction nets, factor generators, variational heads).
struct Mlp {
    AffineLayer l1, l2;

    static Mlp create(ParameterStore& store, const std::string& prefix, std::size_t in,
                      std::size_t hidden, std::size_t out, RngStream& rng, Group group) {
        Mlp m;
        m.l1 = AffineLayer::create(store, prefix + ".l1", in, hidden, rng, group);
        m.l2 = AffineLayer::create(store, prefix + ".l2", hidden, out, rng, group);
        return m;
    }

    Value apply(const Value& x) const { return l2.apply(relu(l1.apply(x))); }
    Value apply_frozen(const Value& x) const { return l2.apply_frozen(relu(l1.apply_frozen(x))); }

    std::size_t in_dim() const { return l1.in_dim(); }
    std::size_t out_dim() const { return l2.out_dim(); }
};

// --- optimizers ---------------------------------------------------------------

class Optimizer {
public:
    explicit Optimizer(std::vector<Parameter*> params) : params_(std::move(params)) {}
    virtual ~Optimizer() = default;
    virtual void step() = 0;

    void zero_grad() {
        for (auto* p : params_) p->value.zero_grad();
    }

protected:
    std::vector<Parameter*> params_;
};

class Sgd final : public Optimizer {
public:
    Sgd(std::vector<Parameter*> params, double lr) : Optimizer(std::move(params)), lr_(lr) {}

    void step() override {
        for (auto* p : params_) {
            auto& t = p->value.tensor();
            const auto& g = p->value.grad();
            for (std::size_t i = 0; i < t.numel(); ++i) t.data[i] -= lr_ * g.data[i];
        }
    }

private:
    double lr_;
};

class Adam final : public Optimizer {
public:
    Adam(std::vector<Parameter*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : Optimizer(std::move(params)), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
        for (auto* p : params_) {
            m_.push_back(Tensor::zeros_like(p->value.tensor()));
            v_.push_back(Tensor::zeros_like(p->value.tensor()));
        }
    }

    void step() override {
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, t_);
        const double c2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& t = params_[k]->value.tensor();
            const auto& g = params_[k]->value.grad();
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < t.numel(); ++i) {
                m.data[i] = b1_ * m.data[i] + (1.0 - b1_) * g.data[i];
                v.data[i] = b2_ * v.data[i] + (1.0 - b2_) * g.data[i] * g.data[i];
                t.data[i] -= lr_ * (m.data[i] / c1) / (std::sqrt(v.data[i] / c2) + eps_);
            }
        }
    }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<Tensor> m_, v_;
};

inline std::unique_ptr<Optimizer> make_optimizer(const std::string& kind,
                                                 std::vector<Parameter*> params, double lr) {
    if (kind == "adam") return std::make_unique<Adam>(std::move(params), lr);
    if (kind == "sgd") return std::make_unique<Sgd>(std::move(params), lr);
    throw std::invalid_argument("unknown optimizer: " + kind);
}

} // namespace iedr
