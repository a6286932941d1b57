#pragma once

#include <functional>
#include <vector>

#include <iedr/autodiff.hpp>
#include <iedr/params.hpp>
#include <iedr/rng.hpp>

namespace iedr::test {

/// Central finite-difference gradient check: runs `forward` (which must build
/// a fresh scalar graph from the given leaves each call), compares analytic
/// leaf gradients against (f(x+eps) - f(x-eps)) / 2eps coordinate-wise.
/// Returns the worst relative error seen.
inline double max_grad_error(std::vector<Value> leaves,
                             const std::function<Value()>& forward, double eps = 1e-5) {
    Value root = forward();
    for (auto& l : leaves) l.zero_grad();
    backward(root);
    std::vector<Tensor> analytic;
    for (auto& l : leaves) analytic.push_back(l.grad());

    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        auto& t = leaves[li].tensor();
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double orig = t.data[i];
            t.data[i] = orig + eps;
            const double fp = forward().tensor().value();
            t.data[i] = orig - eps;
            const double fm = forward().tensor().value();
            t.data[i] = orig;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[li].data[i];
            if (std::abs(a) < 1e-9 && std::abs(numeric) < 1e-9) continue;
            worst = std::max(worst, std::abs(a - numeric) / std::max(1e-8, std::abs(numeric)));
        }
    }
    return worst;
}

inline Tensor random_tensor(std::vector<std::size_t> shape, RngStream& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

/// Random values bounded away from zero, for ops with kinks or domains there.
inline Tensor random_tensor_away_from(std::vector<std::size_t> shape, RngStream& rng,
                                      double margin = 0.05) {
    Tensor t(std::move(shape));
    for (auto& v : t.data) {
        const double u = rng.uniform(margin, 1.0);
        v = rng.coin() ? u : -u;
    }
    return t;
}

/// Independent re-implementation of the registered one-hidden-layer MLP at
/// `prefix` (affine, ReLU, affine) for use as a re-computation oracle.
inline std::vector<double> manual_mlp(const ParameterStore& store, const std::string& prefix,
                                      const std::vector<double>& x) {
    const auto& w1 = store.at(prefix + ".l1.w").value.tensor();
    const auto& b1 = store.at(prefix + ".l1.b").value.tensor();
    const auto& w2 = store.at(prefix + ".l2.w").value.tensor();
    const auto& b2 = store.at(prefix + ".l2.b").value.tensor();
    std::vector<double> h(w1.shape[0]);
    for (std::size_t o = 0; o < w1.shape[0]; ++o) {
        double acc = b1.data[o];
        for (std::size_t i = 0; i < x.size(); ++i) acc += w1.at(o, i) * x[i];
        h[o] = std::max(0.0, acc);
    }
    std::vector<double> y(w2.shape[0]);
    for (std::size_t o = 0; o < w2.shape[0]; ++o) {
        double acc = b2.data[o];
        for (std::size_t i = 0; i < h.size(); ++i) acc += w2.at(o, i) * h[i];
        y[o] = acc;
    }
    return y;
}

} // namespace iedr::test
