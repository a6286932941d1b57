#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace iedr {

/// Dense row-major tensor of doubles. Rank 0 (empty shape) is a scalar.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), data(numel_of(shape), fill) {}

    Tensor(std::vector<std::size_t> s, std::vector<double> values)
        : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != numel_of(shape))
            throw std::invalid_argument("Tensor: shape/value count mismatch");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto e : s) n *= e;
        return n;
    }

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

    std::size_t numel() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1 && shape.empty(); }

    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const {
        if (shape.size() < 2) return shape.empty() ? 1 : 1;
        return shape[1];
    }

    double& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    double value() const {
        if (numel() != 1) throw std::logic_error("Tensor::value: not a scalar");
        return data[0];
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) os << 'x';
            os << shape[i];
        }
        os << ']';
        return os.str();
    }
};

inline std::string shapes_str(const Tensor& a, const Tensor& b) {
    return a.shape_str() + " vs " + b.shape_str();
}

} // namespace iedr
