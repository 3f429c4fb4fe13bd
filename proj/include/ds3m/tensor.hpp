#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ds3m {

/// Dense row-major tensor of doubles. Rank 0 is a scalar with one entry.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)), data(count(shape), 0.0) {}

    Tensor(std::vector<std::size_t> s, std::vector<double> values)
        : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != count(shape))
            throw std::invalid_argument("Tensor: value count does not match shape");
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1},
                               std::multiplies<std::size_t>());
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    static Tensor vec(std::vector<double> values) {
        std::size_t n = values.size();
        return Tensor({n}, std::move(values));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
        return Tensor({rows, cols}, std::move(values));
    }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data[i * n + i] = 1.0;
        return t;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.at(1); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    double item() const {
        if (data.size() != 1) throw std::logic_error("Tensor::item on non-scalar");
        return data[0];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape.size(); ++i)
            os << (i ? "," : "") << shape[i];
        os << "]";
        return os.str();
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a.shape_str() + " vs " + b.shape_str());
}

}  // namespace ds3m
