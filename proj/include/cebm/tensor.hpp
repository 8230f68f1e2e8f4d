#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cebm {

// Dense row-major array of 64-bit reals, rank 1 or 2 in practice.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(numel_of(shape), 0.0);
    }

    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel_of(shape))
            throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t e : s) n *= e;
        return n;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::size_t> s, double v) {
        Tensor t(std::move(s));
        for (double& x : t.data) x = v;
        return t;
    }

    static Tensor vec(std::vector<double> d) {
        std::size_t n = d.size();
        return Tensor({n}, std::move(d));
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
    std::size_t cols() const {
        if (shape.size() >= 2) return shape[1];
        return 1;
    }

    double& operator()(std::size_t i) { return data[i]; }
    double operator()(std::size_t i) const { return data[i]; }
    double& operator()(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace cebm
