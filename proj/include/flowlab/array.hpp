#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "flowlab/errors.hpp"

namespace flowlab {

// Dense row-major array of doubles. Most of the library works with rank-1
// vectors in R^D; the shape field exists so batches can be carried around
// without extra types.
struct Array {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Array() = default;
    explicit Array(std::size_t n, double fill = 0.0) : shape{n}, data(n, fill) {}
    Array(std::initializer_list<double> values) : shape{values.size()}, data(values) {}
    Array(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (element_count(shape) != data.size()) throw ShapeError("shape/data length mismatch");
    }

    static std::size_t element_count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
    // first non-finite coordinate, -1 if none
    long first_nonfinite() const {
        for (std::size_t i = 0; i < data.size(); ++i)
            if (!std::isfinite(data[i])) return static_cast<long>(i);
        return -1;
    }
};

inline void check_same_size(const Array& a, const Array& b, const char* where) {
    if (a.size() != b.size())
        throw ShapeError(std::string(where) + ": " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
}

inline Array operator+(const Array& a, const Array& b) {
    check_same_size(a, b, "operator+");
    Array out = a;
    for (std::size_t i = 0; i < b.size(); ++i) out.data[i] += b.data[i];
    return out;
}

inline Array operator-(const Array& a, const Array& b) {
    check_same_size(a, b, "operator-");
    Array out = a;
    for (std::size_t i = 0; i < b.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

inline Array operator*(double c, const Array& a) {
    Array out = a;
    for (double& v : out.data) v *= c;
    return out;
}

// y += c * x
inline void axpy(double c, const Array& x, Array& y) {
    check_same_size(x, y, "axpy");
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] += c * x.data[i];
}

inline double dot(const Array& a, const Array& b) {
    check_same_size(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

inline double squared_norm(const Array& a) { return dot(a, a); }
inline double norm(const Array& a) { return std::sqrt(squared_norm(a)); }

inline double max_abs_diff(const Array& a, const Array& b) {
    check_same_size(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace flowlab
