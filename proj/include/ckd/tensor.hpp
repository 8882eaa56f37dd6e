#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ckd {

// Error categories surfaced through the C API as distinct codes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense 2-D float64 array, row-major. Scalars are 1x1, K-vectors 1xK.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), values(r * c, fill) {}
    Tensor(std::size_t r, std::size_t c, std::vector<double> v)
        : rows(r), cols(c), values(std::move(v)) {
        if (values.size() != rows * cols)
            throw ShapeError("Tensor: value count " + std::to_string(values.size()) +
                             " does not match shape " + shape_str());
    }

    static Tensor scalar(double v) { return Tensor(1, 1, {v}); }
    static Tensor row(std::vector<double> v) {
        std::size_t n = v.size();
        return Tensor(1, n, std::move(v));
    }

    std::size_t size() const { return values.size(); }
    double &at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }

    bool same_shape(const Tensor &o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

}  // namespace ckd
