#pragma once

#include <functional>

#include "ckd/tensor.hpp"

namespace ckd {

// Central-difference gradient oracle: (f(x+h) - f(x-h)) / 2h per coordinate.
// The loss function must be pure.
inline Tensor finite_difference_gradient(const std::function<double(const Tensor &)> &loss,
                                         const Tensor &leaf, double h = 1e-6) {
    if (h <= 0.0) throw DomainError("finite_difference_gradient: h must be positive");
    Tensor g(leaf.rows, leaf.cols);
    Tensor x = leaf;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double orig = x.values[i];
        x.values[i] = orig + h;
        double fp = loss(x);
        x.values[i] = orig - h;
        double fm = loss(x);
        x.values[i] = orig;
        g.values[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double max_relative_error(const Tensor &a, const Tensor &b, double floor = 1e-6) {
    if (!a.same_shape(b)) throw ShapeError("max_relative_error: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double denom = std::max({std::abs(a.values[i]), std::abs(b.values[i]), floor});
        worst = std::max(worst, std::abs(a.values[i] - b.values[i]) / denom);
    }
    return worst;
}

}  // namespace ckd
