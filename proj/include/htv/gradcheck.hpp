#pragma once

#include "htv/tensor.hpp"

#include <cmath>
#include <functional>

namespace htv {

/// Builds a scalar loss on `tape` from the leaf `x`.
using ScalarFn = std::function<Tensor(Tape& tape, const Tensor& x)>;

struct GradientCheck {
    Scalar max_rel_error = 0.0;
    Index worst_index = -1;
    Matrix analytic;
    Matrix numeric;
};

/// Compares tape gradients with central differences of step `h`. The relative
/// error per coordinate is |analytic - numeric| / (|numeric| + 1e-8).
GradientCheck check_gradient_detail(const ScalarFn& f, const Matrix& x, Scalar h = 1e-5);

inline Scalar check_gradient(const ScalarFn& f, const Matrix& x, Scalar h = 1e-5) {
    return check_gradient_detail(f, x, h).max_rel_error;
}

/// Relative-error rule shared by every finite-difference check in the library.
inline Scalar gradient_rel_error(Scalar analytic, Scalar numeric) {
    return std::abs(analytic - numeric) / (std::abs(numeric) + 1e-8);
}

}  // namespace htv
