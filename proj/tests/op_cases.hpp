#pragma once

// Every differentiable op, each wrapped as a function of one [3, 4] input so a
// single finite-difference harness covers them. Shared by the tensor suite and
// the acceptance binary.

#include "htv/backbone.hpp"
#include "htv/gradcheck.hpp"
#include "htv/htpgm.hpp"
#include "test_util.hpp"

#include <functional>
#include <string>
#include <vector>

namespace htv::testing {

struct OpCase {
    std::string name;
    std::function<Tensor(Tape&, const Tensor&)> op;
    Scalar lo, hi;  // input sampling range, inside the op's smooth domain
};

inline std::vector<OpCase> op_cases() {
    Rng wrng(77);
    const Matrix other = random_matrix(3, 4, wrng, 0.5, 2.0);
    const Matrix right = random_matrix(4, 2, wrng);
    const Matrix conv_w = random_matrix(8, 3, wrng);
    const Matrix conv_b = random_matrix(1, 3, wrng);
    const Matrix gain = random_matrix(1, 4, wrng, 0.5, 1.5);
    const Matrix bias = random_matrix(1, 4, wrng);
    const Matrix target = random_matrix(3, 4, wrng);
    auto gauss = [](Tape&, const Tensor& x) { return GaussianParams{x, softplus(x) + 0.1}; };
    return {
        {"matmul", [=](Tape& t, const Tensor& x) { return matmul(x, t.constant(right)); }, -1, 1},
        {"matmul_rhs", [=](Tape& t, const Tensor& x) { return matmul(t.constant(right.transpose()), transpose(x)); }, -1, 1},
        {"add", [=](Tape& t, const Tensor& x) { return x + t.constant(other); }, -1, 1},
        {"add_bcast", [=](Tape& t, const Tensor& x) { return t.constant(other) + slice(x, 0, 0, 1); }, -1, 1},
        {"sub", [=](Tape& t, const Tensor& x) { return t.constant(other) - x; }, -1, 1},
        {"mul", [=](Tape& t, const Tensor& x) { return x * x * t.constant(other); }, -1, 1},
        {"mul_bcast", [](Tape&, const Tensor& x) { return x * slice(x, 1, 0, 1); }, -1, 1},
        {"div", [=](Tape& t, const Tensor& x) { return t.constant(other) / x + x / t.constant(other); }, 0.5, 2},
        {"div_bcast", [](Tape&, const Tensor& x) { return x / slice(x, 0, 1, 2); }, 0.5, 2},
        {"scale", [](Tape&, const Tensor& x) { return 3.5 * x; }, -1, 1},
        {"add_scalar", [](Tape&, const Tensor& x) { return square(x + 0.7); }, -1, 1},
        {"negate", [](Tape&, const Tensor& x) { return -x * x; }, -1, 1},
        {"exp", [](Tape&, const Tensor& x) { return exp(x); }, -1, 1},
        {"log", [](Tape&, const Tensor& x) { return log(x); }, 0.5, 2},
        {"tanh", [](Tape&, const Tensor& x) { return tanh(x); }, -2, 2},
        {"relu", [](Tape&, const Tensor& x) { return relu(x) * x; }, 0.1, 1},
        {"relu_neg", [](Tape&, const Tensor& x) { return relu(x) + x; }, -1, -0.1},
        {"softplus", [](Tape&, const Tensor& x) { return softplus(x); }, -3, 3},
        {"square", [](Tape&, const Tensor& x) { return square(x); }, -1, 1},
        {"sqrt", [](Tape&, const Tensor& x) { return sqrt(x); }, 0.5, 2},
        {"sum_axis0", [](Tape&, const Tensor& x) { return square(sum(x, 0)); }, -1, 1},
        {"sum_axis1", [](Tape&, const Tensor& x) { return square(sum(x, 1)); }, -1, 1},
        {"mean_axis", [](Tape&, const Tensor& x) { return square(mean(x, 1)) + mean(x); }, -1, 1},
        {"variance0", [](Tape&, const Tensor& x) { return square(variance(x, 0)); }, -1, 1},
        {"variance1", [](Tape&, const Tensor& x) { return variance(x, 1, false) * variance(x, 1); }, -1, 1},
        {"softmax1", [=](Tape& t, const Tensor& x) { return softmax(x, 1) * t.constant(other); }, -2, 2},
        {"softmax0", [=](Tape& t, const Tensor& x) { return softmax(x, 0) * t.constant(other); }, -2, 2},
        {"transpose", [=](Tape& t, const Tensor& x) { return matmul(transpose(x), t.constant(other)); }, -1, 1},
        {"reshape", [=](Tape& t, const Tensor& x) { return reshape(x, 2, 6) * reshape(t.constant(other), 2, 6); }, -1, 1},
        {"concat", [=](Tape& t, const Tensor& x) { return square(concat({x, t.constant(other), x}, 1)); }, -1, 1},
        {"slice", [](Tape&, const Tensor& x) { return square(slice(x, 1, 1, 3)); }, -1, 1},
        {"interpolate", [](Tape& t, const Tensor& x) { return nearest_interpolate(x, 7) * t.constant(Matrix::Ones(7, 4) * 1.3); }, -1, 1},
        {"activate_tanh", [](Tape&, const Tensor& x) { return activate(x, Activation::kTanh); }, -2, 2},
        {"activate_relu", [](Tape&, const Tensor& x) { return activate(x, Activation::kRelu) * x; }, 0.1, 1},
        {"strided_conv", [=](Tape& t, const Tensor& x) { return strided_conv(x, t.constant(conv_w), t.constant(conv_b), 2); }, -1, 1},
        {"strided_conv_w", [=](Tape& t, const Tensor& x) { return strided_conv(t.constant(other), reshape(concat({x, x}, 0), 8, 3), t.constant(conv_b), 2); }, -1, 1},
        {"layer_norm", [=](Tape& t, const Tensor& x) { return layer_norm(x, t.constant(gain), t.constant(bias)); }, -1, 1},
        {"layer_norm_affine", [=](Tape& t, const Tensor& x) { return layer_norm(t.constant(other), slice(x, 0, 0, 1), slice(x, 0, 1, 2)); }, -1, 1},
        {"fuse_latents", [](Tape&, const Tensor& x) { return fuse_latents({x, slice(x, 0, 0, 2), slice(x, 0, 2, 3)}, 5); }, -1, 1},
        {"kl_q", [=](Tape& t, const Tensor& x) { return kl_gaussian(gauss(t, x), GaussianParams{t.constant(other), t.constant(other)}); }, -1, 1},
        {"kl_p", [=](Tape& t, const Tensor& x) { return kl_gaussian(GaussianParams{t.constant(target), t.constant(other)}, gauss(t, x)); }, -1, 1},
        {"gaussian_nll", [=](Tape& t, const Tensor& x) { return gaussian_nll(t.constant(target), gauss(t, x)); }, -1, 1},
        {"gaussian_nll_x", [=](Tape& t, const Tensor& x) { return gaussian_nll(x, GaussianParams{t.constant(target), t.constant(other)}); }, -1, 1},
        {"reparameterize", [=](Tape& t, const Tensor& x) { Rng r(5); return sample_reparameterized(gauss(t, x), r); }, -1, 1},
    };
}

/// Largest relative finite-difference error of a case over one random input.
/// The op output is contracted with fixed random weights to form a scalar loss.
inline Scalar op_case_error(const OpCase& c, Rng& rng) {
    const Matrix x = random_matrix(3, 4, rng, c.lo, c.hi);
    auto f = [&](Tape& t, const Tensor& v) {
        Tensor out = c.op(t, v);
        Rng local(99);
        return sum(out * t.constant(random_matrix(out.rows(), out.cols(), local, 0.5, 1.5)));
    };
    return check_gradient(f, x);
}

}  // namespace htv::testing
