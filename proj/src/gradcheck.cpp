#include "htv/gradcheck.hpp"

#include <cmath>

namespace htv {

GradientCheck check_gradient_detail(const ScalarFn& f, const Matrix& x, Scalar h) {
    GradientCheck out;
    {
        Tape tape;
        Tensor leaf = tape.variable(x);
        Tensor loss = f(tape, leaf);
        tape.backward(loss);
        out.analytic = leaf.grad();
    }

    auto eval = [&](const Matrix& at) {
        Tape tape;
        Tensor leaf = tape.variable(at);
        return f(tape, leaf).item();
    };

    out.numeric = Matrix::Zero(x.rows(), x.cols());
    Matrix probe = x;
    for (Index i = 0; i < x.size(); ++i) {
        const Scalar orig = probe.data()[i];
        probe.data()[i] = orig + h;
        const Scalar up = eval(probe);
        probe.data()[i] = orig - h;
        const Scalar down = eval(probe);
        probe.data()[i] = orig;
        out.numeric.data()[i] = (up - down) / (2.0 * h);

        const Scalar err = gradient_rel_error(out.analytic.data()[i], out.numeric.data()[i]);
        if (err > out.max_rel_error || out.worst_index < 0) {
            out.max_rel_error = err;
            out.worst_index = i;
        }
    }
    return out;
}

}  // namespace htv
