#pragma once

// Dense 2-D tensors on a reverse-mode gradient tape.
//
// Every value in the model is a matrix: time runs along rows, features along
// columns, scalars are 1x1. A Tape records operations in execution order; a
// Tensor is a lightweight handle (tape, node index) into it.

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace htv {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
using Index = Eigen::Index;

/// Shape mismatch between operands, or an invalid axis / range.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Argument outside an op's numeric domain (log of non-positive, etc).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Misuse of the engine API (non-scalar loss, empty tape).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

std::string shape_string(const Matrix& m);

class Tape;

class Tensor {
public:
    Tensor() = default;

    const Matrix& value() const;
    /// Accumulated gradient of a leaf. Zeros when backward never reached it.
    Matrix grad() const;
    bool requires_grad() const;

    Index rows() const { return value().rows(); }
    Index cols() const { return value().cols(); }
    std::array<Index, 2> shape() const { return {rows(), cols()}; }
    /// Value of a 1x1 tensor.
    Scalar item() const;

    Tape& tape() const { return *tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Per-backward-pass adjoint buffers, one slot per tape node. Empty slot == zero.
class Adjoints {
public:
    explicit Adjoints(std::size_t n) : slots_(n) {}

    void accumulate(std::size_t id, const Matrix& g);
    template <typename Derived>
    void accumulate(std::size_t id, const Eigen::MatrixBase<Derived>& g) {
        accumulate(id, Matrix(g));
    }
    const Matrix& at(std::size_t id) const { return slots_[id]; }
    bool has(std::size_t id) const { return slots_[id].size() > 0; }

private:
    std::vector<Matrix> slots_;
};

using BackwardFn = std::function<void(const Tape&, const Matrix& grad_out, Adjoints&)>;

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that never receives gradient.
    Tensor constant(Matrix value);
    /// Leaf owning its gradient buffer.
    Tensor variable(Matrix value);
    /// Leaf viewing an external value; gradients accumulate into `grad_sink`.
    /// Both referents must outlive the tape.
    Tensor parameter(const Matrix& value, Matrix& grad_sink);

    /// Records an op node. `backward` may be empty when no input requires grad.
    Tensor record(Matrix value, const std::vector<Tensor>& inputs, BackwardFn backward);

    /// Reverse sweep from a 1x1 loss. Leaf gradients accumulate across calls.
    void backward(const Tensor& loss);
    void zero_grad();

    std::size_t size() const { return nodes_.size(); }
    const Matrix& value(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    Matrix grad(std::size_t id) const;

private:
    struct Node {
        Matrix value;
        const Matrix* external = nullptr;
        bool requires_grad = false;
        bool leaf = true;
        BackwardFn backward;
        Matrix grad;
        Matrix* sink = nullptr;
    };

    std::deque<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Linear algebra and shape ops

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// Row-major reshape; element order is preserved.
Tensor reshape(const Tensor& a, Index rows, Index cols);
/// Concatenates along axis 0 (rows) or 1 (columns).
Tensor concat(const std::vector<Tensor>& parts, int axis);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, int axis, Index begin, Index end);
/// Nearest-neighbour upsampling along rows: out[j] = in[floor(j * rows / target)].
Tensor nearest_interpolate(const Tensor& z, Index target_rows);

// ---------------------------------------------------------------------------
// Elementwise. Binary ops broadcast a size-1 row or column dimension.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws DomainError when any denominator is exactly zero; callers guard with an epsilon.
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar s);
Tensor add_scalar(const Tensor& a, Scalar s);
Tensor negate(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return negate(a); }
inline Tensor operator*(Scalar s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, Scalar s) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, Scalar s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, Scalar s) { return add_scalar(a, -s); }

// ---------------------------------------------------------------------------
// Reductions. Axis 0 reduces rows (result 1 x cols), axis 1 reduces columns.

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, int axis);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int axis);
Tensor variance(const Tensor& a, int axis, bool biased = true);

/// Max-shifted softmax along `axis`.
Tensor softmax(const Tensor& a, int axis);

}  // namespace htv
