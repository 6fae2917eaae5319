#include "htv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>

namespace htv {

std::string shape_string(const Matrix& m) {
    std::ostringstream os;
    os << '[' << m.rows() << ", " << m.cols() << ']';
    return os.str();
}

// ---------------------------------------------------------------------------
// Tensor / Tape

const Matrix& Tensor::value() const {
    if (tape_ == nullptr) throw ContractError("use of an unbound tensor");
    return tape_->value(id_);
}

Matrix Tensor::grad() const { return tape().grad(id_); }

bool Tensor::requires_grad() const { return tape().requires_grad(id_); }

Scalar Tensor::item() const {
    const Matrix& v = value();
    if (v.size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_string(v));
    return v(0, 0);
}

void Adjoints::accumulate(std::size_t id, const Matrix& g) {
    Matrix& slot = slots_[id];
    if (slot.size() == 0) {
        slot = g;
    } else {
        slot += g;
    }
}

Tensor Tape::constant(Matrix value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::variable(Matrix value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::parameter(const Matrix& value, Matrix& grad_sink) {
    if (grad_sink.rows() != value.rows() || grad_sink.cols() != value.cols()) {
        grad_sink = Matrix::Zero(value.rows(), value.cols());
    }
    Node n;
    n.external = &value;
    n.requires_grad = true;
    n.sink = &grad_sink;
    nodes_.push_back(std::move(n));
    return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(Matrix value, const std::vector<Tensor>& inputs, BackwardFn backward) {
    Node n;
    n.value = std::move(value);
    n.leaf = false;
    for (const Tensor& in : inputs) {
        if (&in.tape() != this) throw ContractError("tensor from a different tape used as input");
        n.requires_grad = n.requires_grad || requires_grad(in.id());
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Tensor(this, nodes_.size() - 1);
}

const Matrix& Tape::value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external != nullptr ? *n.external : n.value;
}

Matrix Tape::grad(std::size_t id) const {
    const Node& n = nodes_[id];
    const Matrix& v = value(id);
    const Matrix& g = n.sink != nullptr ? *n.sink : n.grad;
    if (g.size() == 0) return Matrix::Zero(v.rows(), v.cols());
    return g;
}

void Tape::backward(const Tensor& loss) {
    if (nodes_.empty()) throw ContractError("backward on an empty tape");
    if (&loss.tape() != this) throw ContractError("loss belongs to a different tape");
    const Matrix& lv = value(loss.id());
    if (lv.size() != 1) throw ContractError("backward requires a scalar loss, got " + shape_string(lv));

    Adjoints adj(loss.id() + 1);
    adj.accumulate(loss.id(), Matrix::Ones(1, 1));
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        if (!adj.has(i)) continue;
        Node& n = nodes_[i];
        if (!n.requires_grad) continue;
        if (n.leaf) {
            Matrix& target = n.sink != nullptr ? *n.sink : n.grad;
            if (target.size() == 0) {
                target = adj.at(i);
            } else {
                target += adj.at(i);
            }
        } else if (n.backward) {
            n.backward(*this, adj.at(i), adj);
        }
    }
}

void Tape::zero_grad() {
    for (Node& n : nodes_) {
        if (n.sink != nullptr) n.sink->setZero();
        n.grad.resize(0, 0);
    }
}

// ---------------------------------------------------------------------------
// Helpers

namespace {

void check_axis(int axis) {
    if (axis != 0 && axis != 1) throw DimensionError("axis must be 0 or 1, got " + std::to_string(axis));
}

std::pair<Index, Index> broadcast_shape(const Matrix& a, const Matrix& b, const char* op) {
    auto dim = [&](Index x, Index y) -> Index {
        if (x == y) return x;
        if (x == 1) return y;
        if (y == 1) return x;
        throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                             shape_string(b));
    };
    return {dim(a.rows(), b.rows()), dim(a.cols(), b.cols())};
}

Matrix expand(const Matrix& m, Index rows, Index cols) {
    if (m.rows() == rows && m.cols() == cols) return m;
    return m.replicate(rows / m.rows(), cols / m.cols());
}

// Sums a broadcast gradient back down to the operand's shape.
Matrix reduce_to(const Matrix& g, Index rows, Index cols) {
    Matrix out = g;
    if (rows == 1 && out.rows() != 1) out = out.colwise().sum().eval();
    if (cols == 1 && out.cols() != 1) out = out.rowwise().sum().eval();
    return out;
}

template <typename Fn>
Tensor unary(const Tensor& a, Matrix out, Fn local_grad) {
    const std::size_t ia = a.id();
    const std::size_t io = a.tape().size();
    return a.tape().record(std::move(out), {a},
                           [ia, io, local_grad](const Tape& t, const Matrix& g, Adjoints& adj) {
                               adj.accumulate(ia, local_grad(t.value(ia), t.value(io), g));
                           });
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra and shape ops

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    if (av.cols() != bv.rows()) {
        throw DimensionError("matmul: inner dimensions differ, " + shape_string(av) + " x " + shape_string(bv));
    }
    Matrix out = av * bv;
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [ia, ib](const Tape& t, const Matrix& g, Adjoints& adj) {
        if (t.requires_grad(ia)) adj.accumulate(ia, g * t.value(ib).transpose());
        if (t.requires_grad(ib)) adj.accumulate(ib, t.value(ia).transpose() * g);
    });
}

Tensor transpose(const Tensor& a) {
    Matrix out = a.value().transpose();
    const std::size_t ia = a.id();
    return a.tape().record(std::move(out), {a}, [ia](const Tape&, const Matrix& g, Adjoints& adj) {
        adj.accumulate(ia, g.transpose());
    });
}

Tensor reshape(const Tensor& a, Index rows, Index cols) {
    const Matrix& av = a.value();
    if (rows * cols != av.size()) {
        throw DimensionError("reshape: cannot view " + shape_string(av) + " as [" + std::to_string(rows) + ", " +
                             std::to_string(cols) + "]");
    }
    Matrix out = Eigen::Map<const Matrix>(av.data(), rows, cols);
    const std::size_t ia = a.id();
    const Index r0 = av.rows(), c0 = av.cols();
    return a.tape().record(std::move(out), {a}, [ia, r0, c0](const Tape&, const Matrix& g, Adjoints& adj) {
        adj.accumulate(ia, Matrix(Eigen::Map<const Matrix>(g.data(), r0, c0)));
    });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    check_axis(axis);
    if (parts.empty()) throw DimensionError("concat: no tensors");
    const Matrix& first = parts.front().value();
    Index total = 0;
    for (const Tensor& p : parts) {
        const Matrix& v = p.value();
        if (axis == 0 ? v.cols() != first.cols() : v.rows() != first.rows()) {
            throw DimensionError("concat: mismatched shapes " + shape_string(first) + " and " + shape_string(v));
        }
        total += axis == 0 ? v.rows() : v.cols();
    }
    Matrix out(axis == 0 ? total : first.rows(), axis == 0 ? first.cols() : total);
    std::vector<std::pair<std::size_t, Index>> spans;  // (id, extent)
    Index offset = 0;
    for (const Tensor& p : parts) {
        const Matrix& v = p.value();
        const Index extent = axis == 0 ? v.rows() : v.cols();
        if (axis == 0) {
            out.middleRows(offset, extent) = v;
        } else {
            out.middleCols(offset, extent) = v;
        }
        spans.emplace_back(p.id(), extent);
        offset += extent;
    }
    return parts.front().tape().record(
        std::move(out), parts, [spans, axis](const Tape& t, const Matrix& g, Adjoints& adj) {
            Index off = 0;
            for (const auto& [id, extent] : spans) {
                if (t.requires_grad(id)) {
                    adj.accumulate(id, axis == 0 ? Matrix(g.middleRows(off, extent))
                                                 : Matrix(g.middleCols(off, extent)));
                }
                off += extent;
            }
        });
}

Tensor slice(const Tensor& a, int axis, Index begin, Index end) {
    check_axis(axis);
    const Matrix& av = a.value();
    const Index extent = axis == 0 ? av.rows() : av.cols();
    if (begin < 0 || end > extent || begin > end) {
        throw DimensionError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") out of bounds for " + shape_string(av) + " axis " + std::to_string(axis));
    }
    Matrix out = axis == 0 ? Matrix(av.middleRows(begin, end - begin)) : Matrix(av.middleCols(begin, end - begin));
    const std::size_t ia = a.id();
    const Index r0 = av.rows(), c0 = av.cols();
    return a.tape().record(std::move(out), {a},
                           [ia, r0, c0, axis, begin, end](const Tape&, const Matrix& g, Adjoints& adj) {
                               Matrix full = Matrix::Zero(r0, c0);
                               if (axis == 0) {
                                   full.middleRows(begin, end - begin) = g;
                               } else {
                                   full.middleCols(begin, end - begin) = g;
                               }
                               adj.accumulate(ia, full);
                           });
}

Tensor nearest_interpolate(const Tensor& z, Index target_rows) {
    const Matrix& zv = z.value();
    const Index src = zv.rows();
    if (src < 1) throw DimensionError("nearest_interpolate: empty source " + shape_string(zv));
    if (target_rows < src) {
        throw DimensionError("nearest_interpolate: downsampling from " + std::to_string(src) + " to " +
                             std::to_string(target_rows) + " rows is unsupported");
    }
    Matrix out(target_rows, zv.cols());
    for (Index j = 0; j < target_rows; ++j) out.row(j) = zv.row(j * src / target_rows);
    const std::size_t iz = z.id();
    return z.tape().record(std::move(out), {z}, [iz, src, target_rows](const Tape&, const Matrix& g, Adjoints& adj) {
        Matrix gz = Matrix::Zero(src, g.cols());
        for (Index j = 0; j < target_rows; ++j) gz.row(j * src / target_rows) += g.row(j);
        adj.accumulate(iz, gz);
    });
}

// ---------------------------------------------------------------------------
// Elementwise binary

Tensor add(const Tensor& a, const Tensor& b) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    const auto [r, c] = broadcast_shape(av, bv, "add");
    Matrix out = expand(av, r, c) + expand(bv, r, c);
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [ia, ib](const Tape& t, const Matrix& g, Adjoints& adj) {
        if (t.requires_grad(ia)) adj.accumulate(ia, reduce_to(g, t.value(ia).rows(), t.value(ia).cols()));
        if (t.requires_grad(ib)) adj.accumulate(ib, reduce_to(g, t.value(ib).rows(), t.value(ib).cols()));
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    const auto [r, c] = broadcast_shape(av, bv, "sub");
    Matrix out = expand(av, r, c) - expand(bv, r, c);
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [ia, ib](const Tape& t, const Matrix& g, Adjoints& adj) {
        if (t.requires_grad(ia)) adj.accumulate(ia, reduce_to(g, t.value(ia).rows(), t.value(ia).cols()));
        if (t.requires_grad(ib)) adj.accumulate(ib, reduce_to(-g, t.value(ib).rows(), t.value(ib).cols()));
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    const auto [r, c] = broadcast_shape(av, bv, "mul");
    Matrix out = expand(av, r, c).cwiseProduct(expand(bv, r, c));
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [ia, ib](const Tape& t, const Matrix& g, Adjoints& adj) {
        const Matrix& x = t.value(ia);
        const Matrix& y = t.value(ib);
        if (t.requires_grad(ia)) {
            adj.accumulate(ia, reduce_to(g.cwiseProduct(expand(y, g.rows(), g.cols())), x.rows(), x.cols()));
        }
        if (t.requires_grad(ib)) {
            adj.accumulate(ib, reduce_to(g.cwiseProduct(expand(x, g.rows(), g.cols())), y.rows(), y.cols()));
        }
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    const Matrix& av = a.value();
    const Matrix& bv = b.value();
    const auto [r, c] = broadcast_shape(av, bv, "div");
    if ((bv.array() == 0.0).any()) throw DomainError("div: zero in denominator " + shape_string(bv));
    Matrix out = expand(av, r, c).cwiseQuotient(expand(bv, r, c));
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape().record(std::move(out), {a, b}, [ia, ib](const Tape& t, const Matrix& g, Adjoints& adj) {
        const Matrix& x = t.value(ia);
        const Matrix& y = t.value(ib);
        const Matrix ye = expand(y, g.rows(), g.cols());
        if (t.requires_grad(ia)) adj.accumulate(ia, reduce_to(g.cwiseQuotient(ye), x.rows(), x.cols()));
        if (t.requires_grad(ib)) {
            const Matrix xe = expand(x, g.rows(), g.cols());
            Matrix gy = -(g.array() * xe.array() / (ye.array() * ye.array())).matrix();
            adj.accumulate(ib, reduce_to(gy, y.rows(), y.cols()));
        }
    });
}

// ---------------------------------------------------------------------------
// Elementwise unary

Tensor scale(const Tensor& a, Scalar s) {
    return unary(a, a.value() * s, [s](const Matrix&, const Matrix&, const Matrix& g) { return Matrix(g * s); });
}

Tensor add_scalar(const Tensor& a, Scalar s) {
    return unary(a, (a.value().array() + s).matrix(),
                 [](const Matrix&, const Matrix&, const Matrix& g) { return g; });
}

Tensor negate(const Tensor& a) {
    return unary(a, -a.value(), [](const Matrix&, const Matrix&, const Matrix& g) { return Matrix(-g); });
}

Tensor exp(const Tensor& a) {
    return unary(a, a.value().array().exp().matrix(),
                 [](const Matrix&, const Matrix& y, const Matrix& g) { return Matrix(g.cwiseProduct(y)); });
}

Tensor log(const Tensor& a) {
    const Matrix& av = a.value();
    if ((av.array() <= 0.0).any()) throw DomainError("log: non-positive argument");
    return unary(a, av.array().log().matrix(),
                 [](const Matrix& x, const Matrix&, const Matrix& g) { return Matrix(g.cwiseQuotient(x)); });
}

Tensor tanh(const Tensor& a) {
    return unary(a, a.value().array().tanh().matrix(), [](const Matrix&, const Matrix& y, const Matrix& g) {
        return Matrix(g.array() * (1.0 - y.array().square()));
    });
}

Tensor relu(const Tensor& a) {
    return unary(a, a.value().cwiseMax(0.0), [](const Matrix& x, const Matrix&, const Matrix& g) {
        return Matrix((x.array() > 0.0).select(g.array(), 0.0));
    });
}

Tensor softplus(const Tensor& a) {
    const Matrix& av = a.value();
    Matrix out = (av.array().max(0.0) + (-av.array().abs()).exp().log1p()).matrix();
    return unary(a, std::move(out), [](const Matrix& x, const Matrix&, const Matrix& g) {
        return Matrix(g.array() / (1.0 + (-x.array()).exp()));
    });
}

Tensor square(const Tensor& a) {
    return unary(a, a.value().array().square().matrix(), [](const Matrix& x, const Matrix&, const Matrix& g) {
        return Matrix(2.0 * g.array() * x.array());
    });
}

Tensor sqrt(const Tensor& a) {
    const Matrix& av = a.value();
    if ((av.array() < 0.0).any()) throw DomainError("sqrt: negative argument");
    return unary(a, av.array().sqrt().matrix(), [](const Matrix&, const Matrix& y, const Matrix& g) {
        return Matrix(0.5 * g.array() / y.array());
    });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum(const Tensor& a) {
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    const Index r = a.rows(), c = a.cols();
    return unary(a, std::move(out),
                 [r, c](const Matrix&, const Matrix&, const Matrix& g) { return Matrix::Constant(r, c, g(0, 0)); });
}

Tensor sum(const Tensor& a, int axis) {
    check_axis(axis);
    const Matrix& av = a.value();
    if ((axis == 0 ? av.rows() : av.cols()) == 0) throw DimensionError("sum: empty axis in " + shape_string(av));
    Matrix out = axis == 0 ? Matrix(av.colwise().sum()) : Matrix(av.rowwise().sum());
    const Index r = av.rows(), c = av.cols();
    return unary(a, std::move(out), [r, c](const Matrix&, const Matrix&, const Matrix& g) { return expand(g, r, c); });
}

Tensor mean(const Tensor& a) {
    const Matrix& av = a.value();
    if (av.size() == 0) throw DimensionError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<Scalar>(av.size()));
}

Tensor mean(const Tensor& a, int axis) {
    check_axis(axis);
    const Index n = axis == 0 ? a.rows() : a.cols();
    if (n == 0) throw DimensionError("mean: empty axis in " + shape_string(a.value()));
    return scale(sum(a, axis), 1.0 / static_cast<Scalar>(n));
}

Tensor variance(const Tensor& a, int axis, bool biased) {
    check_axis(axis);
    const Matrix& av = a.value();
    const Index n = axis == 0 ? av.rows() : av.cols();
    if (n == 0 || (!biased && n < 2)) throw DimensionError("variance: empty axis in " + shape_string(av));
    const Scalar divisor = biased ? static_cast<Scalar>(n) : static_cast<Scalar>(n - 1);
    Matrix centered;
    if (axis == 0) {
        centered = av.rowwise() - av.colwise().mean();
    } else {
        centered = av.colwise() - av.rowwise().mean();
    }
    Matrix out = axis == 0 ? Matrix(centered.array().square().colwise().sum() / divisor)
                           : Matrix(centered.array().square().rowwise().sum() / divisor);
    const Index r = av.rows(), c = av.cols();
    // d var / d x_j = 2 (x_j - mean) / divisor; the mean's own dependence cancels.
    return unary(a, std::move(out),
                 [centered = std::move(centered), divisor, r, c](const Matrix&, const Matrix&, const Matrix& g) {
                     return Matrix(2.0 / divisor * centered.cwiseProduct(expand(g, r, c)));
                 });
}

Tensor softmax(const Tensor& a, int axis) {
    check_axis(axis);
    const Matrix& av = a.value();
    Matrix out(av.rows(), av.cols());
    if (axis == 1) {
        for (Index i = 0; i < av.rows(); ++i) {
            auto e = (av.row(i).array() - av.row(i).maxCoeff()).exp();
            out.row(i) = (e / e.sum()).matrix();
        }
    } else {
        for (Index j = 0; j < av.cols(); ++j) {
            auto e = (av.col(j).array() - av.col(j).maxCoeff()).exp();
            out.col(j) = (e / e.sum()).matrix();
        }
    }
    return unary(a, std::move(out), [axis](const Matrix&, const Matrix& y, const Matrix& g) {
        const Matrix gy = g.cwiseProduct(y);
        if (axis == 1) {
            const Eigen::VectorXd dot = gy.rowwise().sum();
            return Matrix(y.array() * (g.colwise() - dot).array());
        }
        const RowVector dot = gy.colwise().sum();
        return Matrix(y.array() * (g.rowwise() - dot).array());
    });
}

}  // namespace htv
