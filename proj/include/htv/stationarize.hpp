#pragma once

// Per-window z-scoring along time and its inverse.
//
// Windows are [T, V] (time along rows). Statistics are per channel and use the
// biased 1/T variance; sigma is floored at eps so constant channels map to 0.

#include "htv/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <stdexcept>
#include <string>
#include <utility>

namespace htv {

class WindowTooShortError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <typename S>
struct BasicStationStats {
    using Row = Eigen::Matrix<S, 1, Eigen::Dynamic>;
    Row mu;
    Row sigma;

    Eigen::Index channels() const { return mu.size(); }
};

using StationStats = BasicStationStats<Scalar>;

template <typename S>
using RowMajorMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Derived>
BasicStationStats<typename Derived::Scalar> station_stats(const Eigen::MatrixBase<Derived>& x,
                                                          typename Derived::Scalar eps) {
    using S = typename Derived::Scalar;
    if (x.rows() < 2) {
        throw WindowTooShortError("normalize: window needs at least 2 time steps, got " + std::to_string(x.rows()));
    }
    BasicStationStats<S> stats;
    stats.mu = x.colwise().mean();
    const auto centered = (x.rowwise() - stats.mu).eval();
    const auto var = (centered.array().square().colwise().sum() / static_cast<S>(x.rows())).eval();
    stats.sigma = var.sqrt().max(eps).matrix();
    return stats;
}

/// Returns (x', stats) with x' = (x - mu) / sigma per channel.
template <typename Derived>
std::pair<RowMajorMatrix<typename Derived::Scalar>, BasicStationStats<typename Derived::Scalar>> normalize(
    const Eigen::MatrixBase<Derived>& x, typename Derived::Scalar eps = 1e-5) {
    auto stats = station_stats(x, eps);
    RowMajorMatrix<typename Derived::Scalar> xp =
        ((x.rowwise() - stats.mu).array().rowwise() / stats.sigma.array()).matrix();
    return {std::move(xp), std::move(stats)};
}

/// Applies stats computed on another window: (x - mu) / sigma. Used for targets.
template <typename Derived>
RowMajorMatrix<typename Derived::Scalar> apply_stats(const Eigen::MatrixBase<Derived>& x,
                                                     const BasicStationStats<typename Derived::Scalar>& stats) {
    if (x.cols() != stats.channels()) {
        throw DimensionError("apply_stats: " + std::to_string(x.cols()) + " channels vs stats for " +
                             std::to_string(stats.channels()));
    }
    return ((x.rowwise() - stats.mu).array().rowwise() / stats.sigma.array()).matrix();
}

/// Algebraic inverse of normalize: y = sigma * y' + mu. The pipeline default.
template <typename Derived>
RowMajorMatrix<typename Derived::Scalar> denormalize_inverse(
    const Eigen::MatrixBase<Derived>& y_prime, const BasicStationStats<typename Derived::Scalar>& stats) {
    if (y_prime.cols() != stats.channels()) {
        throw DimensionError("denormalize: " + std::to_string(y_prime.cols()) + " channels vs stats for " +
                             std::to_string(stats.channels()));
    }
    return ((y_prime.array().rowwise() * stats.sigma.array()).rowwise() + stats.mu.array()).matrix();
}

/// Variant y = sigma * (y' + mu), shifting before scaling. Not the inverse of
/// normalize; kept only for comparison.
template <typename Derived>
RowMajorMatrix<typename Derived::Scalar> denormalize_shifted(const Eigen::MatrixBase<Derived>& y_prime,
                                                           const BasicStationStats<typename Derived::Scalar>& stats) {
    if (y_prime.cols() != stats.channels()) {
        throw DimensionError("denormalize: " + std::to_string(y_prime.cols()) + " channels vs stats for " +
                             std::to_string(stats.channels()));
    }
    return ((y_prime.rowwise() + stats.mu).array().rowwise() * stats.sigma.array()).matrix();
}

}  // namespace htv
