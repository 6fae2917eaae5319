#pragma once

#include "htv/config.hpp"
#include "htv/data.hpp"
#include "htv/gradcheck.hpp"
#include "htv/params.hpp"
#include "htv/tensor.hpp"

#include <random>

namespace htv::testing {

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, Scalar lo = -1.0, Scalar hi = 1.0) {
    std::uniform_real_distribution<Scalar> dist(lo, hi);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

inline Matrix mat(std::initializer_list<std::initializer_list<Scalar>> rows) {
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
    Index r = 0;
    for (const auto& row : rows) {
        Index c = 0;
        for (Scalar v : row) m(r, c++) = v;
        ++r;
    }
    return m;
}

/// T=8, V=2, d=4, L=2, m=2: the configuration used for end-to-end gradient checks.
inline ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.input_len = 8;
    cfg.horizon = 4;
    cfg.channels = 2;
    cfg.latent_layers = 2;
    cfg.scale = 2;
    cfg.d_model = 4;
    cfg.heads = 2;
    return cfg;
}

inline SeriesWindow random_window(const ModelConfig& cfg, Rng& rng, Scalar level = 0.0) {
    SeriesWindow w;
    w.x = random_matrix(cfg.input_len, cfg.channels, rng).array() + level;
    w.target = random_matrix(cfg.horizon, cfg.channels, rng).array() + level;
    w.time_features = random_matrix(cfg.input_len + cfg.horizon, cfg.time_features, rng, -0.5, 0.5);
    return w;
}

/// Finite-difference check of one registered parameter. `build` records a
/// scalar loss on a fresh tape, binding parameters through `params`.
template <class Build>
GradientCheck check_parameter_gradient(ParameterSet& params, std::size_t idx, Build build, Scalar h = 1e-5) {
    GradientCheck out;
    params.zero_grad();
    {
        Tape tape;
        tape.backward(build(tape));
    }
    out.analytic = params[idx].grad;
    Matrix& w = params[idx].value;
    out.numeric = Matrix::Zero(w.rows(), w.cols());
    for (Index i = 0; i < w.size(); ++i) {
        const Scalar orig = w.data()[i];
        w.data()[i] = orig + h;
        Tape up_tape;
        const Scalar up = build(up_tape).item();
        w.data()[i] = orig - h;
        Tape down_tape;
        const Scalar down = build(down_tape).item();
        w.data()[i] = orig;
        out.numeric.data()[i] = (up - down) / (2.0 * h);
        const Scalar err = gradient_rel_error(out.analytic.data()[i], out.numeric.data()[i]);
        if (err > out.max_rel_error || out.worst_index < 0) {
            out.max_rel_error = err;
            out.worst_index = i;
        }
    }
    params.zero_grad();
    return out;
}

inline std::size_t param_index(const ParameterSet& ps, const std::string& name) {
    for (std::size_t i = 0; i < ps.size(); ++i)
        if (ps[i].name == name) return i;
    throw std::out_of_range("no parameter " + name);
}

}  // namespace htv::testing
