#include "htv/htpgm.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace htv {

Tensor activate(const Tensor& x, Activation act) { return act == Activation::kTanh ? tanh(x) : relu(x); }

Tensor sample_reparameterized(const GaussianParams& g, Rng& rng) {
    std::normal_distribution<Scalar> normal(0.0, 1.0);
    Matrix eta(g.mu.rows(), g.mu.cols());
    for (Index i = 0; i < eta.size(); ++i) eta.data()[i] = normal(rng);
    return g.mu + g.sigma * g.mu.tape().constant(std::move(eta));
}

Tensor kl_gaussian(const GaussianParams& q, const GaussianParams& p) {
    if (q.mu.shape() != p.mu.shape() || q.sigma.shape() != p.sigma.shape() || q.mu.shape() != q.sigma.shape()) {
        throw DimensionError("kl_gaussian: shape mismatch q " + shape_string(q.mu.value()) + " vs p " +
                             shape_string(p.mu.value()));
    }
    Tensor ratio = (square(q.sigma) + square(q.mu - p.mu)) / (2.0 * square(p.sigma));
    return sum(log(p.sigma) - log(q.sigma) + ratio - 0.5);
}

Tensor gaussian_nll(const Tensor& x, const GaussianParams& p) {
    const Scalar half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    Tensor standardized = (x - p.mu) / p.sigma;
    return sum(0.5 * square(standardized) + log(p.sigma) + half_log_2pi);
}

Tensor fuse_latents(const std::vector<Tensor>& z, Index target_rows) {
    if (z.empty()) throw DimensionError("fuse_latents: no latent layers");
    Tensor total = nearest_interpolate(z.front(), target_rows);
    for (std::size_t i = 1; i < z.size(); ++i) {
        if (z[i].cols() != z.front().cols()) {
            throw DimensionError("fuse_latents: latent width differs across layers");
        }
        total = total + nearest_interpolate(z[i], target_rows);
    }
    return total;
}

Matrix pooling_matrix(Index from, Index to) {
    if (to < 1 || to > from) {
        throw DimensionError("pooling_matrix: cannot pool " + std::to_string(from) + " rows to " + std::to_string(to));
    }
    Matrix p = Matrix::Zero(to, from);
    for (Index j = 0; j < from; ++j) p(j * to / from, j) = 1.0;
    const Eigen::VectorXd counts = p.rowwise().sum();
    return counts.cwiseInverse().asDiagonal() * p;
}

Tensor strided_conv(const Tensor& x, const Tensor& w, const Tensor& b, Index stride) {
    const Index n = x.rows(), c = x.cols();
    const Index out_rows = (n + stride - 1) / stride;
    Tensor padded = x;
    if (out_rows * stride != n) {
        padded = concat({x, x.tape().constant(Matrix::Zero(out_rows * stride - n, c))}, 0);
    }
    return matmul(reshape(padded, out_rows, stride * c), w) + b;
}

Htpgm::Htpgm(const ModelConfig& cfg, ParameterSet& params, Rng& init_rng) : cfg_(cfg), ladder_(cfg.time_ladder()) {
    const Index v = cfg.channels, k = cfg.latent_dim(), d = cfg.d_model, s = cfg.scale;
    const auto layers = static_cast<std::size_t>(cfg.latent_layers);

    for (std::size_t i = 0; i + 1 < layers; ++i) {
        const std::string p = "htpgm.down" + std::to_string(i);
        down_w_.push_back(params.add(p + ".weight", uniform_init(s * v, s * v, v, init_rng)));
        down_b_.push_back(params.add(p + ".bias", Matrix::Zero(1, v)));
    }
    for (std::size_t i = 0; i < layers; ++i) {
        const std::string p = "htpgm.q" + std::to_string(i);
        PosteriorHead head{};
        head.mu_w = params.add(p + ".mu.weight", uniform_init(v, v, k, init_rng));
        head.mu_b = params.add(p + ".mu.bias", Matrix::Zero(1, k));
        head.sigma_w = params.add(p + ".sigma.weight", uniform_init(v, v, k, init_rng));
        head.sigma_b = params.add(p + ".sigma.bias", Matrix::Zero(1, k));
        post_.push_back(head);
    }
    for (std::size_t i = 0; i < layers; ++i) {
        const std::string p = "htpgm.p" + std::to_string(i);
        PriorHead head{};
        const bool top = i + 1 == layers;
        if (!top) head.z_w = params.add(p + ".z.weight", uniform_init(k, k, k, init_rng));
        head.h_w = params.add(p + ".h.weight", uniform_init(d, d, k, init_rng));
        if (!top) head.rho = params.add(p + ".rho", Matrix::Constant(1, 1, kUnitSoftplusRaw));
        prior_.push_back(head);
    }
    recon_z_w_ = params.add("htpgm.recon.z.weight", uniform_init(k, k, k, init_rng));
    recon_h_w_ = params.add("htpgm.recon.h.weight", uniform_init(d, d, k, init_rng));
    recon_out_w_ = params.add("htpgm.recon.out.weight", uniform_init(k, k, v, init_rng));
    recon_out_b_ = params.add("htpgm.recon.out.bias", Matrix::Zero(1, v));
    recon_rho_ = params.add("htpgm.recon.rho", Matrix::Constant(1, v, kUnitSoftplusRaw));
}

std::vector<GaussianParams> Htpgm::infer_posteriors(Tape& tape, ParameterSet& params, const Matrix& x_raw) const {
    if (x_raw.cols() != cfg_.channels) {
        throw DimensionError("infer_posteriors: expected " + std::to_string(cfg_.channels) + " channels, got " +
                             shape_string(x_raw));
    }
    Index span = 1;
    for (Index i = 1; i < cfg_.latent_layers; ++i) span *= cfg_.scale;
    if (x_raw.rows() < span) {
        throw ConfigError("model.layers", "hierarchy too deep: window of " + std::to_string(x_raw.rows()) +
                                              " steps < scale^(layers-1) = " + std::to_string(span));
    }

    std::vector<GaussianParams> out;
    Tensor level = tape.constant(x_raw);
    for (std::size_t i = 0; i < post_.size(); ++i) {
        if (i > 0) {
            level = strided_conv(level, params.bind(tape, down_w_[i - 1]), params.bind(tape, down_b_[i - 1]),
                                 cfg_.scale);
        }
        const PosteriorHead& head = post_[i];
        Tensor mu = activate(matmul(level, params.bind(tape, head.mu_w)) + params.bind(tape, head.mu_b),
                             cfg_.activation);
        Tensor sigma = softplus(activate(
            matmul(level, params.bind(tape, head.sigma_w)) + params.bind(tape, head.sigma_b), cfg_.activation));
        out.push_back({mu, sigma});
    }
    return out;
}

std::vector<Tensor> Htpgm::posterior_means(const std::vector<GaussianParams>& posteriors) const {
    std::vector<Tensor> z;
    z.reserve(posteriors.size());
    for (const GaussianParams& g : posteriors) z.push_back(g.mu);
    return z;
}

std::vector<GaussianParams> Htpgm::compute_priors(Tape& tape, ParameterSet& params, const std::vector<Tensor>& z,
                                                  const Tensor& h) const {
    const std::size_t layers = prior_.size();
    if (z.size() != layers) {
        throw DimensionError("compute_priors: expected " + std::to_string(layers) + " latent layers, got " +
                             std::to_string(z.size()));
    }
    if (h.rows() != ladder_.front() || h.cols() != cfg_.d_model) {
        throw DimensionError("compute_priors: h has shape " + shape_string(h.value()));
    }
    auto pooled_h = [&](std::size_t i) {
        if (ladder_[i] == h.rows()) return h;
        return matmul(tape.constant(pooling_matrix(h.rows(), ladder_[i])), h);
    };

    std::vector<GaussianParams> priors(layers);
    const std::size_t top = layers - 1;
    {
        Tensor mu = activate(matmul(pooled_h(top), params.bind(tape, prior_[top].h_w)), cfg_.activation);
        priors[top] = {mu, tape.constant(Matrix::Ones(mu.rows(), mu.cols()))};
    }
    for (std::size_t i = top; i-- > 0;) {
        if (z[i + 1].rows() != ladder_[i + 1]) {
            throw DimensionError("compute_priors: latent " + std::to_string(i + 1) + " has shape " +
                                 shape_string(z[i + 1].value()));
        }
        // Each step of layer i is parented by step floor(t * T_{i+1} / T_i) above it.
        Tensor parent = nearest_interpolate(z[i + 1], ladder_[i]);
        Tensor mu = activate(
            matmul(parent, params.bind(tape, prior_[i].z_w)) + matmul(pooled_h(i), params.bind(tape, prior_[i].h_w)),
            cfg_.activation);
        Tensor sigma = tape.constant(Matrix::Ones(mu.rows(), mu.cols())) * softplus(params.bind(tape, prior_[i].rho));
        priors[i] = {mu, sigma};
    }
    return priors;
}

GaussianParams Htpgm::reconstruction_params(Tape& tape, ParameterSet& params, const Tensor& z1,
                                            const Tensor& h) const {
    Tensor hidden = activate(
        matmul(z1, params.bind(tape, recon_z_w_)) + matmul(h, params.bind(tape, recon_h_w_)), cfg_.activation);
    Tensor mu = matmul(hidden, params.bind(tape, recon_out_w_)) + params.bind(tape, recon_out_b_);
    Tensor sigma = tape.constant(Matrix::Ones(mu.rows(), mu.cols())) * softplus(params.bind(tape, recon_rho_));
    return {mu, sigma};
}

}  // namespace htv
