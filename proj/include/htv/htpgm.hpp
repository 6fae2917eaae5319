#pragma once

// Hierarchical Gaussian latent module.
//
// Layer i (0-based here) holds latents of shape [T_i, K] with T_0 = T and
// T_{i+1} = ceil(T_i / s). The posterior of every layer is computed from the
// raw (un-normalized) input window, downsampled by a chain of learned strided
// convolutions. Priors flow top-down: the top layer is conditioned on pooled
// transformer states h, lower layers on their block-parent latent plus pooled h.

#include "htv/config.hpp"
#include "htv/params.hpp"
#include "htv/tensor.hpp"

#include <vector>

namespace htv {

struct GaussianParams {
    Tensor mu;
    Tensor sigma;
};

struct LatentStack {
    std::vector<GaussianParams> posterior;
    std::vector<GaussianParams> prior;
    std::vector<Tensor> z;
    Tensor z_sum;
};

Tensor activate(const Tensor& x, Activation act);

/// z = mu + sigma * eta with eta ~ N(0, I) from `rng`.
Tensor sample_reparameterized(const GaussianParams& g, Rng& rng);

/// Closed-form KL(q || p) between diagonal Gaussians, summed over all elements.
Tensor kl_gaussian(const GaussianParams& q, const GaussianParams& p);

/// -log N(x | mu, diag(sigma^2)) summed over all elements.
Tensor gaussian_nll(const Tensor& x, const GaussianParams& p);

/// Sum of every layer upsampled to `target_rows` by nearest-neighbour interpolation.
Tensor fuse_latents(const std::vector<Tensor>& z, Index target_rows);

/// [to, from] matrix averaging the source rows that map to each target row
/// under the nearest-neighbour rule floor(j * to / from). Requires to <= from.
Matrix pooling_matrix(Index from, Index to);

/// Kernel-s stride-s convolution along rows. x: [n, C], w: [s*C, C_out],
/// b: [1, C_out]. The tail is zero-padded to a multiple of s.
Tensor strided_conv(const Tensor& x, const Tensor& w, const Tensor& b, Index stride);

class Htpgm {
public:
    Htpgm(const ModelConfig& cfg, ParameterSet& params, Rng& init_rng);

    const std::vector<Index>& ladder() const { return ladder_; }

    std::vector<GaussianParams> infer_posteriors(Tape& tape, ParameterSet& params, const Matrix& x_raw) const;

    /// Posterior means as constant tensors (no sampling).
    std::vector<Tensor> posterior_means(const std::vector<GaussianParams>& posteriors) const;

    std::vector<GaussianParams> compute_priors(Tape& tape, ParameterSet& params, const std::vector<Tensor>& z,
                                               const Tensor& h) const;

    /// Gaussian over the raw window x: [T, V].
    GaussianParams reconstruction_params(Tape& tape, ParameterSet& params, const Tensor& z1,
                                         const Tensor& h) const;

private:
    struct PosteriorHead {
        std::size_t mu_w, mu_b, sigma_w, sigma_b;
    };
    struct PriorHead {
        std::size_t z_w = 0, h_w = 0, rho = 0;
    };

    ModelConfig cfg_;
    std::vector<Index> ladder_;
    std::vector<std::size_t> down_w_, down_b_;
    std::vector<PosteriorHead> post_;
    std::vector<PriorHead> prior_;
    std::size_t recon_z_w_ = 0, recon_h_w_ = 0, recon_out_w_ = 0, recon_out_b_ = 0, recon_rho_ = 0;
};

/// softplus^{-1}(1): the raw value giving unit scale.
inline constexpr Scalar kUnitSoftplusRaw = 0.54132485461291810;

}  // namespace htv
