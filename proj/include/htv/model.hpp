#pragma once

#include "htv/backbone.hpp"
#include "htv/config.hpp"
#include "htv/htpgm.hpp"
#include "htv/params.hpp"

#include <cstdint>

namespace htv {

/// Parameters plus the two sub-networks that index into them.
class HtvModel {
public:
    /// Validates `cfg` and initializes weights from the init stream of `seed`.
    HtvModel(const ModelConfig& cfg, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParameterSet& params() { return params_; }
    const ParameterSet& params() const { return params_; }
    const Htpgm& htpgm() const { return htpgm_; }
    const Backbone& backbone() const { return backbone_; }

    /// Objective weights and fusion can change without touching the weights.
    void set_alpha(Scalar alpha) { cfg_.alpha = alpha; }
    void set_gamma(Scalar gamma) { cfg_.gamma = gamma; }
    void set_objective_weights(Scalar recon, Scalar kl) {
        cfg_.recon_weight = recon;
        cfg_.kl_weight = kl;
    }

private:
    static ModelConfig checked(const ModelConfig& cfg);

    ModelConfig cfg_;
    ParameterSet params_;
    Rng init_rng_;
    Htpgm htpgm_;
    Backbone backbone_;
};

}  // namespace htv
