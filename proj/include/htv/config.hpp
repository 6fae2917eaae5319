#pragma once

#include "htv/tensor.hpp"

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace htv {

/// Invalid configuration. The message starts with the offending field path.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

enum class Activation { kTanh, kRelu };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

struct ModelConfig {
    Index input_len = 96;      // T
    Index horizon = 96;        // H
    Index channels = 7;        // V
    Index time_features = 4;   // F: month, day, weekday, hour
    Index latent_layers = 2;   // L
    Index scale = 2;           // s, time shrink factor between latent layers
    Index d_model = 16;        // d, also the shared latent width K
    Index heads = 2;           // m
    Index d_k = 0;             // 0 -> d_model / heads
    Index d_ff = 0;            // 0 -> 2 * d_model
    Index encoder_layers = 1;
    Scalar alpha = 1.0;        // latent fusion weight in attention
    Scalar gamma = 1.0;        // prediction weight in the objective
    Scalar eps = 1e-5;         // sigma floor for stationarization
    Scalar recon_weight = 1.0;
    Scalar kl_weight = 1.0;
    bool fusion = true;
    Activation activation = Activation::kTanh;

    Index head_dim() const { return d_k > 0 ? d_k : std::max<Index>(1, d_model / heads); }
    Index ff_dim() const { return d_ff > 0 ? d_ff : 2 * d_model; }
    Index latent_dim() const { return d_model; }

    /// T_1 = T, T_{i+1} = ceil(T_i / s).
    std::vector<Index> time_ladder() const;

    /// Throws ConfigError naming the first invalid field (prefixed with `prefix`).
    void validate(const std::string& prefix = "model") const;

    bool operator==(const ModelConfig&) const = default;
};

std::vector<Index> time_ladder(Index input_len, Index scale, Index layers);

struct TrainConfig {
    Scalar lr = 1e-3;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar adam_eps = 1e-8;
    Index epochs = 10;
    Index batch = 16;
    Index patience = 3;
    Index max_steps = 0;        // 0 -> unlimited
    Scalar max_grad_norm = 0.0; // 0 -> no clipping
    std::uint64_t seed = 1;

    void validate(const std::string& prefix = "train") const;

    bool operator==(const TrainConfig&) const = default;
};

// ---------------------------------------------------------------------------
// Seeding. One master seed fans out to independent streams with splitmix64:
// stream_seed = splitmix64(master ^ splitmix64(stream_tag)).

using Rng = std::mt19937_64;

enum class SeedStream : std::uint64_t { kShuffle = 1, kInit = 2, kSampling = 3, kSynth = 4 };

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, SeedStream stream);
inline Rng make_rng(std::uint64_t master, SeedStream stream) { return Rng(derive_seed(master, stream)); }

}  // namespace htv
