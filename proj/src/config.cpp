#include "htv/config.hpp"

namespace htv {

Activation parse_activation(const std::string& name) {
    if (name == "tanh") return Activation::kTanh;
    if (name == "relu") return Activation::kRelu;
    throw ConfigError("model.activation", "expected \"tanh\" or \"relu\", got \"" + name + "\"");
}

std::string to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "relu"; }

std::vector<Index> time_ladder(Index input_len, Index scale, Index layers) {
    std::vector<Index> ladder;
    Index t = input_len;
    for (Index i = 0; i < layers; ++i) {
        ladder.push_back(t);
        t = (t + scale - 1) / scale;
    }
    return ladder;
}

std::vector<Index> ModelConfig::time_ladder() const { return htv::time_ladder(input_len, scale, latent_layers); }

void ModelConfig::validate(const std::string& prefix) const {
    auto positive = [&](Index v, const char* name) {
        if (v < 1) throw ConfigError(prefix + "." + name, "must be >= 1, got " + std::to_string(v));
    };
    positive(input_len, "input_len");
    positive(horizon, "horizon");
    positive(channels, "channels");
    positive(latent_layers, "layers");
    positive(d_model, "d_model");
    positive(heads, "heads");
    positive(encoder_layers, "encoder_layers");
    if (input_len < 2) throw ConfigError(prefix + ".input_len", "must be >= 2 for stationarization");
    if (time_features < 0) throw ConfigError(prefix + ".time_features", "must be >= 0");
    if (scale < 2) throw ConfigError(prefix + ".scale", "must be >= 2, got " + std::to_string(scale));
    if (d_k < 0) throw ConfigError(prefix + ".d_k", "must be >= 0");
    if (d_ff < 0) throw ConfigError(prefix + ".d_ff", "must be >= 0");
    // The top layer must still cover at least one full stride of the input.
    Index span = 1;
    for (Index i = 1; i < latent_layers; ++i) span *= scale;
    if (input_len < span) {
        throw ConfigError(prefix + ".layers", "hierarchy too deep: input_len " + std::to_string(input_len) +
                                                  " < scale^(layers-1) = " + std::to_string(span));
    }
    if (!(alpha >= 0.0)) throw ConfigError(prefix + ".alpha", "must be >= 0");
    if (!(gamma >= 0.0)) throw ConfigError(prefix + ".gamma", "must be >= 0");
    if (!(eps > 0.0)) throw ConfigError(prefix + ".eps", "must be > 0");
    if (!(recon_weight >= 0.0)) throw ConfigError(prefix + ".recon_weight", "must be >= 0");
    if (!(kl_weight >= 0.0)) throw ConfigError(prefix + ".kl_weight", "must be >= 0");
}

void TrainConfig::validate(const std::string& prefix) const {
    if (!(lr >= 0.0)) throw ConfigError(prefix + ".lr", "must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError(prefix + ".beta1", "must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError(prefix + ".beta2", "must be in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError(prefix + ".adam_eps", "must be > 0");
    if (epochs < 0) throw ConfigError(prefix + ".epochs", "must be >= 0");
    if (batch < 1) throw ConfigError(prefix + ".batch", "must be >= 1");
    if (patience < 0) throw ConfigError(prefix + ".patience", "must be >= 0");
    if (max_steps < 0) throw ConfigError(prefix + ".max_steps", "must be >= 0");
    if (!(max_grad_norm >= 0.0)) throw ConfigError(prefix + ".max_grad_norm", "must be >= 0");
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, SeedStream stream) {
    return splitmix64(master ^ splitmix64(static_cast<std::uint64_t>(stream)));
}

}  // namespace htv
