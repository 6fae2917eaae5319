#pragma once

#include "htv/config.hpp"
#include "htv/params.hpp"
#include "htv/tensor.hpp"

#include <vector>

namespace htv {

struct BackboneState {
    Tensor embedded;  // [T, d]
    Tensor fused;     // [T, d], attention input of the first encoder layer
    Tensor attention; // [T, d], projected multi-head output of the last layer
    Tensor h;         // [T, d]
    std::vector<Tensor> attention_weights;  // first layer, one [T, T] per head
};

/// Fixed sinusoidal encoding: pe[t, 2i] = sin(t / 10000^(2i/d)), pe[t, 2i+1] = cos(...).
Matrix positional_encoding(Index rows, Index d);

/// Normalizes each row to zero mean / unit (biased) variance, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps = 1e-12);

class Backbone {
public:
    Backbone(const ModelConfig& cfg, ParameterSet& params, Rng& init_rng);

    /// x' W_value + features W_time + positional encoding. `time_features` may
    /// carry more than T rows (window + horizon); only the first T are used.
    Tensor embed(Tape& tape, ParameterSet& params, const Matrix& x_prime, const Matrix& time_features) const;

    /// Multi-head self-attention over u = embedded + alpha * z_sum. An invalid
    /// z_sum or alpha == 0 skips fusion entirely.
    Tensor fused_attention(Tape& tape, ParameterSet& params, const Tensor& embedded, const Tensor& z_sum,
                           Scalar alpha, std::size_t layer = 0, std::vector<Tensor>* weights = nullptr) const;

    /// h = LayerNorm(O + W2 relu(W1 O + b1) + b2).
    Tensor feed_forward(Tape& tape, ParameterSet& params, const Tensor& attention, std::size_t layer = 0) const;

    /// Flattens h and maps it through a two-layer MLP to the [H, V] horizon.
    Tensor forecast_head(Tape& tape, ParameterSet& params, const Tensor& h) const;

    /// Embedding followed by every encoder layer; fusion applies at the first layer.
    BackboneState encode(Tape& tape, ParameterSet& params, const Matrix& x_prime, const Matrix& time_features,
                         const Tensor& z_sum, Scalar alpha) const;

private:
    struct Head {
        std::size_t q, k, v;
    };
    struct EncoderLayer {
        std::vector<Head> heads;
        std::size_t out;
        std::size_t w1, b1, w2, b2, gain, bias;
    };

    ModelConfig cfg_;
    Matrix pe_;
    std::size_t value_w_ = 0, time_w_ = 0;
    std::vector<EncoderLayer> layers_;
    std::size_t head_w1_ = 0, head_b1_ = 0, head_w2_ = 0, head_b2_ = 0;
};

}  // namespace htv
