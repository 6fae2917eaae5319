#include "htv/backbone.hpp"

#include <cmath>
#include <string>

namespace htv {

Matrix positional_encoding(Index rows, Index d) {
    Matrix pe(rows, d);
    for (Index t = 0; t < rows; ++t) {
        for (Index j = 0; j < d; ++j) {
            const Index pair = j / 2;
            const Scalar freq = std::pow(10000.0, -2.0 * static_cast<Scalar>(pair) / static_cast<Scalar>(d));
            const Scalar angle = static_cast<Scalar>(t) * freq;
            pe(t, j) = j % 2 == 0 ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps) {
    Tensor centered = x - mean(x, 1);
    Tensor stddev = sqrt(variance(x, 1, true) + eps);
    return centered / stddev * gain + bias;
}

Backbone::Backbone(const ModelConfig& cfg, ParameterSet& params, Rng& init_rng)
    : cfg_(cfg), pe_(positional_encoding(cfg.input_len, cfg.d_model)) {
    const Index v = cfg.channels, d = cfg.d_model, f = cfg.time_features, dk = cfg.head_dim(), ff = cfg.ff_dim();
    value_w_ = params.add("embed.value.weight", uniform_init(v, v, d, init_rng));
    time_w_ = params.add("embed.time.weight", uniform_init(f, f, d, init_rng));

    for (Index l = 0; l < cfg.encoder_layers; ++l) {
        const std::string p = "enc" + std::to_string(l);
        EncoderLayer layer{};
        for (Index i = 0; i < cfg.heads; ++i) {
            const std::string hp = p + ".attn.head" + std::to_string(i);
            Head head{};
            head.q = params.add(hp + ".q", uniform_init(d, d, dk, init_rng));
            head.k = params.add(hp + ".k", uniform_init(d, d, dk, init_rng));
            head.v = params.add(hp + ".v", uniform_init(d, d, dk, init_rng));
            layer.heads.push_back(head);
        }
        layer.out = params.add(p + ".attn.out", uniform_init(cfg.heads * dk, cfg.heads * dk, d, init_rng));
        layer.w1 = params.add(p + ".ffn.w1", uniform_init(d, d, ff, init_rng));
        layer.b1 = params.add(p + ".ffn.b1", Matrix::Zero(1, ff));
        layer.w2 = params.add(p + ".ffn.w2", uniform_init(ff, ff, d, init_rng));
        layer.b2 = params.add(p + ".ffn.b2", Matrix::Zero(1, d));
        layer.gain = params.add(p + ".norm.gain", Matrix::Ones(1, d));
        layer.bias = params.add(p + ".norm.bias", Matrix::Zero(1, d));
        layers_.push_back(std::move(layer));
    }

    const Index flat = cfg.input_len * d;
    head_w1_ = params.add("head.w1", uniform_init(flat, flat, ff, init_rng));
    head_b1_ = params.add("head.b1", Matrix::Zero(1, ff));
    head_w2_ = params.add("head.w2", uniform_init(ff, ff, cfg.horizon * v, init_rng));
    head_b2_ = params.add("head.b2", Matrix::Zero(1, cfg.horizon * v));
}

Tensor Backbone::embed(Tape& tape, ParameterSet& params, const Matrix& x_prime, const Matrix& time_features) const {
    if (x_prime.rows() != cfg_.input_len || x_prime.cols() != cfg_.channels) {
        throw DimensionError("embed: expected x' of [" + std::to_string(cfg_.input_len) + ", " +
                             std::to_string(cfg_.channels) + "], got " + shape_string(x_prime));
    }
    if (time_features.cols() != cfg_.time_features || time_features.rows() < cfg_.input_len) {
        throw DimensionError("embed: expected " + std::to_string(cfg_.time_features) +
                             " time features over at least " + std::to_string(cfg_.input_len) + " rows, got " +
                             shape_string(time_features));
    }
    Tensor value = matmul(tape.constant(x_prime), params.bind(tape, value_w_));
    Tensor out = value + tape.constant(pe_);
    if (cfg_.time_features > 0) {
        Tensor feats = tape.constant(time_features.topRows(cfg_.input_len));
        out = out + matmul(feats, params.bind(tape, time_w_));
    }
    return out;
}

Tensor Backbone::fused_attention(Tape& tape, ParameterSet& params, const Tensor& embedded, const Tensor& z_sum,
                                 Scalar alpha, std::size_t layer, std::vector<Tensor>* weights) const {
    Tensor u = embedded;
    if (z_sum.valid() && alpha != 0.0) {
        if (z_sum.shape() != embedded.shape()) {
            throw DimensionError("fused_attention: z_sum " + shape_string(z_sum.value()) + " vs embedding " +
                                 shape_string(embedded.value()));
        }
        u = embedded + alpha * z_sum;
    }
    const EncoderLayer& enc = layers_.at(layer);
    const Scalar inv_sqrt_dk = 1.0 / std::sqrt(static_cast<Scalar>(cfg_.head_dim()));
    std::vector<Tensor> heads;
    heads.reserve(enc.heads.size());
    for (const Head& head : enc.heads) {
        Tensor q = matmul(u, params.bind(tape, head.q));
        Tensor k = matmul(u, params.bind(tape, head.k));
        Tensor v = matmul(u, params.bind(tape, head.v));
        Tensor attn = softmax(inv_sqrt_dk * matmul(q, transpose(k)), 1);
        if (weights != nullptr) weights->push_back(attn);
        heads.push_back(matmul(attn, v));
    }
    Tensor joined = heads.size() == 1 ? heads.front() : concat(heads, 1);
    return matmul(joined, params.bind(tape, enc.out));
}

Tensor Backbone::feed_forward(Tape& tape, ParameterSet& params, const Tensor& attention, std::size_t layer) const {
    const EncoderLayer& enc = layers_.at(layer);
    Tensor hidden = relu(matmul(attention, params.bind(tape, enc.w1)) + params.bind(tape, enc.b1));
    Tensor residual = attention + matmul(hidden, params.bind(tape, enc.w2)) + params.bind(tape, enc.b2);
    return layer_norm(residual, params.bind(tape, enc.gain), params.bind(tape, enc.bias));
}

Tensor Backbone::forecast_head(Tape& tape, ParameterSet& params, const Tensor& h) const {
    Tensor flat = reshape(h, 1, h.rows() * h.cols());
    Tensor hidden = relu(matmul(flat, params.bind(tape, head_w1_)) + params.bind(tape, head_b1_));
    Tensor out = matmul(hidden, params.bind(tape, head_w2_)) + params.bind(tape, head_b2_);
    return reshape(out, cfg_.horizon, cfg_.channels);
}

BackboneState Backbone::encode(Tape& tape, ParameterSet& params, const Matrix& x_prime,
                               const Matrix& time_features, const Tensor& z_sum, Scalar alpha) const {
    BackboneState state;
    state.embedded = embed(tape, params, x_prime, time_features);
    state.fused = z_sum.valid() && alpha != 0.0 ? state.embedded + alpha * z_sum : state.embedded;
    Tensor x = state.embedded;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const bool first = l == 0;
        state.attention = fused_attention(tape, params, x, first ? z_sum : Tensor{}, first ? alpha : 0.0, l,
                                          first ? &state.attention_weights : nullptr);
        x = feed_forward(tape, params, state.attention, l);
    }
    state.h = x;
    return state;
}

}  // namespace htv
