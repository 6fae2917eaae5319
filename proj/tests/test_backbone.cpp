#include "doctest.h"

#include "htv/backbone.hpp"
#include "htv/gradcheck.hpp"
#include "test_util.hpp"

#include <array>
#include <cmath>

using namespace htv;
using htv::testing::mat;
using htv::testing::random_matrix;

namespace {

ModelConfig config(Index t = 6, Index heads = 2, Index d = 4) {
    ModelConfig c;
    c.input_len = t;
    c.horizon = 3;
    c.channels = 2;
    c.latent_layers = 1;
    c.d_model = d;
    c.heads = heads;
    return c;
}

struct Fixture {
    ModelConfig cfg;
    ParameterSet params;
    Rng rng{21};
    Backbone net;
    explicit Fixture(ModelConfig c = config()) : cfg(c), net(cfg, params, rng) {}
};

}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("positional encoding") {
    const Matrix pe = positional_encoding(5, 4);
    CHECK(pe.row(0) == mat({{0, 1, 0, 1}}));
    CHECK(pe(1, 0) == doctest::Approx(std::sin(1.0)));
    CHECK(pe(1, 1) == doctest::Approx(std::cos(1.0)));
    CHECK(pe(3, 2) == doctest::Approx(std::sin(3.0 / 100.0)));
    CHECK(pe(3, 3) == doctest::Approx(std::cos(3.0 / 100.0)));
    CHECK(pe.cwiseAbs().maxCoeff() <= 1.0);
}

TEST_CASE("embedding is affine in x'") {
    Fixture f;
    Rng rng(1);
    const Matrix tf = random_matrix(9, 4, rng);
    const Matrix a = random_matrix(6, 2, rng), b = random_matrix(6, 2, rng);
    Tape t;
    const Matrix e0 = f.net.embed(t, f.params, Matrix::Zero(6, 2), tf).value();
    const Matrix ea = f.net.embed(t, f.params, a, tf).value() - e0;
    const Matrix eb = f.net.embed(t, f.params, b, tf).value() - e0;
    const Matrix eab = f.net.embed(t, f.params, 2.0 * a - 3.0 * b, tf).value() - e0;
    CHECK((eab - (2.0 * ea - 3.0 * eb)).cwiseAbs().maxCoeff() < 1e-12);

    const Matrix w = f.params.at("embed.value.weight").value;
    CHECK((ea - a * w).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(f.net.embed(t, f.params, Matrix::Zero(5, 2), tf), DimensionError);
    CHECK_THROWS_AS(f.net.embed(t, f.params, a, Matrix::Zero(9, 3)), DimensionError);
}

TEST_CASE("alpha = 0 leaves attention bitwise unchanged") {
    Fixture f;
    Rng rng(2);
    Tape t;
    const Tensor e = t.constant(random_matrix(6, 4, rng));
    const Tensor z = t.constant(random_matrix(6, 4, rng, -5, 5));
    const Matrix plain = f.net.fused_attention(t, f.params, e, Tensor{}, 1.0).value();
    CHECK(f.net.fused_attention(t, f.params, e, z, 0.0).value() == plain);
    CHECK(f.net.fused_attention(t, f.params, e, z, 0.5).value() != plain);
    CHECK(f.net.fused_attention(t, f.params, e, z, 0.5).value() ==
          f.net.fused_attention(t, f.params, e + 0.5 * z, Tensor{}, 1.0).value());
    CHECK_THROWS_AS(f.net.fused_attention(t, f.params, e, t.constant(Matrix::Zero(5, 4)), 1.0), DimensionError);
}

TEST_CASE("single-step attention returns the value projection") {
    Fixture f(config(1, 1));
    Rng rng(3);
    Tape t;
    const Matrix u = random_matrix(1, 4, rng);
    std::vector<Tensor> weights;
    const Matrix out = f.net.fused_attention(t, f.params, t.constant(u), Tensor{}, 0.0, 0, &weights).value();
    REQUIRE(weights.size() == 1);
    CHECK(weights[0].value()(0, 0) == doctest::Approx(1.0));
    const Matrix expect = u * f.params.at("enc0.attn.head0.v").value * f.params.at("enc0.attn.out").value;
    CHECK((out - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero query and key weights give uniform attention") {
    Fixture f(config(5, 2));
    for (Parameter& p : f.params) {
        if (p.name.ends_with(".q") || p.name.ends_with(".k")) p.value.setZero();
    }
    Rng rng(4);
    Tape t;
    const Matrix u = random_matrix(5, 4, rng);
    std::vector<Tensor> weights;
    const Matrix out = f.net.fused_attention(t, f.params, t.constant(u), Tensor{}, 0.0, 0, &weights).value();
    for (const auto& w : weights) CHECK((w.value().array() - 0.2).abs().maxCoeff() < 1e-15);

    // Every row then averages V over time.
    Matrix joined(5, 4);
    joined << Matrix::Constant(5, 1, 1.0) * (u.colwise().mean() * f.params.at("enc0.attn.head0.v").value),
        Matrix::Constant(5, 1, 1.0) * (u.colwise().mean() * f.params.at("enc0.attn.head1.v").value);
    CHECK((out - joined * f.params.at("enc0.attn.out").value).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention weights are row-stochastic") {
    Fixture f(config(7, 2));
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        Tape t;
        std::vector<Tensor> weights;
        f.net.fused_attention(t, f.params, t.constant(random_matrix(7, 4, rng, -3, 3)), Tensor{}, 0.0, 0, &weights);
        for (const auto& w : weights) {
            CHECK((w.value().array() >= 0.0).all());
            CHECK((w.value().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("swapping heads with the matching output rows is a symmetry") {
    Fixture f(config(6, 2));
    Rng rng(6);
    Tape t;
    const Tensor u = t.constant(random_matrix(6, 4, rng));
    const Matrix before = f.net.fused_attention(t, f.params, u, Tensor{}, 0.0).value();
    for (const char* m : {".q", ".k", ".v"}) {
        std::swap(f.params.at(std::string("enc0.attn.head0") + m).value,
                  f.params.at(std::string("enc0.attn.head1") + m).value);
    }
    Matrix& out = f.params.at("enc0.attn.out").value;
    const Matrix top = out.topRows(2);
    out.topRows(2) = out.bottomRows(2);
    out.bottomRows(2) = top;
    CHECK((f.net.fused_attention(t, f.params, u, Tensor{}, 0.0).value() - before).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("layer norm rows have zero mean and unit variance") {
    Rng rng(7);
    Tape t;
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix x = random_matrix(5, 6, rng, -10, 10);
        const Matrix y =
            layer_norm(t.constant(x), t.constant(Matrix::Ones(1, 6)), t.constant(Matrix::Zero(1, 6))).value();
        CHECK(y.rowwise().mean().cwiseAbs().maxCoeff() < 1e-12);
        CHECK(((y.array().square().rowwise().sum() / 6.0) - 1.0).abs().maxCoeff() < 1e-10);
    }
    const Matrix g = mat({{2, 2, 2}}), b = mat({{1, 1, 1}});
    const Matrix y = layer_norm(t.constant(mat({{1, 2, 3}})), t.constant(g), t.constant(b)).value();
    CHECK(y(0, 0) == doctest::Approx(1.0 - 2.0 * std::sqrt(1.5)));
    CHECK(y(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("feed-forward output is layer-normalized") {
    Fixture f;
    Rng rng(8);
    Tape t;
    const Matrix h = f.net.feed_forward(t, f.params, t.constant(random_matrix(6, 4, rng, -4, 4))).value();
    CHECK(h.rowwise().mean().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forecast head") {
    Fixture f;
    Rng rng(9);
    Tape t;
    CHECK(f.net.forecast_head(t, f.params, t.constant(random_matrix(6, 4, rng))).shape() == std::array<Index, 2>{3, 2});
    f.params.at("head.w1").value.setZero();
    f.params.at("head.b2").value = mat({{1, 2, 3, 4, 5, 6}});
    const Matrix y = f.net.forecast_head(t, f.params, t.constant(random_matrix(6, 4, rng))).value();
    CHECK(y == mat({{1, 2}, {3, 4}, {5, 6}}));
}

TEST_CASE("encode stacks layers and fuses only once") {
    ModelConfig c = config(6, 2);
    c.encoder_layers = 2;
    Fixture f(c);
    Rng rng(10);
    const Matrix x = random_matrix(6, 2, rng), tf = random_matrix(9, 4, rng);
    Tape t;
    const Tensor z = t.constant(random_matrix(6, 4, rng));
    BackboneState s = f.net.encode(t, f.params, x, tf, z, 0.7);
    CHECK(s.attention_weights.size() == 2);
    CHECK(s.fused.value() == (s.embedded.value() + 0.7 * z.value()));
    Tensor first = f.net.feed_forward(t, f.params, f.net.fused_attention(t, f.params, s.embedded, z, 0.7, 0), 0);
    Tensor second = f.net.feed_forward(t, f.params, f.net.fused_attention(t, f.params, first, Tensor{}, 0.0, 1), 1);
    CHECK((s.h.value() - second.value()).cwiseAbs().maxCoeff() < 1e-13);

    BackboneState zero = f.net.encode(t, f.params, x, tf, z, 0.0);
    BackboneState off = f.net.encode(t, f.params, x, tf, Tensor{}, 1.0);
    CHECK(zero.h.value() == off.h.value());
}

TEST_CASE("gradients through the backbone match finite differences") {
    Fixture f(config(4, 2));
    Rng rng(11);
    const Matrix x = random_matrix(4, 2, rng), tf = random_matrix(7, 4, rng), zs = random_matrix(4, 4, rng);
    auto build = [&](Tape& t) {
        BackboneState s = f.net.encode(t, f.params, x, tf, t.constant(zs), 0.5);
        return sum(square(f.net.forecast_head(t, f.params, s.h) - t.constant(Matrix::Ones(3, 2))));
    };
    for (const char* name : {"embed.value.weight", "embed.time.weight", "enc0.attn.head1.q", "enc0.attn.head0.k",
                             "enc0.attn.head0.v", "enc0.attn.out", "enc0.ffn.w1", "enc0.ffn.b2", "enc0.norm.gain",
                             "head.w1", "head.w2"}) {
        CAPTURE(name);
        CHECK(htv::testing::check_parameter_gradient(f.params, htv::testing::param_index(f.params, name), build)
                  .max_rel_error < 1e-5);
    }
}

}  // TEST_SUITE
