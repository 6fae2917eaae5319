#include "doctest.h"

#include "htv/objective.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <cmath>
#include <limits>

using namespace htv;
using htv::testing::mat;
using htv::testing::random_matrix;
using htv::testing::random_window;
using htv::testing::tiny_config;

namespace {

SeriesWindow window_from(const Matrix& x, const Matrix& target) {
    SeriesWindow w;
    w.x = x;
    w.target = target;
    w.time_features = Matrix::Zero(x.rows() + target.rows(), 4);
    return w;
}

DatasetSplit small_split(Index length = 260) {
    SynthSpec spec = default_synth_spec(2, length, 3);
    const TimeSeries s = generate_synthetic(spec);
    return chrono_split(s, {0.6, 0.2, 0.2}, 8, 4, 4);
}

}  // namespace

TEST_SUITE("objective") {

TEST_CASE("zero inference and prior weights give the closed-form KL constant") {
    HtvModel model(tiny_config(), 1);
    for (Parameter& p : model.params()) {
        const bool inference = p.name.rfind("htpgm.q", 0) == 0;
        const bool prior = p.name.rfind("htpgm.p", 0) == 0 && p.name.find(".rho") == std::string::npos;
        if (inference || prior) p.value.setZero();
    }
    Rng rng(2);
    const SeriesWindow w = random_window(model.config(), rng);
    Tape tape;
    Rng sampler(3);
    const ForwardResult fr = forward_step(tape, model, w, &sampler);
    const Scalar l2 = std::log(2.0);
    const Scalar per_unit = std::log(1.0 / l2) + l2 * l2 / 2.0 - 0.5;
    const auto ladder = model.htpgm().ladder();
    REQUIRE(fr.loss.kl_per_layer.size() == ladder.size());
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        const Scalar expect = static_cast<Scalar>(ladder[i] * model.config().latent_dim()) * per_unit;
        CHECK(fr.loss.kl_per_layer[i] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("gamma = 0 leaves reconstruction plus KL") {
    ModelConfig cfg = tiny_config();
    cfg.gamma = 0.0;
    HtvModel model(cfg, 4);
    Rng rng(5);
    const SeriesWindow w = random_window(cfg, rng);
    Tape tape;
    const ForwardResult fr = forward_step(tape, model, w, nullptr);
    CHECK(fr.loss.total == doctest::Approx(fr.loss.recon_nll + fr.loss.kl_sum()).epsilon(1e-14));
}

TEST_CASE("decomposition identity and non-negative KL every step") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        ModelConfig cfg = tiny_config();
        cfg.gamma = 0.1 * trial;
        cfg.recon_weight = trial % 2 == 0 ? 1.0 : 0.5;
        HtvModel model(cfg, static_cast<std::uint64_t>(trial));
        const SeriesWindow w = random_window(cfg, rng, 3.0 * trial);
        Tape tape;
        const ForwardResult fr = forward_step(tape, model, w, &rng);
        CHECK(std::abs(fr.loss.total - fr.loss.recombined()) <= 1e-12 * std::max(1.0, std::abs(fr.loss.total)));
        for (Scalar k : fr.loss.kl_per_layer) CHECK(k >= 0.0);
    }
}

TEST_CASE("forward_step is deterministic under a fixed seed") {
    HtvModel a(tiny_config(), 9), b(tiny_config(), 9);
    Rng rng(7);
    const SeriesWindow w = random_window(a.config(), rng);
    Rng sa(11), sb(11);
    Tape ta, tb;
    const ForwardResult ra = forward_step(ta, a, w, &sa), rb = forward_step(tb, b, w, &sb);
    CHECK(ra.loss.total == rb.loss.total);
    CHECK(ra.loss.kl_per_layer == rb.loss.kl_per_layer);
    CHECK(ra.y == rb.y);
}

TEST_CASE("forecast is denormalized with the input statistics") {
    HtvModel model(tiny_config(), 12);
    Rng rng(8);
    const SeriesWindow w = random_window(model.config(), rng, 40.0);
    Tape tape;
    const ForwardResult fr = forward_step(tape, model, w, nullptr);
    const Matrix expect = (fr.y_prime.array().rowwise() * fr.stats.sigma.array()).rowwise() + fr.stats.mu.array();
    CHECK((fr.y - expect).cwiseAbs().maxCoeff() < 1e-12);
    const Forecast f = predict(model, w.x, w.time_features);
    CHECK(f.y == fr.y);
}

TEST_CASE("prediction term is half the squared error plus a constant") {
    ModelConfig cfg = tiny_config();
    cfg.recon_weight = 0.0;
    cfg.kl_weight = 0.0;
    HtvModel model(cfg, 13);
    Rng rng(9);
    const SeriesWindow w = random_window(cfg, rng);
    Tape tape;
    const ForwardResult fr = forward_step(tape, model, w, nullptr);
    const Matrix target_prime = apply_stats(w.target, fr.stats);
    const Scalar expect = 0.5 * (fr.y_prime - target_prime).squaredNorm() +
                          static_cast<Scalar>(target_prime.size()) * 0.5 * std::log(2.0 * std::numbers::pi);
    CHECK(fr.loss.total == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("alpha = 0 cuts every gradient path from the forecast to the inference network") {
    ModelConfig cfg = tiny_config();
    cfg.alpha = 0.0;
    cfg.recon_weight = 0.0;
    cfg.kl_weight = 0.0;
    HtvModel model(cfg, 14);
    Rng rng(10);
    const SeriesWindow w = random_window(cfg, rng);
    Tape tape;
    Rng sampler(1);
    model.params().zero_grad();
    tape.backward(forward_step(tape, model, w, &sampler).total);
    for (const Parameter& p : model.params()) {
        if (p.name.rfind("htpgm.q", 0) == 0 || p.name.rfind("htpgm.down", 0) == 0) {
            CAPTURE(p.name);
            CHECK(p.grad.cwiseAbs().maxCoeff() == 0.0);
        }
    }
    CHECK(model.params().at("head.w2").grad.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("non-finite input is reported as divergence naming the term") {
    HtvModel model(tiny_config(), 15);
    Rng rng(11);
    SeriesWindow w = random_window(model.config(), rng);
    w.x(2, 1) = std::numeric_limits<Scalar>::quiet_NaN();
    Tape tape;
    try {
        forward_step(tape, model, w, nullptr);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.term() == "recon_nll");
    }
    SeriesWindow bad = random_window(model.config(), rng);
    bad.target = Matrix::Zero(3, 2);
    CHECK_THROWS_AS(forward_step(tape, model, bad, nullptr), DimensionError);
}

TEST_CASE("end-to-end objective gradient on the tiny configuration") {
    HtvModel model(tiny_config(), 21);
    Rng rng(12);
    const SeriesWindow w = random_window(model.config(), rng, 2.0);
    const auto report = htv::testing::check_objective_gradients(model, w, 99);
    CAPTURE(report.worst);
    CHECK(report.checked == model.params().scalar_count());
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("ELBO stays below the importance-sampled evidence") {
    HtvModel model(tiny_config(), 22);
    Rng rng(13);
    const SeriesWindow w = random_window(model.config(), rng);
    const auto e = htv::testing::estimate_evidence(model, w, 10000, 5);
    CAPTURE(e.elbo);
    CAPTURE(e.log_evidence);
    CHECK(htv::testing::elbo_below_evidence(e));
    CHECK(std::isfinite(e.log_evidence));
}

TEST_CASE("metric examples") {
    MetricAccumulator perfect;
    perfect.add(mat({{1, 2}, {3, 4}}), mat({{1, 2}, {3, 4}}));
    CHECK(perfect.result().mse == 0.0);
    CHECK(perfect.result().mae == 0.0);

    MetricAccumulator unit;
    unit.add(mat({{2, 3}, {4, 5}}), mat({{1, 2}, {3, 4}}));
    CHECK(unit.result().mse == 1.0);
    CHECK(unit.result().mae == 1.0);

    MetricAccumulator mixed;
    mixed.add(mat({{1, -3}}), mat({{0, 0}}));
    CHECK(mixed.result().mse == 5.0);
    CHECK(mixed.result().mae == 2.0);
    CHECK(mixed.result().count == 2);

    CHECK_THROWS_AS(MetricAccumulator{}.result(), EmptyDatasetError);
    CHECK_THROWS_AS(mixed.add(mat({{1}}), mat({{1, 2}})), DimensionError);
}

TEST_CASE("mae never exceeds rmse") {
    Rng rng(14);
    for (int trial = 0; trial < 200; ++trial) {
        MetricAccumulator acc;
        acc.add(random_matrix(3, 4, rng, -5, 5), random_matrix(3, 4, rng, -5, 5));
        const Metrics m = acc.result();
        CHECK(m.mse >= 0.0);
        CHECK(m.mae <= std::sqrt(m.mse) + 1e-12);
    }
}

TEST_CASE("baselines") {
    SeriesWindow w = window_from(mat({{1, 10}, {2, 20}, {3, 30}, {4, 40}}), mat({{5, 50}, {6, 60}, {7, 70}}));
    std::vector<SeriesWindow> ws{w};
    const Metrics p = evaluate_persistence(ws);
    // Persistence repeats [4, 40]: errors 1,2,3 and 10,20,30.
    CHECK(p.mae == doctest::Approx((1 + 2 + 3 + 10 + 20 + 30) / 6.0));
    const Metrics s = evaluate_seasonal_naive(ws, 2);
    // Period 2 repeats rows [3,30],[4,40],[3,30]: errors 2,2,4 and 20,20,40.
    CHECK(s.mae == doctest::Approx((2 + 2 + 4 + 20 + 20 + 40) / 6.0));
    CHECK(evaluate_seasonal_naive(ws, 1).mse == p.mse);
    CHECK_THROWS_AS(evaluate_seasonal_naive(ws, 5), DimensionError);
    CHECK_THROWS_AS(evaluate_persistence(std::vector<SeriesWindow>{}), EmptyDatasetError);
}

TEST_CASE("evaluate is sampling-free and repeatable") {
    HtvModel model(tiny_config(), 16);
    const DatasetSplit split = small_split();
    const Metrics a = evaluate(model, split.test), b = evaluate(model, split.test);
    CHECK(a.mse == b.mse);
    CHECK(a.mae == b.mae);
    MetricAccumulator acc;
    for (const auto& w : split.test) acc.add(predict(model, w.x, w.time_features).y, w.target);
    CHECK(acc.result().mse == a.mse);
    CHECK_THROWS_AS(evaluate(model, std::vector<SeriesWindow>{}), EmptyDatasetError);
}

TEST_CASE("adam update rules") {
    ParameterSet ps;
    ps.add("w", mat({{1.0, -2.0, 0.5}}));
    AdamState state;
    const AdamOptions opt{0.01, 0.9, 0.999, 1e-8};

    ps[0].grad = Matrix::Zero(1, 3);
    adam_step(ps, state, opt);
    CHECK(ps[0].value == mat({{1.0, -2.0, 0.5}}));

    ParameterSet fresh;
    fresh.add("w", mat({{1.0, -2.0, 0.5}}));
    AdamState s2;
    const Matrix g = mat({{0.3, -4.0, 1e-3}});
    fresh[0].grad = g;
    adam_step(fresh, s2, opt);
    for (Index j = 0; j < 3; ++j) {
        const Scalar delta = -opt.lr * g(0, j) / (std::abs(g(0, j)) + opt.eps);
        CHECK(fresh[0].value(0, j) - mat({{1.0, -2.0, 0.5}})(0, j) == doctest::Approx(delta).epsilon(1e-9));
    }

    ParameterSet steady;
    steady.add("w", Matrix::Zero(1, 2));
    AdamState s3;
    Matrix before = steady[0].value;
    for (int i = 0; i < 2000; ++i) {
        before = steady[0].value;
        steady[0].grad = mat({{2.5, -0.01}});
        adam_step(steady, s3, opt);
    }
    const Matrix step = steady[0].value - before;
    CHECK(step(0, 0) == doctest::Approx(-opt.lr).epsilon(1e-6));
    CHECK(step(0, 1) == doctest::Approx(opt.lr).epsilon(1e-5));
    CHECK(s3.step == 2000);
}

TEST_CASE("training with lr = 0 leaves parameters untouched") {
    HtvModel model(tiny_config(), 17);
    const ParameterSet before = model.params();
    TrainConfig tc;
    tc.lr = 0.0;
    tc.epochs = 2;
    tc.batch = 4;
    const TrainResult r = train(model, small_split(), tc);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(model.params()[i].value == before[i].value);
    REQUIRE(r.log.size() == 2);
    CHECK(r.log[0].val_mse == r.log[1].val_mse);
}

TEST_CASE("training logs are deterministic and the best snapshot is restored") {
    const DatasetSplit split = small_split(320);
    TrainConfig tc;
    tc.epochs = 4;
    tc.batch = 4;
    tc.lr = 3e-3;
    tc.patience = 0;
    HtvModel a(tiny_config(), 30), b(tiny_config(), 30);
    std::vector<std::string> la, lb;
    const TrainResult ra = train(a, split, tc, [&](const EpochRecord& e) { la.push_back(e.to_json().dump()); });
    const TrainResult rb = train(b, split, tc, [&](const EpochRecord& e) { lb.push_back(e.to_json().dump()); });
    CHECK(la == lb);
    CHECK(ra.step_totals == rb.step_totals);
    for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params()[i].value == b.params()[i].value);

    CHECK(evaluate(a, split.val).mse == ra.best_val.mse);
    const auto json = ra.log.front().to_json();
    for (const char* key : {"epoch", "step", "recon", "pred", "kl", "total", "val_mse", "val_mae"}) {
        CHECK(json.contains(key));
    }
    CHECK(json["kl"].size() == 2);
}

TEST_CASE("early stopping counts stale epochs") {
    const DatasetSplit split = small_split();
    TrainConfig tc;
    tc.epochs = 10;
    tc.batch = 4;
    tc.lr = 0.0;  // validation never improves after the first epoch
    tc.patience = 2;
    HtvModel model(tiny_config(), 18);
    const TrainResult r = train(model, split, tc);
    CHECK(r.stopped_early);
    CHECK(r.log.size() == 3);
    CHECK(r.best_epoch == 1);

    tc.patience = 0;
    HtvModel again(tiny_config(), 18);
    const TrainResult full = train(again, split, tc);
    CHECK_FALSE(full.stopped_early);
    CHECK(full.log.size() == 10);
}

TEST_CASE("max_steps and epochs = 0") {
    const DatasetSplit split = small_split();
    TrainConfig tc;
    tc.epochs = 5;
    tc.batch = 2;
    tc.max_steps = 3;
    HtvModel model(tiny_config(), 19);
    CHECK(train(model, split, tc).steps == 3);

    tc.epochs = 0;
    HtvModel idle(tiny_config(), 19);
    const ParameterSet before = idle.params();
    const TrainResult r = train(idle, split, tc);
    CHECK(r.steps == 0);
    CHECK(r.best_epoch == 0);
    CHECK(r.log.empty());
    CHECK(idle.params()[0].value == before[0].value);

    DatasetSplit empty = split;
    empty.train.clear();
    CHECK_THROWS_AS(train(idle, empty, tc), EmptyDatasetError);
}

}  // TEST_SUITE
