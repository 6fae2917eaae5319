#pragma once

// Training objective, metrics, optimizer and the training loop.
//
// The minimized objective per window is
//   total = w_rec * recon_nll + gamma * pred_nll + w_kl * sum_i KL_i
// i.e. the negative ELBO when w_rec = w_kl = 1. recon_nll is the Gaussian
// negative log-likelihood of the raw input window, pred_nll that of the
// normalized target under N(y', I), and KL_i the closed-form divergence
// between the posterior and prior of latent layer i.

#include "htv/data.hpp"
#include "htv/model.hpp"
#include "htv/stationarize.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace htv {

/// A loss term became non-finite.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& term, const std::string& what)
        : std::runtime_error(what), term_(term) {}
    const std::string& term() const { return term_; }

private:
    std::string term_;
};

class EmptyDatasetError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct LossBreakdown {
    Scalar recon_nll = 0.0;
    Scalar pred_nll = 0.0;
    std::vector<Scalar> kl_per_layer;
    Scalar total = 0.0;
    Scalar gamma = 1.0;
    Scalar recon_weight = 1.0;
    Scalar kl_weight = 1.0;

    Scalar kl_sum() const;
    /// Recomputes total from the terms and weights.
    Scalar recombined() const;
};

struct ForwardResult {
    Tensor total;
    LossBreakdown loss;
    Matrix y_prime;  // [H, V] normalized forecast
    Matrix y;        // [H, V] de-normalized forecast
    StationStats stats;
    LatentStack latents;
    BackboneState state;
};

/// Full pipeline for one window. With a sampling rng, latents are
/// reparameterized samples; with nullptr they are the posterior means.
ForwardResult forward_step(Tape& tape, HtvModel& model, const SeriesWindow& window, Rng* sampling_rng);

struct Forecast {
    Matrix y;        // [H, V], series units
    Matrix y_prime;  // [H, V], normalized units
    StationStats stats;
};

/// Sampling-free forecast from an input window of [T, V] raw values and its
/// time features (at least T rows).
Forecast predict(HtvModel& model, const Matrix& x, const Matrix& time_features);

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
    Scalar mse = 0.0;
    Scalar mae = 0.0;
    Index count = 0;  // scalar errors averaged
};

class MetricAccumulator {
public:
    template <typename A, typename B>
    void add(const Eigen::MatrixBase<A>& forecast, const Eigen::MatrixBase<B>& target) {
        if (forecast.rows() != target.rows() || forecast.cols() != target.cols()) {
            throw DimensionError("metrics: forecast and target shapes differ");
        }
        const auto err = (forecast - target).array().eval();
        sq_ += err.square().sum();
        abs_ += err.abs().sum();
        n_ += err.size();
    }
    Metrics result() const;

private:
    Scalar sq_ = 0.0;
    Scalar abs_ = 0.0;
    Index n_ = 0;
};

/// MSE / MAE of de-normalized forecasts over every window, horizon step and channel.
Metrics evaluate(HtvModel& model, std::span<const SeriesWindow> windows);

/// Repeats the last observed value over the horizon.
Metrics evaluate_persistence(std::span<const SeriesWindow> windows);
/// y[h] = x[T - period + (h mod period)]. Requires period <= T.
Metrics evaluate_seasonal_naive(std::span<const SeriesWindow> windows, Index period);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamOptions {
    Scalar lr = 1e-3;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar eps = 1e-8;
};

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::int64_t step = 0;
};

/// One bias-corrected Adam update from the gradients stored in `params`.
void adam_step(ParameterSet& params, AdamState& state, const AdamOptions& opt);

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
    Index epoch = 0;
    Index step = 0;  // optimizer steps taken so far
    Scalar recon = 0.0;
    Scalar pred = 0.0;
    std::vector<Scalar> kl;
    Scalar total = 0.0;
    Scalar val_mse = 0.0;
    Scalar val_mae = 0.0;

    nlohmann::json to_json() const;
};

struct TrainResult {
    std::vector<EpochRecord> log;
    std::vector<Scalar> step_totals;  // mean objective of each optimizer step's batch
    Metrics best_val;
    Index best_epoch = 0;  // 0 -> initial parameters (no epoch completed)
    Index steps = 0;
    bool stopped_early = false;
};

using EpochSink = std::function<void(const EpochRecord&)>;

/// Shuffled minibatch Adam with early stopping on validation MSE. On return
/// the model holds the best-validation parameters.
TrainResult train(HtvModel& model, const DatasetSplit& data, const TrainConfig& cfg, const EpochSink& sink = {});

}  // namespace htv
