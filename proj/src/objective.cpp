#include "htv/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace htv {

namespace {

const Scalar kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void require_finite(Scalar v, const std::string& term) {
    if (!std::isfinite(v)) throw DivergenceError(term, "training diverged: " + term + " is not finite");
}

}  // namespace

Scalar LossBreakdown::kl_sum() const { return std::accumulate(kl_per_layer.begin(), kl_per_layer.end(), 0.0); }

Scalar LossBreakdown::recombined() const { return recon_weight * recon_nll + gamma * pred_nll + kl_weight * kl_sum(); }

ForwardResult forward_step(Tape& tape, HtvModel& model, const SeriesWindow& window, Rng* sampling_rng) {
    const ModelConfig& cfg = model.config();
    ParameterSet& params = model.params();
    if (window.target.rows() != cfg.horizon || window.target.cols() != cfg.channels) {
        throw DimensionError("forward_step: target shape " + shape_string(window.target) + " does not match [" +
                             std::to_string(cfg.horizon) + ", " + std::to_string(cfg.channels) + "]");
    }

    ForwardResult r;
    auto [x_prime, stats] = normalize(window.x, cfg.eps);
    r.stats = stats;

    LatentStack& lat = r.latents;
    lat.posterior = model.htpgm().infer_posteriors(tape, params, window.x);
    for (const GaussianParams& q : lat.posterior) {
        lat.z.push_back(sampling_rng != nullptr ? sample_reparameterized(q, *sampling_rng) : q.mu);
    }
    lat.z_sum = fuse_latents(lat.z, cfg.input_len);

    const Scalar alpha = cfg.fusion ? cfg.alpha : 0.0;
    r.state = model.backbone().encode(tape, params, x_prime, window.time_features, lat.z_sum, alpha);
    const Tensor& h = r.state.h;

    lat.prior = model.htpgm().compute_priors(tape, params, lat.z, h);
    const GaussianParams recon = model.htpgm().reconstruction_params(tape, params, lat.z.front(), h);
    Tensor recon_nll = gaussian_nll(tape.constant(window.x), recon);

    std::vector<Tensor> kl;
    for (std::size_t i = 0; i < lat.posterior.size(); ++i) kl.push_back(kl_gaussian(lat.posterior[i], lat.prior[i]));

    Tensor y_prime = model.backbone().forecast_head(tape, params, h);
    Tensor target_prime = tape.constant(apply_stats(window.target, stats));
    Tensor pred_nll = sum(0.5 * square(y_prime - target_prime) + kHalfLog2Pi);

    Tensor total = cfg.recon_weight * recon_nll + cfg.gamma * pred_nll;
    for (const Tensor& k : kl) total = total + cfg.kl_weight * k;

    LossBreakdown& loss = r.loss;
    loss.gamma = cfg.gamma;
    loss.recon_weight = cfg.recon_weight;
    loss.kl_weight = cfg.kl_weight;
    loss.recon_nll = recon_nll.item();
    loss.pred_nll = pred_nll.item();
    require_finite(loss.recon_nll, "recon_nll");
    require_finite(loss.pred_nll, "pred_nll");
    for (std::size_t i = 0; i < kl.size(); ++i) {
        loss.kl_per_layer.push_back(kl[i].item());
        require_finite(loss.kl_per_layer.back(), "kl[" + std::to_string(i) + "]");
    }
    loss.total = total.item();
    require_finite(loss.total, "total");

    r.total = total;
    r.y_prime = y_prime.value();
    r.y = denormalize_inverse(r.y_prime, stats);
    return r;
}

Forecast predict(HtvModel& model, const Matrix& x, const Matrix& time_features) {
    const ModelConfig& cfg = model.config();
    Tape tape;
    Forecast out;
    auto [x_prime, stats] = normalize(x, cfg.eps);
    out.stats = stats;
    const auto posteriors = model.htpgm().infer_posteriors(tape, model.params(), x);
    const Tensor z_sum = fuse_latents(model.htpgm().posterior_means(posteriors), cfg.input_len);
    const Scalar alpha = cfg.fusion ? cfg.alpha : 0.0;
    const BackboneState state = model.backbone().encode(tape, model.params(), x_prime, time_features, z_sum, alpha);
    out.y_prime = model.backbone().forecast_head(tape, model.params(), state.h).value();
    out.y = denormalize_inverse(out.y_prime, stats);
    return out;
}

Metrics MetricAccumulator::result() const {
    if (n_ == 0) throw EmptyDatasetError("metrics: no forecasts to score");
    Metrics m;
    m.mse = sq_ / static_cast<Scalar>(n_);
    m.mae = abs_ / static_cast<Scalar>(n_);
    m.count = n_;
    return m;
}

Metrics evaluate(HtvModel& model, std::span<const SeriesWindow> windows) {
    if (windows.empty()) throw EmptyDatasetError("evaluate: empty split");
    MetricAccumulator acc;
    for (const SeriesWindow& w : windows) acc.add(predict(model, w.x, w.time_features).y, w.target);
    return acc.result();
}

Metrics evaluate_persistence(std::span<const SeriesWindow> windows) {
    if (windows.empty()) throw EmptyDatasetError("evaluate: empty split");
    MetricAccumulator acc;
    for (const SeriesWindow& w : windows) {
        acc.add(w.x.bottomRows(1).replicate(w.target.rows(), 1), w.target);
    }
    return acc.result();
}

Metrics evaluate_seasonal_naive(std::span<const SeriesWindow> windows, Index period) {
    if (windows.empty()) throw EmptyDatasetError("evaluate: empty split");
    MetricAccumulator acc;
    for (const SeriesWindow& w : windows) {
        if (period < 1 || period > w.x.rows()) {
            throw DimensionError("seasonal naive: period " + std::to_string(period) + " outside window");
        }
        Matrix f(w.target.rows(), w.target.cols());
        const Index base = w.x.rows() - period;
        for (Index h = 0; h < f.rows(); ++h) f.row(h) = w.x.row(base + h % period);
        acc.add(f, w.target);
    }
    return acc.result();
}

void adam_step(ParameterSet& params, AdamState& state, const AdamOptions& opt) {
    if (state.m.size() != params.size()) {
        state.m.clear();
        state.v.clear();
        for (const Parameter& p : params) {
            state.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
            state.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        }
        state.step = 0;
    }
    ++state.step;
    const Scalar c1 = 1.0 - std::pow(opt.beta1, static_cast<Scalar>(state.step));
    const Scalar c2 = 1.0 - std::pow(opt.beta2, static_cast<Scalar>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = params[i];
        if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) continue;
        state.m[i] = opt.beta1 * state.m[i] + (1.0 - opt.beta1) * p.grad;
        state.v[i] = opt.beta2 * state.v[i] + (1.0 - opt.beta2) * p.grad.cwiseAbs2();
        const auto m_hat = (state.m[i] / c1).array();
        const auto v_hat = (state.v[i] / c2).array();
        p.value.array() -= opt.lr * m_hat / (v_hat.sqrt() + opt.eps);
    }
}

nlohmann::json EpochRecord::to_json() const {
    return {{"epoch", epoch}, {"step", step},   {"recon", recon},     {"pred", pred},
            {"kl", kl},       {"total", total}, {"val_mse", val_mse}, {"val_mae", val_mae}};
}

TrainResult train(HtvModel& model, const DatasetSplit& data, const TrainConfig& cfg, const EpochSink& sink) {
    cfg.validate();
    if (data.train.empty()) throw EmptyDatasetError("train: no training windows");
    if (data.val.empty()) throw EmptyDatasetError("train: no validation windows");

    Rng shuffle_rng = make_rng(cfg.seed, SeedStream::kShuffle);
    Rng sample_rng = make_rng(cfg.seed, SeedStream::kSampling);
    const AdamOptions opt{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
    AdamState adam;
    ParameterSet& params = model.params();

    TrainResult result;
    ParameterSet best = params;
    Index stale_epochs = 0;
    bool have_best = false;

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);

    for (Index epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.kl.assign(static_cast<std::size_t>(model.config().latent_layers), 0.0);
        Index seen = 0;

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch)) {
            if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) break;
            const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
            const auto batch = static_cast<Scalar>(stop - start);
            params.zero_grad();
            Scalar batch_total = 0.0;
            for (std::size_t b = start; b < stop; ++b) {
                Tape tape;
                ForwardResult fr;
                try {
                    fr = forward_step(tape, model, data.train[order[b]], &sample_rng);
                } catch (const DivergenceError& e) {
                    std::string last = result.log.empty() ? "none" : result.log.back().to_json().dump();
                    throw DivergenceError(e.term(), std::string(e.what()) + "; last finite epoch log: " + last);
                }
                tape.backward(scale(fr.total, 1.0 / batch));
                batch_total += fr.loss.total;
                rec.recon += fr.loss.recon_nll;
                rec.pred += fr.loss.pred_nll;
                for (std::size_t i = 0; i < rec.kl.size(); ++i) rec.kl[i] += fr.loss.kl_per_layer[i];
                rec.total += fr.loss.total;
                ++seen;
            }
            if (cfg.max_grad_norm > 0.0) {
                const Scalar norm = params.grad_norm();
                if (norm > cfg.max_grad_norm) {
                    for (Parameter& p : params) p.grad *= cfg.max_grad_norm / norm;
                }
            }
            adam_step(params, adam, opt);
            ++result.steps;
            result.step_totals.push_back(batch_total / batch);
        }
        if (seen == 0) break;

        const auto n = static_cast<Scalar>(seen);
        rec.recon /= n;
        rec.pred /= n;
        for (Scalar& k : rec.kl) k /= n;
        rec.total /= n;
        rec.step = result.steps;
        const Metrics val = evaluate(model, data.val);
        rec.val_mse = val.mse;
        rec.val_mae = val.mae;
        result.log.push_back(rec);
        if (sink) sink(rec);

        if (!have_best || val.mse < result.best_val.mse) {
            have_best = true;
            result.best_val = val;
            result.best_epoch = epoch;
            best.assign_values(params);
            stale_epochs = 0;
        } else if (cfg.patience > 0 && ++stale_epochs >= cfg.patience) {
            result.stopped_early = true;
            break;
        }
        if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) break;
    }

    if (have_best) {
        params.assign_values(best);
    } else {
        result.best_val = evaluate(model, data.val);
    }
    params.zero_grad();
    return result;
}

}  // namespace htv
