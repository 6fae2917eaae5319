#include "commands.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace htv::cli {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << text;
}

json metrics_json(const Metrics& m) { return {{"mse", m.mse}, {"mae", m.mae}, {"count", m.count}}; }

// Config as recorded in artifacts, without output locations.
json recorded_config(const RunConfig& cfg) { return cfg.to_json(false); }

HtvModel load_model(const RunConfig& cfg, const TimeSeries& series) {
    HtvModel model(model_config(cfg, series), cfg.seed());
    load_into(read_checkpoint(cfg.checkpoint_path()), model.params());
    return model;
}

}  // namespace

std::string format_number(Scalar v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

ModelConfig model_config(const RunConfig& cfg, const TimeSeries& series) {
    ModelConfig m = cfg.model;
    m.channels = series.channels();
    m.validate("model");
    return m;
}

DatasetSplit make_split(const RunConfig& cfg, const TimeSeries& series) {
    return chrono_split(series, cfg.split, cfg.model.input_len, cfg.model.horizon, cfg.stride);
}

json cmd_train(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    const TimeSeries series = load_series(cfg);
    const ModelConfig mc = model_config(cfg, series);
    const DatasetSplit split = make_split(cfg, series);
    const fs::path root(cfg.out_dir);
    write_text(root / "config.txt", cfg.to_text(false));

    json runs = json::array();
    Scalar mean_mse = 0.0, mean_mae = 0.0;
    for (Index r = 0; r < cfg.runs; ++r) {
        const std::uint64_t seed = cfg.seed() + static_cast<std::uint64_t>(r);
        const fs::path dir = cfg.runs == 1 ? root : root / ("run" + std::to_string(r));
        fs::create_directories(dir);

        HtvModel model(mc, seed);
        TrainConfig tc = cfg.train;
        tc.seed = seed;
        std::ostringstream log;
        const TrainResult result = train(model, split, tc, [&](const EpochRecord& e) {
            log << e.to_json().dump() << "\n";
            out << "epoch " << e.epoch << "  total " << e.total << "  val_mse " << e.val_mse << "\n";
        });
        write_text(dir / "train_log.ndjson", log.str());

        json run = {{"seed", seed},
                    {"best_epoch", result.best_epoch},
                    {"epochs_completed", result.log.size()},
                    {"steps", result.steps},
                    {"stopped_early", result.stopped_early},
                    {"best_val", metrics_json(result.best_val)}};
        if (!split.test.empty()) run["test"] = metrics_json(evaluate(model, split.test));
        if (result.log.empty()) run["note"] = "no training performed; checkpoint holds the initial parameters";

        json meta = {{"config", recorded_config(cfg)}, {"channels", mc.channels}, {"seed", seed},
                     {"best_epoch", result.best_epoch}};
        write_checkpoint((dir / "model.ckpt").string(), model.params(), meta);
        if (cfg.runs > 1) write_text(dir / "summary.json", run.dump(2) + "\n");
        mean_mse += result.best_val.mse / static_cast<Scalar>(cfg.runs);
        mean_mae += result.best_val.mae / static_cast<Scalar>(cfg.runs);
        runs.push_back(std::move(run));
    }

    json summary = cfg.runs == 1 ? runs.front() : json::object();
    if (cfg.runs > 1) {
        summary["runs"] = runs;
        summary["mean_best_val"] = {{"mse", mean_mse}, {"mae", mean_mae}};
    }
    summary["config"] = recorded_config(cfg);
    write_text(root / "summary.json", summary.dump(2) + "\n");
    out << "best val mse " << mean_mse << "  mae " << mean_mae << "\n";
    return summary;
}

json cmd_eval(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    const TimeSeries series = load_series(cfg);
    HtvModel model = load_model(cfg, series);
    const DatasetSplit split = make_split(cfg, series);

    json report = json::object();
    const std::pair<const char*, const std::vector<SeriesWindow>*> parts[] = {
        {"train", &split.train}, {"val", &split.val}, {"test", &split.test}};
    for (const auto& [name, windows] : parts) {
        if (windows->empty()) continue;
        // The evaluator uses posterior means, so extra runs reproduce the first
        // bit for bit; they are kept as a check rather than averaged.
        const Metrics m = evaluate(model, *windows);
        for (Index r = 1; r < cfg.runs; ++r) {
            const Metrics again = evaluate(model, *windows);
            if (again.mse != m.mse || again.mae != m.mae) {
                throw std::logic_error("evaluation is not repeatable on split " + std::string(name));
            }
        }
        report[name] = metrics_json(m);
        out << name << "  mse " << format_number(m.mse) << "  mae " << format_number(m.mae) << "\n";
    }
    report["runs"] = cfg.runs;
    write_text(fs::path(cfg.out_dir) / "eval.json", report.dump(2) + "\n");
    return report;
}

json cmd_forecast(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    const TimeSeries series = load_series(cfg);
    HtvModel model = load_model(cfg, series);
    const Index t = cfg.model.input_len, h = cfg.model.horizon, n = series.length();
    const Index origin = cfg.origin < 0 ? n - t : cfg.origin;
    if (origin < 0 || origin + t > n) {
        throw RangeError("forecast origin " + std::to_string(origin) + ": window of " + std::to_string(t) +
                         " rows does not fit in a series of " + std::to_string(n) + " rows");
    }
    const Matrix x = series.values.middleRows(origin, t);
    const Forecast f = predict(model, x, time_features(series.timestamps, origin, t));

    std::string csv = "origin,step";
    for (const auto& c : series.columns) csv += "," + c;
    for (const auto& c : series.columns) csv += ",mu_" + c;
    for (const auto& c : series.columns) csv += ",sigma_" + c;
    csv += "\n";
    for (Index k = 0; k < h; ++k) {
        csv += std::to_string(origin) + "," + std::to_string(k + 1);
        for (Index c = 0; c < f.y.cols(); ++c) csv += "," + format_number(f.y(k, c));
        for (Index c = 0; c < f.y.cols(); ++c) csv += "," + format_number(f.stats.mu(c));
        for (Index c = 0; c < f.y.cols(); ++c) csv += "," + format_number(f.stats.sigma(c));
        csv += "\n";
    }
    const fs::path path = fs::path(cfg.out_dir) / "forecast.csv";
    write_text(path, csv);
    out << "wrote " << h << "-step forecast from origin " << origin << " to " << path.string() << "\n";
    return {{"origin", origin}, {"rows", h}, {"path", path.string()}};
}

json cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const SynthSpec spec = synth_spec(cfg);
    const Index need = cfg.model.input_len + cfg.model.horizon;
    if (spec.length < need) {
        err << "warning: synth.length " << spec.length << " is below input_len + horizon = " << need
            << "; no windows will fit\n";
    }
    const TimeSeries series = generate_synthetic(spec);
    const fs::path path = fs::path(cfg.out_dir) / "synth.csv";
    write_text(path, format_csv(series));
    out << "wrote " << series.length() << " x " << series.channels() << " series to " << path.string() << "\n";
    return {{"rows", series.length()}, {"channels", series.channels()}, {"path", path.string()}};
}

std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, std::ostream& out) {
    cfg.validate();
    if (cfg.sweep_values && cfg.sweep_values->empty()) throw ConfigError("ablate.values", "empty sweep");

    struct Point {
        std::string label;
        ModelConfig model;
    };
    std::vector<Point> points;
    if (cfg.sweep == "objective") {
        Point combined{"combined", cfg.model};
        Point prediction{"prediction-only", cfg.model};
        prediction.model.recon_weight = 0.0;
        prediction.model.kl_weight = 0.0;
        points = {combined, prediction};
    } else {
        std::vector<Scalar> grid;
        if (cfg.sweep_values) {
            grid = *cfg.sweep_values;
        } else if (cfg.sweep == "alpha") {
            grid = {0.0, 0.1, 1.0, 10.0};
        } else if (cfg.sweep == "gamma") {
            grid = {0.1, 0.5, 1.0, 2.0, 5.0};
        } else {
            grid = {1, 2, 3};
        }
        for (Scalar v : grid) {
            Point p{format_number(v), cfg.model};
            if (cfg.sweep == "alpha") {
                p.model.alpha = v;
            } else if (cfg.sweep == "gamma") {
                p.model.gamma = v;
            } else {
                if (v != static_cast<Scalar>(static_cast<Index>(v)) || v < 1) {
                    throw ConfigError("ablate.values", "layer counts must be positive integers");
                }
                p.model.latent_layers = static_cast<Index>(v);
            }
            points.push_back(std::move(p));
        }
    }

    const TimeSeries series = load_series(cfg);
    const DatasetSplit split = make_split(cfg, series);
    std::vector<AblationRow> rows;
    for (Index r = 0; r < cfg.runs; ++r) {
        const std::uint64_t seed = cfg.seed() + static_cast<std::uint64_t>(r);
        for (const Point& p : points) {
            RunConfig point_cfg = cfg;
            point_cfg.model = p.model;
            HtvModel model(model_config(point_cfg, series), seed);
            TrainConfig tc = cfg.train;
            tc.seed = seed;
            const TrainResult result = train(model, split, tc);

            AblationRow row;
            row.seed = seed;
            row.sweep = cfg.sweep;
            row.point = p.label;
            row.alpha = p.model.alpha;
            row.gamma = p.model.gamma;
            row.layers = p.model.latent_layers;
            row.recon_weight = p.model.recon_weight;
            row.kl_weight = p.model.kl_weight;
            row.val = result.best_val;
            row.test = evaluate(model, split.test);
            row.best_epoch = result.best_epoch;
            if (result.best_epoch > 0) {
                const EpochRecord& e = result.log.at(static_cast<std::size_t>(result.best_epoch - 1));
                row.recon_nll = e.recon;
                for (Scalar k : e.kl) row.kl += k;
            }
            out << cfg.sweep << "=" << p.label << " seed " << seed << "  val_mae " << row.val.mae << "  test_mae "
                << row.test.mae << "\n";
            rows.push_back(row);
        }
    }
    write_text(fs::path(cfg.out_dir) / ("ablate_" + cfg.sweep + ".csv"), format_ablation(rows));
    return rows;
}

std::string format_ablation(const std::vector<AblationRow>& rows) {
    std::string csv =
        "seed,sweep,point,alpha,gamma,layers,recon_weight,kl_weight,val_mse,val_mae,test_mse,test_mae,recon_nll,kl,"
        "best_epoch\n";
    for (const AblationRow& r : rows) {
        csv += std::to_string(r.seed) + "," + r.sweep + "," + r.point + "," + format_number(r.alpha) + "," + format_number(r.gamma) + "," +
               std::to_string(r.layers) + "," + format_number(r.recon_weight) + "," + format_number(r.kl_weight) +
               "," + format_number(r.val.mse) + "," + format_number(r.val.mae) + "," + format_number(r.test.mse) +
               "," + format_number(r.test.mae) + "," + format_number(r.recon_nll) + "," + format_number(r.kl) + "," +
               std::to_string(r.best_epoch) + "\n";
    }
    return csv;
}

}  // namespace htv::cli
