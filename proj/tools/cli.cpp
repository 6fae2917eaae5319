#include "cli.hpp"

#include "commands.hpp"

#include <CLI11.hpp>

#include <optional>
#include <ostream>

namespace htv::cli {

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<Index> runs, layers, horizon, input_len, epochs, origin;
    std::optional<Scalar> alpha, gamma;
    std::optional<std::string> out_dir, data, checkpoint, sweep;
    std::optional<std::vector<Scalar>> values;
    bool synth = false;
    std::vector<std::string> sets;
};

void add_flags(CLI::App& cmd, Flags& f) {
    // A repeated scalar flag keeps its last value.
    cmd.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    cmd.add_option("--config", f.config, "flat key = value config file");
    cmd.add_option("--seed", f.seed, "master seed");
    cmd.add_option("--runs", f.runs, "runs (train: reseeded per run; eval: repeated, sampling-free)");
    cmd.add_option("--alpha", f.alpha, "latent fusion weight");
    cmd.add_option("--gamma", f.gamma, "prediction weight in the objective");
    cmd.add_option("--layers", f.layers, "latent layers");
    cmd.add_option("--horizon", f.horizon, "forecast horizon H");
    cmd.add_option("--input-len", f.input_len, "input window T");
    cmd.add_option("--out-dir", f.out_dir, "output directory");
    cmd.add_option("--data", f.data, "CSV dataset (first column timestamp)");
    cmd.add_flag("--synth", f.synth, "use the synthetic benchmark series");
    cmd.add_option("--epochs", f.epochs, "training epochs");
    cmd.add_option("--checkpoint", f.checkpoint, "checkpoint to read (default <out-dir>/model.ckpt)");
    cmd.add_option("--origin", f.origin, "forecast window start row");
    cmd.add_option("--sweep", f.sweep, "ablation sweep: alpha, gamma, layers or objective");
    cmd.add_option("--values", f.values, "ablation sweep points")
        ->delimiter(',')
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    cmd.add_option("--set", f.sets, "override any config key: key=json")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
}

RunConfig resolve(const Flags& f) {
    RunConfig cfg = f.config.empty() ? RunConfig{} : load_run_config(f.config);
    for (const std::string& s : f.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(s, "--set expects key=value");
        nlohmann::json v;
        try {
            v = nlohmann::json::parse(s.substr(eq + 1));
        } catch (const nlohmann::json::parse_error&) {
            v = s.substr(eq + 1);  // bare words are strings
        }
        set_field(cfg, s.substr(0, eq), v);
    }
    if (f.seed) cfg.train.seed = *f.seed;
    if (f.runs) cfg.runs = *f.runs;
    if (f.alpha) cfg.model.alpha = *f.alpha;
    if (f.gamma) cfg.model.gamma = *f.gamma;
    if (f.layers) cfg.model.latent_layers = *f.layers;
    if (f.horizon) cfg.model.horizon = *f.horizon;
    if (f.input_len) cfg.model.input_len = *f.input_len;
    if (f.out_dir) cfg.out_dir = *f.out_dir;
    if (f.data) cfg.data_path = *f.data;
    if (f.synth) cfg.data_synth = true;
    if (f.epochs) cfg.train.epochs = *f.epochs;
    if (f.checkpoint) cfg.checkpoint = *f.checkpoint;
    if (f.origin) cfg.origin = *f.origin;
    if (f.sweep) cfg.sweep = *f.sweep;
    if (f.values) cfg.sweep_values = *f.values;
    return cfg;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-scale latent forecasting for multivariate time series"};
    app.require_subcommand(1);
    Flags flags;
    CLI::App* train_cmd = app.add_subcommand("train", "train and write checkpoint, log and summary");
    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on every split");
    CLI::App* forecast_cmd = app.add_subcommand("forecast", "forecast one window to CSV");
    CLI::App* synth_cmd = app.add_subcommand("synth", "write the synthetic benchmark CSV");
    CLI::App* ablate_cmd = app.add_subcommand("ablate", "sweep alpha, gamma, layers or the objective");
    for (CLI::App* c : {train_cmd, eval_cmd, forecast_cmd, synth_cmd, ablate_cmd}) add_flags(*c, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        const RunConfig cfg = resolve(flags);
        if (train_cmd->parsed()) {
            cmd_train(cfg, out);
        } else if (eval_cmd->parsed()) {
            cmd_eval(cfg, out);
        } else if (forecast_cmd->parsed()) {
            cmd_forecast(cfg, out);
        } else if (synth_cmd->parsed()) {
            cmd_synth(cfg, out, err);
        } else {
            cmd_ablate(cfg, out);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace htv::cli
