#pragma once

#include "htv/objective.hpp"
#include "run_config.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace htv::cli {

/// Forecast origin leaves no room for a full input window.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Model configuration for a series: the run's model block with V taken from the data.
ModelConfig model_config(const RunConfig& cfg, const TimeSeries& series);
DatasetSplit make_split(const RunConfig& cfg, const TimeSeries& series);

/// Trains `runs` models (seeds seed, seed+1, ...). Writes model.ckpt,
/// train_log.ndjson and summary.json to out_dir (run{r}/ per run when runs > 1)
/// and returns the summary.
nlohmann::json cmd_train(const RunConfig& cfg, std::ostream& out);

/// MSE / MAE per split from the checkpoint; writes eval.json. Evaluation uses
/// posterior means, so repeated runs report identical values.
nlohmann::json cmd_eval(const RunConfig& cfg, std::ostream& out);

/// H-step forecast from the window starting at cfg.origin, written to
/// forecast.csv with the window's normalization statistics as audit columns.
nlohmann::json cmd_forecast(const RunConfig& cfg, std::ostream& out);

/// Writes the synthetic benchmark to synth.csv; warns on `err` when the series
/// is too short for a single window.
nlohmann::json cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err);

struct AblationRow {
    std::uint64_t seed = 0;
    std::string sweep;
    std::string point;
    Scalar alpha = 0.0;
    Scalar gamma = 0.0;
    Index layers = 0;
    Scalar recon_weight = 0.0;
    Scalar kl_weight = 0.0;
    Metrics val;
    Metrics test;
    Scalar recon_nll = 0.0;  // best epoch's training averages
    Scalar kl = 0.0;
    Index best_epoch = 0;
};

/// One trained model per sweep point and seed; writes ablate_<sweep>.csv.
/// Sweeps: alpha, gamma (pick by val_mse), layers, or the objective
/// (combined vs prediction-only).
std::vector<AblationRow> cmd_ablate(const RunConfig& cfg, std::ostream& out);
std::string format_ablation(const std::vector<AblationRow>& rows);

/// Shortest text that parses back to the same double.
std::string format_number(Scalar v);

}  // namespace htv::cli
