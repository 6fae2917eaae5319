#pragma once

// Flat run configuration. The file format is one `key = value` per line where
// value is a JSON literal; blank lines and lines starting with '#' are ignored.
//
//   data.path = "ETTh1.csv"
//   model.latent_layers = 3
//   data.split = [0.7, 0.1, 0.2]

#include "htv/config.hpp"
#include "htv/data.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace htv::cli {

struct RunConfig {
    std::string data_path;  // CSV; empty -> synthetic data when data_synth is set
    bool data_synth = false;
    Index synth_channels = 4;
    Index synth_length = 2000;
    std::uint64_t synth_seed = 7;
    Index stride = 1;
    std::array<Scalar, 3> split{0.7, 0.1, 0.2};

    ModelConfig model;  // model.channels is taken from the data
    TrainConfig train;  // train.seed is the master seed
    Index runs = 1;
    std::string out_dir = "out";

    std::string checkpoint;  // eval / forecast input; empty -> <out_dir>/model.ckpt
    Index origin = -1;       // forecast window start row; -1 -> last full window
    std::string sweep = "alpha";
    std::optional<std::vector<Scalar>> sweep_values;  // unset -> the sweep's default grid

    std::uint64_t seed() const { return train.seed; }
    std::string checkpoint_path() const;

    /// Throws ConfigError naming the offending key.
    void validate() const;
    /// Every key; with_locations = false drops out_dir and checkpoint so that
    /// runs differing only in where they write record identical configs.
    nlohmann::json to_json(bool with_locations = true) const;
    /// One `key = json` line per key, readable by parse_run_config.
    std::string to_text(bool with_locations = true) const;

    bool operator==(const RunConfig&) const = default;
};

/// Applies one key with a JSON value. Unknown keys and type mismatches throw
/// ConfigError naming the key.
void set_field(RunConfig& cfg, const std::string& key, const nlohmann::json& value);

/// Parses the flat text format on top of `base`.
RunConfig parse_run_config(const std::string& text, RunConfig base = {});
RunConfig load_run_config(const std::string& path, RunConfig base = {});

/// Series named by the config: the CSV at data.path or the synthetic benchmark.
TimeSeries load_series(const RunConfig& cfg);
SynthSpec synth_spec(const RunConfig& cfg);

}  // namespace htv::cli
