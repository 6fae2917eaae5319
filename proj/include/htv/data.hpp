#pragma once

#include "htv/config.hpp"
#include "htv/tensor.hpp"

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace htv {

class IngestionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class WindowError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class SplitError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A multivariate series: values [N, V], one timestamp label per row.
struct TimeSeries {
    std::string date_column = "date";
    std::vector<std::string> columns;     // channel names
    std::vector<std::string> timestamps;  // as read / written
    Matrix values;                        // [N, V]

    Index length() const { return values.rows(); }
    Index channels() const { return values.cols(); }
};

struct LoadReport {
    Index forward_filled = 0;   // NaN cells replaced by the previous value
    Index leading_dropped = 0;  // rows dropped because a channel had no prior value
};

/// Reads a header + rows CSV whose first column is a timestamp. Empty cells and
/// "nan"/"NaN" are missing: forward-filled, with leading rows dropped.
TimeSeries load_csv(const std::string& path, LoadReport* report = nullptr);
TimeSeries parse_csv(const std::string& text, LoadReport* report = nullptr);

/// Writes the same dialect. Values use the shortest round-trip representation.
void write_csv(const std::string& path, const TimeSeries& series);
std::string format_csv(const TimeSeries& series);

/// Calendar features in [-0.5, 0.5]: month, day of month, weekday, hour.
/// Accepts "YYYY-MM-DD[ HH[:MM[:SS]]]" or a plain step index; a step index
/// maps to a pseudo-calendar (hour = t mod 24, weekday = t/24 mod 7,
/// day = t/24 mod 30, month = t/720 mod 12).
std::array<Scalar, 4> calendar_features(const std::string& timestamp);
Matrix time_features(const std::vector<std::string>& timestamps, Index begin, Index count);

struct SeriesWindow {
    Matrix x;              // [T, V] raw
    Matrix target;         // [H, V] raw
    Matrix time_features;  // [T + H, F]
    Index window_id = 0;   // start row in the source series
};

/// Windows of T inputs followed by H targets over rows [begin, end) of the
/// series, starting at `begin` and advancing by `stride`.
std::vector<SeriesWindow> make_windows(const TimeSeries& series, Index input_len, Index horizon, Index stride,
                                       Index begin = 0, Index end = -1);

/// floor((len - T - H) / stride) + 1, or 0 when len < T + H.
Index window_count(Index length, Index input_len, Index horizon, Index stride);

struct DatasetSplit {
    std::vector<SeriesWindow> train, val, test;
    std::array<Index, 2> boundaries{};  // first row of val and of test
};

/// Chronological contiguous segments with the given ratios (summing to 1).
/// Windows never cross a boundary. A zero ratio yields an empty segment.
DatasetSplit chrono_split(const TimeSeries& series, const std::array<Scalar, 3>& ratios, Index input_len,
                          Index horizon, Index stride);

std::array<Index, 2> split_boundaries(Index length, const std::array<Scalar, 3>& ratios);

struct SynthSpec {
    Index channels = 4;
    Index length = 2000;
    std::uint64_t seed = 7;
    std::vector<Scalar> trend;      // per channel slope per step
    std::vector<Scalar> period;     // per channel
    std::vector<Scalar> amplitude;  // per channel
    std::vector<Index> regime_times;      // ascending switch steps
    std::vector<Scalar> regime_scales;    // noise multiplier from each switch on
    Scalar noise_std = 0.3;
    Matrix mixing;  // [V, V]; empty -> identity

    void validate(const std::string& prefix = "synth") const;
};

/// The default non-stationary benchmark: V channels with period-24 seasonality,
/// per-channel drift, a noise regime switch (x3) at 60% of the series and
/// mild cross-channel mixing.
SynthSpec default_synth_spec(Index channels = 4, Index length = 2000, std::uint64_t seed = 7);

/// channel c at step t = trend_c t + amp_c sin(2 pi t / period_c) + scale(t) noise,
/// then mixed across channels. Timestamps are step indices.
TimeSeries generate_synthetic(const SynthSpec& spec);

}  // namespace htv
