#include "htv/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace htv {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

bool is_missing(const std::string& cell) {
    return cell.empty() || cell == "nan" || cell == "NaN" || cell == "NA" || cell == "null";
}

bool parse_double(const std::string& cell, Scalar& out) {
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (first != last && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

bool parse_int(const std::string& s, std::size_t pos, std::size_t len, int& out) {
    if (pos + len > s.size()) return false;
    auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
    return ec == std::errc() && ptr == s.data() + pos + len;
}

// Sakamoto's method; 0 = Sunday.
int weekday(int y, int m, int d) {
    static constexpr int offsets[] = {0, 3, 2, 5, 0, 3, 5, 1, 4, 6, 2, 4};
    if (m < 3) y -= 1;
    return (y + y / 4 - y / 100 + y / 400 + offsets[m - 1] + d) % 7;
}

}  // namespace

std::array<Scalar, 4> calendar_features(const std::string& ts) {
    int year = 0, month = 1, day = 1, hour = 0, dow = 0;
    long long step = 0;
    auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), step);
    if (ec == std::errc() && ptr == ts.data() + ts.size() && step >= 0) {
        hour = static_cast<int>(step % 24);
        dow = static_cast<int>((step / 24) % 7);
        day = static_cast<int>((step / 24) % 30) + 1;
        month = static_cast<int>((step / (24 * 30)) % 12) + 1;
    } else {
        if (!parse_int(ts, 0, 4, year) || ts.size() < 10 || ts[4] != '-' || !parse_int(ts, 5, 2, month) ||
            ts[7] != '-' || !parse_int(ts, 8, 2, day) || month < 1 || month > 12 || day < 1 || day > 31) {
            throw IngestionError("unparseable timestamp \"" + ts + "\"");
        }
        if (ts.size() > 10) {
            if ((ts[10] != ' ' && ts[10] != 'T') || !parse_int(ts, 11, 2, hour) || hour > 23) {
                throw IngestionError("unparseable timestamp \"" + ts + "\"");
            }
        }
        dow = weekday(year, month, day);
    }
    return {(month - 1) / 11.0 - 0.5, (day - 1) / 30.0 - 0.5, dow / 6.0 - 0.5, hour / 23.0 - 0.5};
}

Matrix time_features(const std::vector<std::string>& timestamps, Index begin, Index count) {
    Matrix out(count, 4);
    for (Index i = 0; i < count; ++i) {
        const auto f = calendar_features(timestamps.at(static_cast<std::size_t>(begin + i)));
        for (Index j = 0; j < 4; ++j) out(i, j) = f[static_cast<std::size_t>(j)];
    }
    return out;
}

TimeSeries parse_csv(const std::string& text, LoadReport* report) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw IngestionError("line 1: missing header row");
    const auto header = split_line(line);
    if (header.size() < 2) throw IngestionError("line 1: header needs a date column and at least one channel");

    TimeSeries out;
    out.date_column = header.front();
    out.columns.assign(header.begin() + 1, header.end());
    const std::size_t v = out.columns.size();

    std::vector<std::string> stamps;
    std::vector<std::vector<Scalar>> rows;
    Index line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_line(line);
        if (cells.size() != v + 1) {
            throw IngestionError("line " + std::to_string(line_no) + ": expected " + std::to_string(v + 1) +
                                 " fields, got " + std::to_string(cells.size()));
        }
        std::vector<Scalar> row(v);
        for (std::size_t c = 0; c < v; ++c) {
            if (is_missing(cells[c + 1])) {
                row[c] = std::numeric_limits<Scalar>::quiet_NaN();
            } else if (!parse_double(cells[c + 1], row[c]) || !std::isfinite(row[c])) {
                throw IngestionError("line " + std::to_string(line_no) + ": cannot parse \"" + cells[c + 1] +
                                     "\" in column " + out.columns[c]);
            }
        }
        stamps.push_back(cells[0]);
        rows.push_back(std::move(row));
    }

    // Forward fill; rows before every channel has a first value are dropped.
    LoadReport rep;
    std::size_t first_complete = 0;
    for (std::size_t c = 0; c < v; ++c) {
        std::size_t r = 0;
        while (r < rows.size() && std::isnan(rows[r][c])) ++r;
        if (r == rows.size()) throw IngestionError("channel " + out.columns[c] + ": no finite values");
        first_complete = std::max(first_complete, r);
    }
    rep.leading_dropped = static_cast<Index>(first_complete);
    std::vector<Scalar> last(v, std::numeric_limits<Scalar>::quiet_NaN());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < v; ++c) {
            if (!std::isnan(rows[r][c])) {
                last[c] = rows[r][c];
            } else if (r >= first_complete) {
                rows[r][c] = last[c];
                ++rep.forward_filled;
            }
        }
    }

    const std::size_t n = rows.size() - first_complete;
    out.values.resize(static_cast<Index>(n), static_cast<Index>(v));
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < v; ++c) {
            out.values(static_cast<Index>(r), static_cast<Index>(c)) = rows[r + first_complete][c];
        }
        out.timestamps.push_back(stamps[r + first_complete]);
    }
    if (report != nullptr) *report = rep;
    return out;
}

TimeSeries load_csv(const std::string& path, LoadReport* report) {
    std::ifstream f(path);
    if (!f) throw IngestionError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str(), report);
}

std::string format_csv(const TimeSeries& series) {
    std::string out = series.date_column;
    for (const auto& c : series.columns) out += "," + c;
    out += '\n';
    char buf[64];
    for (Index r = 0; r < series.length(); ++r) {
        out += series.timestamps.at(static_cast<std::size_t>(r));
        for (Index c = 0; c < series.channels(); ++c) {
            auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), series.values(r, c));
            out += ',';
            out.append(buf, ptr);
        }
        out += '\n';
    }
    return out;
}

void write_csv(const std::string& path, const TimeSeries& series) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IngestionError("cannot open " + path + " for writing");
    f << format_csv(series);
}

Index window_count(Index length, Index input_len, Index horizon, Index stride) {
    if (length < input_len + horizon) return 0;
    return (length - input_len - horizon) / stride + 1;
}

std::vector<SeriesWindow> make_windows(const TimeSeries& series, Index input_len, Index horizon, Index stride,
                                       Index begin, Index end) {
    if (end < 0) end = series.length();
    if (input_len < 1 || horizon < 1 || stride < 1) {
        throw WindowError("make_windows: input_len, horizon and stride must be >= 1");
    }
    if (begin < 0 || end > series.length() || begin > end) throw WindowError("make_windows: bad row range");
    const Index len = end - begin;
    if (len < input_len + horizon) {
        throw WindowError("make_windows: segment of " + std::to_string(len) + " rows is shorter than T + H = " +
                          std::to_string(input_len + horizon));
    }
    const Index count = window_count(len, input_len, horizon, stride);
    std::vector<SeriesWindow> out;
    out.reserve(static_cast<std::size_t>(count));
    for (Index k = 0; k < count; ++k) {
        const Index start = begin + k * stride;
        SeriesWindow w;
        w.x = series.values.middleRows(start, input_len);
        w.target = series.values.middleRows(start + input_len, horizon);
        w.time_features = time_features(series.timestamps, start, input_len + horizon);
        w.window_id = start;
        out.push_back(std::move(w));
    }
    return out;
}

std::array<Index, 2> split_boundaries(Index length, const std::array<Scalar, 3>& ratios) {
    for (Scalar r : ratios) {
        if (!(r >= 0.0)) throw SplitError("split ratios must be non-negative");
    }
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw SplitError("split ratios must sum to 1");
    const auto b1 = static_cast<Index>(std::llround(ratios[0] * static_cast<Scalar>(length)));
    const auto b2 = static_cast<Index>(std::llround((ratios[0] + ratios[1]) * static_cast<Scalar>(length)));
    return {b1, b2};
}

DatasetSplit chrono_split(const TimeSeries& series, const std::array<Scalar, 3>& ratios, Index input_len,
                          Index horizon, Index stride) {
    DatasetSplit split;
    split.boundaries = split_boundaries(series.length(), ratios);
    const std::array<Index, 4> edges = {0, split.boundaries[0], split.boundaries[1], series.length()};
    const char* names[] = {"train", "val", "test"};
    std::vector<SeriesWindow>* targets[] = {&split.train, &split.val, &split.test};
    for (std::size_t s = 0; s < 3; ++s) {
        if (ratios[s] == 0.0) continue;
        const Index len = edges[s + 1] - edges[s];
        if (len < input_len + horizon) {
            throw SplitError(std::string(names[s]) + " segment has " + std::to_string(len) +
                             " rows, fewer than T + H = " + std::to_string(input_len + horizon));
        }
        *targets[s] = make_windows(series, input_len, horizon, stride, edges[s], edges[s + 1]);
    }
    return split;
}

void SynthSpec::validate(const std::string& prefix) const {
    const auto v = static_cast<std::size_t>(channels);
    if (channels < 1) throw ConfigError(prefix + ".channels", "must be >= 1");
    if (length < 1) throw ConfigError(prefix + ".length", "must be >= 1");
    if (trend.size() != v) throw ConfigError(prefix + ".trend", "needs one value per channel");
    if (period.size() != v) throw ConfigError(prefix + ".period", "needs one value per channel");
    if (amplitude.size() != v) throw ConfigError(prefix + ".amplitude", "needs one value per channel");
    for (Scalar p : period) {
        if (!(p > 0.0)) throw ConfigError(prefix + ".period", "must be > 0");
    }
    if (regime_times.size() != regime_scales.size()) {
        throw ConfigError(prefix + ".regime_scales", "needs one value per regime time");
    }
    for (std::size_t i = 1; i < regime_times.size(); ++i) {
        if (regime_times[i] <= regime_times[i - 1]) throw ConfigError(prefix + ".regime_times", "must ascend");
    }
    if (!(noise_std >= 0.0)) throw ConfigError(prefix + ".noise_std", "must be >= 0");
    if (mixing.size() != 0 && (mixing.rows() != channels || mixing.cols() != channels)) {
        throw ConfigError(prefix + ".mixing", "must be a square [V, V] matrix");
    }
}

SynthSpec default_synth_spec(Index channels, Index length, std::uint64_t seed) {
    SynthSpec spec;
    spec.channels = channels;
    spec.length = length;
    spec.seed = seed;
    for (Index c = 0; c < channels; ++c) {
        const auto cd = static_cast<Scalar>(c);
        spec.trend.push_back(0.002 * (cd + 1.0) * (c % 2 == 0 ? 1.0 : -1.0));
        spec.period.push_back(24.0);
        spec.amplitude.push_back(1.0 + 0.5 * cd);
    }
    spec.regime_times = {static_cast<Index>(0.6 * static_cast<Scalar>(length))};
    spec.regime_scales = {3.0};
    spec.noise_std = 0.2;
    spec.mixing = Matrix::Identity(channels, channels);
    for (Index c = 0; c + 1 < channels; ++c) spec.mixing(c, c + 1) = 0.3;
    return spec;
}

TimeSeries generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    const Index v = spec.channels, n = spec.length;
    Rng rng(spec.seed);
    std::normal_distribution<Scalar> normal(0.0, spec.noise_std > 0.0 ? spec.noise_std : 1.0);

    Matrix raw(n, v);
    std::size_t regime = 0;
    Scalar regime_scale = 1.0;
    for (Index t = 0; t < n; ++t) {
        while (regime < spec.regime_times.size() && t >= spec.regime_times[regime]) {
            regime_scale = spec.regime_scales[regime];
            ++regime;
        }
        for (Index c = 0; c < v; ++c) {
            const auto cu = static_cast<std::size_t>(c);
            const Scalar noise = spec.noise_std > 0.0 ? normal(rng) : 0.0;
            raw(t, c) = spec.trend[cu] * static_cast<Scalar>(t) +
                        spec.amplitude[cu] *
                            std::sin(2.0 * std::numbers::pi * static_cast<Scalar>(t) / spec.period[cu]) +
                        regime_scale * noise;
        }
    }

    TimeSeries out;
    out.values = spec.mixing.size() == 0 ? raw : Matrix(raw * spec.mixing.transpose());
    static const char* const ett_columns[] = {"HUFL", "HULL", "MUFL", "MULL", "LUFL", "LULL", "OT"};
    for (Index c = 0; c < v; ++c) {
        out.columns.push_back(v == 7 ? ett_columns[c] : "ch" + std::to_string(c));
    }
    for (Index t = 0; t < n; ++t) out.timestamps.push_back(std::to_string(t));
    return out;
}

}  // namespace htv
