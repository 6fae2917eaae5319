#include "run_config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace htv::cli {

namespace {

using json = nlohmann::json;

struct Field {
    const char* key;
    std::function<json(const RunConfig&)> get;
    std::function<void(RunConfig&, const json&, const std::string&)> set;
};

Scalar as_number(const json& v, const std::string& key) {
    if (!v.is_number()) throw ConfigError(key, "expected a number, got " + v.dump());
    return v.get<Scalar>();
}

Index as_index(const json& v, const std::string& key) {
    if (v.is_number_integer()) return v.get<Index>();
    if (v.is_number_float()) {
        const Scalar d = v.get<Scalar>();
        if (std::floor(d) == d && std::abs(d) < 9e15) return static_cast<Index>(d);
    }
    throw ConfigError(key, "expected an integer, got " + v.dump());
}

std::uint64_t as_seed(const json& v, const std::string& key) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError(key, "expected a non-negative integer, got " + v.dump());
}

bool as_bool(const json& v, const std::string& key) {
    if (!v.is_boolean()) throw ConfigError(key, "expected true or false, got " + v.dump());
    return v.get<bool>();
}

std::string as_string(const json& v, const std::string& key) {
    if (!v.is_string()) throw ConfigError(key, "expected a string, got " + v.dump());
    return v.get<std::string>();
}

#define HTV_NUMBER(KEY, MEMBER) \
    Field{KEY, [](const RunConfig& c) { return json(c.MEMBER); }, \
          [](RunConfig& c, const json& v, const std::string& k) { c.MEMBER = as_number(v, k); }}
#define HTV_INDEX(KEY, MEMBER) \
    Field{KEY, [](const RunConfig& c) { return json(c.MEMBER); }, \
          [](RunConfig& c, const json& v, const std::string& k) { c.MEMBER = as_index(v, k); }}
#define HTV_SEED(KEY, MEMBER) \
    Field{KEY, [](const RunConfig& c) { return json(c.MEMBER); }, \
          [](RunConfig& c, const json& v, const std::string& k) { c.MEMBER = as_seed(v, k); }}
#define HTV_BOOL(KEY, MEMBER) \
    Field{KEY, [](const RunConfig& c) { return json(c.MEMBER); }, \
          [](RunConfig& c, const json& v, const std::string& k) { c.MEMBER = as_bool(v, k); }}
#define HTV_STRING(KEY, MEMBER) \
    Field{KEY, [](const RunConfig& c) { return json(c.MEMBER); }, \
          [](RunConfig& c, const json& v, const std::string& k) { c.MEMBER = as_string(v, k); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = {
        HTV_STRING("data.path", data_path),
        HTV_BOOL("data.synth", data_synth),
        HTV_INDEX("data.stride", stride),
        Field{"data.split", [](const RunConfig& c) { return json(c.split); },
              [](RunConfig& c, const json& v, const std::string& k) {
                  if (!v.is_array() || v.size() != 3) throw ConfigError(k, "expected [train, val, test] ratios");
                  for (std::size_t i = 0; i < 3; ++i) c.split[i] = as_number(v[i], k);
              }},
        HTV_INDEX("synth.channels", synth_channels),
        HTV_INDEX("synth.length", synth_length),
        HTV_SEED("synth.seed", synth_seed),
        HTV_INDEX("model.input_len", model.input_len),
        HTV_INDEX("model.horizon", model.horizon),
        HTV_INDEX("model.layers", model.latent_layers),
        HTV_INDEX("model.scale", model.scale),
        HTV_INDEX("model.d_model", model.d_model),
        HTV_INDEX("model.heads", model.heads),
        HTV_INDEX("model.d_k", model.d_k),
        HTV_INDEX("model.d_ff", model.d_ff),
        HTV_INDEX("model.encoder_layers", model.encoder_layers),
        HTV_INDEX("model.time_features", model.time_features),
        HTV_NUMBER("model.alpha", model.alpha),
        HTV_NUMBER("model.gamma", model.gamma),
        HTV_NUMBER("model.eps", model.eps),
        HTV_NUMBER("model.recon_weight", model.recon_weight),
        HTV_NUMBER("model.kl_weight", model.kl_weight),
        HTV_BOOL("model.fusion", model.fusion),
        Field{"model.activation", [](const RunConfig& c) { return json(to_string(c.model.activation)); },
              [](RunConfig& c, const json& v, const std::string& k) {
                  c.model.activation = parse_activation(as_string(v, k));
              }},
        HTV_NUMBER("train.lr", train.lr),
        HTV_NUMBER("train.beta1", train.beta1),
        HTV_NUMBER("train.beta2", train.beta2),
        HTV_NUMBER("train.adam_eps", train.adam_eps),
        HTV_INDEX("train.epochs", train.epochs),
        HTV_INDEX("train.batch", train.batch),
        HTV_INDEX("train.patience", train.patience),
        HTV_INDEX("train.max_steps", train.max_steps),
        HTV_NUMBER("train.max_grad_norm", train.max_grad_norm),
        HTV_SEED("seed", train.seed),
        HTV_INDEX("runs", runs),
        HTV_STRING("out_dir", out_dir),
        HTV_STRING("checkpoint", checkpoint),
        HTV_INDEX("forecast.origin", origin),
        HTV_STRING("ablate.sweep", sweep),
        Field{"ablate.values",
              [](const RunConfig& c) { return c.sweep_values ? json(*c.sweep_values) : json(nullptr); },
              [](RunConfig& c, const json& v, const std::string& k) {
                  if (v.is_null()) {
                      c.sweep_values.reset();
                      return;
                  }
                  if (!v.is_array()) throw ConfigError(k, "expected a list of numbers or null");
                  std::vector<Scalar> values;
                  for (const auto& x : v) values.push_back(as_number(x, k));
                  c.sweep_values = std::move(values);
              }},
    };
    return table;
}

#undef HTV_NUMBER
#undef HTV_INDEX
#undef HTV_SEED
#undef HTV_BOOL
#undef HTV_STRING

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string RunConfig::checkpoint_path() const { return checkpoint.empty() ? out_dir + "/model.ckpt" : checkpoint; }

void RunConfig::validate() const {
    if (data_path.empty() && !data_synth) {
        throw ConfigError("data.path", "no dataset: set data.path or data.synth = true");
    }
    ModelConfig m = model;
    m.channels = data_path.empty() ? synth_channels : std::max<Index>(1, m.channels);
    m.validate("model");
    train.validate("train");
    if (stride < 1) throw ConfigError("data.stride", "must be >= 1");
    Scalar total = 0.0;
    for (Scalar r : split) {
        if (!(r >= 0.0)) throw ConfigError("data.split", "ratios must be non-negative");
        total += r;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("data.split", "ratios must sum to 1");
    if (synth_channels < 1) throw ConfigError("synth.channels", "must be >= 1");
    if (synth_length < 1) throw ConfigError("synth.length", "must be >= 1");
    if (runs < 1) throw ConfigError("runs", "must be >= 1");
    if (sweep != "alpha" && sweep != "gamma" && sweep != "layers" && sweep != "objective") {
        throw ConfigError("ablate.sweep", "expected alpha, gamma, layers or objective, got \"" + sweep + "\"");
    }
}

namespace {

bool is_location(const std::string& key) { return key == "out_dir" || key == "checkpoint"; }

}  // namespace

nlohmann::json RunConfig::to_json(bool with_locations) const {
    json out = json::object();
    for (const Field& f : fields()) {
        if (with_locations || !is_location(f.key)) out[f.key] = f.get(*this);
    }
    return out;
}

std::string RunConfig::to_text(bool with_locations) const {
    std::ostringstream os;
    for (const Field& f : fields()) {
        if (with_locations || !is_location(f.key)) os << f.key << " = " << f.get(*this).dump() << "\n";
    }
    return os.str();
}

void set_field(RunConfig& cfg, const std::string& key, const nlohmann::json& value) {
    for (const Field& f : fields()) {
        if (key == f.key) {
            f.set(cfg, value, key);
            return;
        }
    }
    throw ConfigError(key, "unknown configuration key");
}

RunConfig parse_run_config(const std::string& text, RunConfig base) {
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no), "expected `key = value`");
        }
        const std::string key = trim(t.substr(0, eq));
        json value;
        try {
            value = json::parse(trim(t.substr(eq + 1)));
        } catch (const json::parse_error&) {
            throw ConfigError(key, "line " + std::to_string(line_no) + ": value is not a JSON literal");
        }
        set_field(base, key, value);
    }
    return base;
}

RunConfig load_run_config(const std::string& path, RunConfig base) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config", "cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return parse_run_config(os.str(), std::move(base));
}

SynthSpec synth_spec(const RunConfig& cfg) {
    return default_synth_spec(cfg.synth_channels, cfg.synth_length, cfg.synth_seed);
}

TimeSeries load_series(const RunConfig& cfg) {
    if (!cfg.data_path.empty()) return load_csv(cfg.data_path);
    if (cfg.data_synth) return generate_synthetic(synth_spec(cfg));
    throw ConfigError("data.path", "no dataset: set data.path or data.synth = true");
}

}  // namespace htv::cli
