#pragma once

#include "htv/config.hpp"
#include "htv/tensor.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace htv {

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
};

/// Named trainable matrices in registration order. Indices are stable.
class ParameterSet {
public:
    std::size_t add(std::string name, Matrix init);

    std::size_t size() const { return params_.size(); }
    Parameter& operator[](std::size_t i) { return params_[i]; }
    const Parameter& operator[](std::size_t i) const { return params_[i]; }
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    /// Leaf on `tape` that views parameter `i` and accumulates into its grad.
    Tensor bind(Tape& tape, std::size_t i) { return tape.parameter(params_[i].value, params_[i].grad); }

    void zero_grad();
    Scalar grad_norm() const;
    Index scalar_count() const;

    /// Copies values only; names and shapes must match.
    void assign_values(const ParameterSet& other);

private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> by_name_;
};

/// Fan-in scaled uniform init: U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
Matrix uniform_init(Index fan_in, Index rows, Index cols, Rng& rng);

// ---------------------------------------------------------------------------
// Checkpoints
//
// Byte layout:
//   [0, 8)        magic "HTVCKPT1"
//   [8, 16)       header length N, unsigned 64-bit little-endian
//   [16, 16+N)    UTF-8 JSON header:
//                 {"format": "htv-checkpoint", "version": 1,
//                  "tensors": [{"name", "shape": [rows, cols], "offset"}...],
//                  "meta": {...}}
//                 offset counts doubles from the start of the payload.
//   [16+N, end)   payload: IEEE-754 binary64 little-endian, each tensor row-major,
//                 tensors in header order.

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes or names in a checkpoint do not match the model.
class CheckpointIncompatibleError : public CheckpointError {
public:
    CheckpointIncompatibleError(const std::string& what, std::vector<std::string> offending)
        : CheckpointError(what), offending_(std::move(offending)) {}
    const std::vector<std::string>& offending() const { return offending_; }

private:
    std::vector<std::string> offending_;
};

struct NamedMatrix {
    std::string name;
    Matrix value;
};

struct Checkpoint {
    std::vector<NamedMatrix> tensors;
    nlohmann::json meta = nlohmann::json::object();
};

void write_checkpoint(const std::string& path, const ParameterSet& params,
                      const nlohmann::json& meta = nlohmann::json::object());
std::string encode_checkpoint(const ParameterSet& params, const nlohmann::json& meta);
Checkpoint read_checkpoint(const std::string& path);
Checkpoint decode_checkpoint(const std::string& bytes);
/// Loads values into `params`. Throws CheckpointIncompatibleError listing every
/// missing, extra or mis-shaped tensor.
void load_into(const Checkpoint& ckpt, ParameterSet& params);

}  // namespace htv
