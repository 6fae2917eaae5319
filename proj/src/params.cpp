#include "htv/params.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace htv {

namespace {

constexpr char kMagic[8] = {'H', 'T', 'V', 'C', 'K', 'P', 'T', '1'};

void put_u64_le(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

std::uint64_t get_u64_le(const std::string& in, std::size_t pos) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    return v;
}

void put_f64_le(std::string& out, double d) { put_u64_le(out, std::bit_cast<std::uint64_t>(d)); }

double get_f64_le(const std::string& in, std::size_t pos) { return std::bit_cast<double>(get_u64_le(in, pos)); }

}  // namespace

std::size_t ParameterSet::add(std::string name, Matrix init) {
    if (by_name_.count(name) != 0) throw ContractError("duplicate parameter name " + name);
    const std::size_t idx = params_.size();
    by_name_.emplace(name, idx);
    Matrix grad = Matrix::Zero(init.rows(), init.cols());
    params_.push_back(Parameter{std::move(name), std::move(init), std::move(grad)});
    return idx;
}

Parameter& ParameterSet::at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
    return params_[it->second];
}

const Parameter& ParameterSet::at(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw std::out_of_range("no parameter named " + name);
    return params_[it->second];
}

void ParameterSet::zero_grad() {
    for (Parameter& p : params_) p.grad.setZero(p.value.rows(), p.value.cols());
}

Scalar ParameterSet::grad_norm() const {
    Scalar sq = 0.0;
    for (const Parameter& p : params_) sq += p.grad.squaredNorm();
    return std::sqrt(sq);
}

Index ParameterSet::scalar_count() const {
    Index n = 0;
    for (const Parameter& p : params_) n += p.value.size();
    return n;
}

void ParameterSet::assign_values(const ParameterSet& other) {
    if (other.size() != size()) throw ContractError("assign_values: parameter count differs");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (other[i].name != params_[i].name || other[i].value.rows() != params_[i].value.rows() ||
            other[i].value.cols() != params_[i].value.cols()) {
            throw ContractError("assign_values: mismatch at " + params_[i].name);
        }
        params_[i].value = other[i].value;
    }
}

Matrix uniform_init(Index fan_in, Index rows, Index cols, Rng& rng) {
    const Scalar bound = 1.0 / std::sqrt(static_cast<Scalar>(std::max<Index>(fan_in, 1)));
    std::uniform_real_distribution<Scalar> dist(-bound, bound);
    Matrix m(rows, cols);
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
    return m;
}

std::string encode_checkpoint(const ParameterSet& params, const nlohmann::json& meta) {
    nlohmann::json header;
    header["format"] = "htv-checkpoint";
    header["version"] = 1;
    header["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const Parameter& p : params) {
        header["tensors"].push_back(
            {{"name", p.name}, {"shape", {p.value.rows(), p.value.cols()}}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(p.value.size());
    }
    header["meta"] = meta;
    const std::string text = header.dump();

    std::string out(kMagic, sizeof(kMagic));
    put_u64_le(out, text.size());
    out += text;
    out.reserve(out.size() + offset * 8);
    for (const Parameter& p : params) {
        for (Index i = 0; i < p.value.size(); ++i) put_f64_le(out, p.value.data()[i]);
    }
    return out;
}

void write_checkpoint(const std::string& path, const ParameterSet& params, const nlohmann::json& meta) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot open " + path + " for writing");
    const std::string bytes = encode_checkpoint(params, meta);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw CheckpointError("write failed for " + path);
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw CheckpointError("checkpoint header: bad magic");
    }
    const std::uint64_t n = get_u64_le(bytes, 8);
    if (n > bytes.size() - 16) throw CheckpointError("checkpoint header: length exceeds file size");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(n));
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint header: ") + e.what());
    }
    if (!header.is_object() || header.value("format", "") != "htv-checkpoint" || !header.contains("tensors") ||
        !header["tensors"].is_array()) {
        throw CheckpointError("checkpoint header: not an htv-checkpoint");
    }

    Checkpoint ckpt;
    if (header.contains("meta")) ckpt.meta = header["meta"];
    const std::size_t payload = 16 + n;
    const std::uint64_t payload_doubles = (bytes.size() - payload) / 8;
    try {
        for (const auto& t : header["tensors"]) {
            const auto name = t.at("name").get<std::string>();
            const auto rows = t.at("shape").at(0).get<Index>();
            const auto cols = t.at("shape").at(1).get<Index>();
            const auto offset = t.at("offset").get<std::uint64_t>();
            if (rows < 0 || cols < 0 || offset + static_cast<std::uint64_t>(rows * cols) > payload_doubles) {
                throw CheckpointError("checkpoint header: tensor " + name + " exceeds payload");
            }
            Matrix m(rows, cols);
            for (Index i = 0; i < m.size(); ++i) m.data()[i] = get_f64_le(bytes, payload + 8 * (offset + i));
            ckpt.tensors.push_back({name, std::move(m)});
        }
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("checkpoint header: ") + e.what());
    }
    return ckpt;
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

void load_into(const Checkpoint& ckpt, ParameterSet& params) {
    std::vector<std::string> offending;
    std::unordered_map<std::string, const Matrix*> found;
    for (const NamedMatrix& t : ckpt.tensors) found.emplace(t.name, &t.value);

    for (const Parameter& p : params) {
        auto it = found.find(p.name);
        if (it == found.end()) {
            offending.push_back(p.name + " (missing)");
        } else if (it->second->rows() != p.value.rows() || it->second->cols() != p.value.cols()) {
            offending.push_back(p.name + " (checkpoint " + shape_string(*it->second) + ", model " +
                                shape_string(p.value) + ")");
        }
    }
    for (const NamedMatrix& t : ckpt.tensors) {
        if (!params.contains(t.name)) offending.push_back(t.name + " (unexpected)");
    }
    if (!offending.empty()) {
        std::ostringstream os;
        os << "checkpoint incompatible with model:";
        for (const auto& o : offending) os << "\n  " << o;
        throw CheckpointIncompatibleError(os.str(), offending);
    }
    for (Parameter& p : params) p.value = *found.at(p.name);
}

}  // namespace htv
