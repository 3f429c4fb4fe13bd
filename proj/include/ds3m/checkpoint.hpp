#pragma once

#include <fstream>

#include "ds3m/baseline.hpp"

namespace ds3m {

inline constexpr const char* kCheckpointMagic = "DS3M-CKPT-1";

/// Everything needed to restore a trained model: the model configuration, a
/// kind tag ("ds3m" or "baseline-gru"), and the named parameter tensors.
struct Checkpoint {
    std::string kind = "ds3m";
    ModelConfig config;
    ParamSet params;  // union of all parameter sets, names are disjoint by prefix

    static Checkpoint from_model(const ModelConfig& cfg, const GenerativeParams& gen,
                                 const InferenceParams& inf) {
        Checkpoint ck;
        ck.kind = "ds3m";
        ck.config = cfg;
        for (const auto& [name, e] : gen.ps.entries) ck.params.add(name, e.value, e.trainable);
        for (const auto& [name, e] : inf.ps.entries) ck.params.add(name, e.value, e.trainable);
        return ck;
    }

    static Checkpoint from_baseline(const ModelConfig& cfg, const GruBaselineParams& bl) {
        Checkpoint ck;
        ck.kind = "baseline-gru";
        ck.config = cfg;
        for (const auto& [name, e] : bl.ps.entries) ck.params.add(name, e.value, e.trainable);
        return ck;
    }

    std::pair<GenerativeParams, InferenceParams> to_model() const {
        if (kind != "ds3m")
            throw std::runtime_error("checkpoint kind is '" + kind + "', expected 'ds3m'");
        GenerativeParams gen;
        InferenceParams inf;
        for (const auto& [name, e] : params.entries) {
            if (name.rfind("gen.", 0) == 0) gen.ps.add(name, e.value, e.trainable);
            else if (name.rfind("inf.", 0) == 0) inf.ps.add(name, e.value, e.trainable);
            else throw std::runtime_error("checkpoint: unexpected parameter " + name);
        }
        return {std::move(gen), std::move(inf)};
    }

    GruBaselineParams to_baseline() const {
        if (kind != "baseline-gru")
            throw std::runtime_error("checkpoint kind is '" + kind +
                                     "', expected 'baseline-gru'");
        GruBaselineParams bl;
        for (const auto& [name, e] : params.entries) bl.ps.add(name, e.value, e.trainable);
        return bl;
    }
};

/// Container layout (self-describing, little-endian 64-bit float payloads):
///   DS3M-CKPT-1\n
///   kind <tag>\n
///   config K D U H Z <family>\n
///   params <count>\n
/// then per parameter: "<name> <trainable> <rank> <extent...>\n" followed by
/// the raw values.
inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os << kCheckpointMagic << "\n";
    os << "kind " << ck.kind << "\n";
    os << "config " << ck.config.K << " " << ck.config.D << " " << ck.config.U << " "
       << ck.config.H << " " << ck.config.Z << " " << to_string(ck.config.family) << "\n";
    os << "params " << ck.params.size() << "\n";
    for (const auto& [name, e] : ck.params.entries) {
        os << name << " " << (e.trainable ? 1 : 0) << " " << e.value.rank();
        for (std::size_t ext : e.value.shape) os << " " << ext;
        os << "\n";
        os.write(reinterpret_cast<const char*>(e.value.data.data()),
                 static_cast<std::streamsize>(e.value.data.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string line;
    std::getline(is, line);
    if (line != kCheckpointMagic)
        throw std::runtime_error("not a " + std::string(kCheckpointMagic) + " file: " + path);

    Checkpoint ck;
    std::string tag;
    is >> tag >> ck.kind;
    if (tag != "kind") throw std::runtime_error("malformed checkpoint header: " + path);
    std::string family;
    is >> tag >> ck.config.K >> ck.config.D >> ck.config.U >> ck.config.H >> ck.config.Z >>
        family;
    if (tag != "config") throw std::runtime_error("malformed checkpoint header: " + path);
    ck.config.family = emission_family_from_string(family);
    std::size_t count = 0;
    is >> tag >> count;
    if (tag != "params") throw std::runtime_error("malformed checkpoint header: " + path);
    is.get();  // consume newline before the first entry

    for (std::size_t i = 0; i < count; ++i) {
        std::string name;
        int trainable = 1;
        std::size_t rank = 0;
        is >> name >> trainable >> rank;
        std::vector<std::size_t> shape(rank);
        for (std::size_t& ext : shape) is >> ext;
        is.get();
        Tensor t(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (!is) throw std::runtime_error("truncated checkpoint: " + path);
        ck.params.add(name, std::move(t), trainable != 0);
    }
    return ck;
}

}  // namespace ds3m
