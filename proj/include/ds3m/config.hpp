#pragma once

#include <fstream>

#include "ds3m/training.hpp"

namespace ds3m {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Experiment description: data source, model dimensions, training and
/// prediction settings. Plain-text sections with key = value lines; unknown
/// keys are rejected.
struct ExperimentConfig {
    // [data]
    std::string source;  // "toy", "lorenz", or a file path
    std::size_t sim_length = 0;  // 0 = simulator default
    std::size_t window = 20;
    std::size_t n_train = 0, n_val = 0, n_test = 0;
    std::vector<std::string> target_columns;  // generic files; empty = all y columns

    // [model]
    std::string kind = "ds3m";  // or "baseline-gru"
    ModelConfig model;

    // [train]
    TrainConfig train;

    // [predict]
    std::size_t predict_samples = 100;
    double coverage = 0.9;

    std::uint64_t seed = 0;

    static ExperimentConfig parse_file(const std::string& path);
    static ExperimentConfig parse(std::istream& is, const std::string& origin);

    void validate() const {
        if (source.empty()) throw ConfigError("config: data.source is required");
        if (n_train == 0 || n_val == 0 || n_test == 0)
            throw ConfigError("config: data.splits must give three positive counts");
        if (kind != "ds3m" && kind != "baseline-gru")
            throw ConfigError("config: model.kind must be ds3m or baseline-gru");
        if (coverage <= 0.0 || coverage >= 1.0)
            throw ConfigError("config: predict.coverage must be in (0,1)");
        if (predict_samples < 1) throw ConfigError("config: predict.samples must be >= 1");
        train.validate();
    }

    /// The config as canonical text, embedded in run manifests.
    std::string serialize() const {
        std::ostringstream os;
        os << "seed = " << seed << "\n\n[data]\nsource = " << source << "\n";
        if (sim_length) os << "length = " << sim_length << "\n";
        os << "window = " << window << "\n";
        os << "splits = " << n_train << " " << n_val << " " << n_test << "\n";
        if (!target_columns.empty()) {
            os << "target_columns =";
            for (const auto& c : target_columns) os << " " << c;
            os << "\n";
        }
        os << "\n[model]\nkind = " << kind << "\nregimes = " << model.K
           << "\nlatent = " << model.Z << "\nhidden = " << model.H
           << "\nfamily = " << to_string(model.family) << "\n";
        os << "\n[train]\nbatch_size = " << train.batch_size
           << "\nlearning_rate = " << train.initial_lr
           << "\nplateau_factor = " << train.plateau_factor
           << "\nplateau_patience = " << train.plateau_patience
           << "\nearly_stop_patience = " << train.early_stop_patience
           << "\nmax_epochs = " << train.max_epochs << "\nkl_start = " << train.kl_anneal_start
           << "\nkl_end = " << train.kl_anneal_end
           << "\nanneal_epochs = " << train.anneal_epochs
           << "\nmc_samples = " << train.mc_samples << "\ngrad_clip = " << train.grad_clip
           << "\n";
        os << "\n[predict]\nsamples = " << predict_samples << "\ncoverage = " << coverage
           << "\n";
        return os.str();
    }
};

namespace detail {
inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}
template <typename T>
T parse_number(const std::string& value, const std::string& key) {
    std::istringstream is(value);
    T out{};
    if (!(is >> out) || !(is >> std::ws).eof())
        throw ConfigError("config: bad value '" + value + "' for key " + key);
    return out;
}
}  // namespace detail

inline ExperimentConfig ExperimentConfig::parse(std::istream& is, const std::string& origin) {
    ExperimentConfig cfg;
    std::string section, line;
    std::size_t lineno = 0;
    bool splits_seen = false;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = t.substr(1, t.size() - 2);
            if (section != "data" && section != "model" && section != "train" &&
                section != "predict")
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": unknown section [" + section + "]");
            continue;
        }
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        std::string key = detail::trim(t.substr(0, eq));
        std::string value = detail::trim(t.substr(eq + 1));
        std::string qual = section.empty() ? key : section + "." + key;

        using detail::parse_number;
        if (qual == "seed") cfg.seed = parse_number<std::uint64_t>(value, qual);
        else if (qual == "data.source") cfg.source = value;
        else if (qual == "data.length") cfg.sim_length = parse_number<std::size_t>(value, qual);
        else if (qual == "data.window") cfg.window = parse_number<std::size_t>(value, qual);
        else if (qual == "data.splits") {
            std::istringstream vs(value);
            if (!(vs >> cfg.n_train >> cfg.n_val >> cfg.n_test))
                throw ConfigError("config: data.splits needs three counts, got '" + value + "'");
            splits_seen = true;
        } else if (qual == "data.target_columns") {
            std::istringstream vs(value);
            std::string col;
            while (vs >> col) cfg.target_columns.push_back(col);
        } else if (qual == "model.kind") cfg.kind = value;
        else if (qual == "model.regimes") cfg.model.K = parse_number<std::size_t>(value, qual);
        else if (qual == "model.latent") cfg.model.Z = parse_number<std::size_t>(value, qual);
        else if (qual == "model.hidden") cfg.model.H = parse_number<std::size_t>(value, qual);
        else if (qual == "model.family") cfg.model.family = emission_family_from_string(value);
        else if (qual == "train.batch_size")
            cfg.train.batch_size = parse_number<std::size_t>(value, qual);
        else if (qual == "train.learning_rate")
            cfg.train.initial_lr = parse_number<double>(value, qual);
        else if (qual == "train.plateau_factor")
            cfg.train.plateau_factor = parse_number<double>(value, qual);
        else if (qual == "train.plateau_patience")
            cfg.train.plateau_patience = parse_number<std::size_t>(value, qual);
        else if (qual == "train.early_stop_patience")
            cfg.train.early_stop_patience = parse_number<std::size_t>(value, qual);
        else if (qual == "train.max_epochs")
            cfg.train.max_epochs = parse_number<std::size_t>(value, qual);
        else if (qual == "train.kl_start")
            cfg.train.kl_anneal_start = parse_number<double>(value, qual);
        else if (qual == "train.kl_end")
            cfg.train.kl_anneal_end = parse_number<double>(value, qual);
        else if (qual == "train.anneal_epochs")
            cfg.train.anneal_epochs = parse_number<std::size_t>(value, qual);
        else if (qual == "train.mc_samples")
            cfg.train.mc_samples = parse_number<std::size_t>(value, qual);
        else if (qual == "train.grad_clip")
            cfg.train.grad_clip = parse_number<double>(value, qual);
        else if (qual == "predict.samples")
            cfg.predict_samples = parse_number<std::size_t>(value, qual);
        else if (qual == "predict.coverage")
            cfg.coverage = parse_number<double>(value, qual);
        else
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown key '" + qual +
                              "'");
    }
    if (!splits_seen) throw ConfigError(origin + ": data.splits is required");
    cfg.train.seed = cfg.seed;
    return cfg;
}

inline ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config: " + path);
    return parse(is, path);
}

}  // namespace ds3m
