#pragma once

#include <optional>

#include "ds3m/ops.hpp"

namespace ds3m {

enum class EmissionFamily { gaussian, lognormal };

inline std::string to_string(EmissionFamily f) {
    return f == EmissionFamily::gaussian ? "gaussian" : "lognormal";
}

inline EmissionFamily emission_family_from_string(const std::string& s) {
    if (s == "gaussian") return EmissionFamily::gaussian;
    if (s == "lognormal") return EmissionFamily::lognormal;
    throw std::invalid_argument("unknown emission family: " + s);
}

/// All model dimensions and the output-distribution choice.
///   K: regimes, D: observation dim, U: input dim, H: RNN hidden dim,
///   Z: continuous latent dim.
struct ModelConfig {
    std::size_t K = 2;
    std::size_t D = 1;
    std::size_t U = 1;
    std::size_t H = 10;
    std::size_t Z = 2;
    EmissionFamily family = EmissionFamily::gaussian;

    void validate() const {
        if (K < 1) throw std::invalid_argument("ModelConfig: K must be >= 1");
        if (D < 1 || U < 1 || H < 1 || Z < 1)
            throw std::invalid_argument("ModelConfig: dimensions must be >= 1");
    }
};

/// Markov regime chain stored as unconstrained logits; rows of the transition
/// matrix come out of a row-wise softmax, so gradient steps keep them
/// stochastic by construction. The initial regime distribution is uniform.
struct RegimeChain {
    Tensor logits;  // K x K

    explicit RegimeChain(std::size_t K) : logits({K, K}) {}
    explicit RegimeChain(Tensor l) : logits(std::move(l)) {}

    std::size_t K() const { return logits.rows(); }

    Tensor gamma() const {
        std::size_t k = K();
        Tensor g({k, k});
        for (std::size_t i = 0; i < k; ++i) {
            Tensor row({k});
            for (std::size_t j = 0; j < k; ++j) row[j] = logits.at(i, j);
            Tensor p = softmax(row);
            for (std::size_t j = 0; j < k; ++j) g.at(i, j) = p[j];
        }
        return g;
    }

    Tensor initial_distribution() const {
        Tensor p({K()});
        for (double& v : p.data) v = 1.0 / static_cast<double>(K());
        return p;
    }
};

/// Row d_prev of the transition matrix.
inline Tensor regime_step_probs(const RegimeChain& chain, std::size_t d_prev) {
    if (d_prev >= chain.K())
        throw std::out_of_range("regime_step_probs: regime index out of range");
    std::size_t k = chain.K();
    Tensor row({k});
    for (std::size_t j = 0; j < k; ++j) row[j] = chain.logits.at(d_prev, j);
    return softmax(row);
}

/// Generative parameters: forward RNN f_h, regime logits, per-regime
/// transition nets f1/f2 and emission nets f_o, all in one named ParamSet.
/// Initial logvar-head bias for regime k, spread linearly over [+1, -1].
inline double regime_logvar_offset(std::size_t k, std::size_t K) {
    if (K < 2) return 0.0;
    return 1.0 - 2.0 * static_cast<double>(k) / static_cast<double>(K - 1);
}

struct GenerativeParams {
    ParamSet ps;

    static GenerativeParams init(const ModelConfig& cfg, Rng& rng) {
        cfg.validate();
        GenerativeParams gp;
        init_gru_params(gp.ps, "gen.rnn", cfg.U, cfg.H, rng);
        gp.ps.add("gen.gamma.logits", Tensor({cfg.K, cfg.K}));
        for (std::size_t k = 0; k < cfg.K; ++k) {
            std::string suffix = ".k" + std::to_string(k);
            init_mlp2_params(gp.ps, "gen.trans_mean" + suffix, cfg.Z + cfg.H, cfg.Z, cfg.Z, rng);
            init_mlp2_params(gp.ps, "gen.trans_logvar" + suffix, cfg.Z + cfg.H, cfg.Z, cfg.Z,
                             rng);
            init_mlp2_params(gp.ps, "gen.emission" + suffix, cfg.Z + cfg.H, 2 * cfg.D,
                             2 * cfg.D, rng);
            // Stagger the noise-scale biases across regimes. With identical
            // (zero) logvar heads nothing seeds variance specialization and
            // optimization tends to split regimes on the observation level
            // instead; a spread of initial scales puts the variance-switching
            // solution inside the basin of attraction.
            double off = regime_logvar_offset(k, cfg.K);
            for (double& v : gp.ps.at("gen.trans_logvar" + suffix + ".b2").data) v = off;
            Tensor& eb = gp.ps.at("gen.emission" + suffix + ".b2");
            for (std::size_t j = 0; j < cfg.D; ++j) eb[cfg.D + j] = off;
        }
        return gp;
    }

    RegimeChain chain() const { return RegimeChain(ps.at("gen.gamma.logits")); }
};

/// Mean and log-variance of one emission distribution.
struct EmissionDist {
    EmissionFamily family;
    Tensor mean;
    Tensor logvar;
};

// ---------------------------------------------------------------------------
// Graph-side evaluation
// ---------------------------------------------------------------------------

/// Generative network bound to one tape.
struct GenModel {
    ModelConfig cfg;
    BoundParams p;

    static GenModel bind_to(GradTape& tape, const ModelConfig& cfg,
                            const GenerativeParams& params) {
        return GenModel{cfg, bind(tape, params.ps)};
    }

    GradTape& tape() const { return *p.tape; }

    /// h_t = gru(h_{t-1}, x_t) for each row of x_seq; h_0 = 0.
    std::vector<Var> encode_forward(const Tensor& x_seq) const {
        if (x_seq.rank() != 2 || x_seq.cols() != cfg.U)
            throw std::invalid_argument("encode_forward: expected T x U inputs, got " +
                                        x_seq.shape_str());
        std::vector<Var> hs;
        hs.reserve(x_seq.rows());
        Var h = tape().constant(Tensor({cfg.H}));
        for (std::size_t t = 0; t < x_seq.rows(); ++t) {
            Tensor xt({cfg.U});
            for (std::size_t j = 0; j < cfg.U; ++j) xt[j] = x_seq.at(t, j);
            h = gru_cell(h, tape().constant(std::move(xt)), p, "gen.rnn");
            hs.push_back(h);
        }
        return hs;
    }

    Var gru_step(Var h_prev, Var x) const { return gru_cell(h_prev, x, p, "gen.rnn"); }

    Var gamma_row(std::size_t k) const {
        if (k >= cfg.K) throw std::out_of_range("gamma_row: regime index out of range");
        Var logits = p.at("gen.gamma.logits");
        return softmax(slice(logits, k * cfg.K, cfg.K));
    }

    std::pair<Var, Var> prior_z_params(Var z_prev, Var h_t, std::size_t k) const {
        if (k >= cfg.K) throw std::out_of_range("prior_z_params: regime index out of range");
        Var in = concat(z_prev, h_t);
        std::string suffix = ".k" + std::to_string(k);
        Var mu = mlp2(in, p, "gen.trans_mean" + suffix);
        Var lv = clamp(mlp2(in, p, "gen.trans_logvar" + suffix), kLogVarMin, kLogVarMax);
        return {mu, lv};
    }

    /// f_o^(k)([z_t, h_t]) split into mean and clamped log-variance.
    std::pair<Var, Var> emission_params(Var z_t, Var h_t, std::size_t k) const {
        if (k >= cfg.K) throw std::out_of_range("emission_params: regime index out of range");
        Var out = mlp2(concat(z_t, h_t), p, "gen.emission.k" + std::to_string(k));
        Var mu = slice(out, 0, cfg.D);
        Var lv = clamp(slice(out, cfg.D, cfg.D), kLogVarMin, kLogVarMax);
        return {mu, lv};
    }

    /// log pi(y_t | z_t, h_t, d_t = k) under the configured family. For the
    /// lognormal family the density is Gaussian in log(y) with the change of
    /// variables term included.
    Var emission_log_pdf(const Tensor& y_t, Var z_t, Var h_t, std::size_t k) const {
        auto [mu, lv] = emission_params(z_t, h_t, k);
        if (cfg.family == EmissionFamily::gaussian)
            return gaussian_log_pdf(tape().constant(y_t), mu, lv);
        Tensor logy = y_t;
        double jacobian = 0.0;
        for (double& v : logy.data) {
            if (v <= 0.0)
                throw std::domain_error("lognormal emission requires positive targets");
            v = std::log(v);
            jacobian -= v;
        }
        return add_const(gaussian_log_pdf(tape().constant(logy), mu, lv), jacobian);
    }
};

// ---------------------------------------------------------------------------
// Numeric convenience entry points (build a throwaway tape internally)
// ---------------------------------------------------------------------------

inline Tensor encode_forward(const Tensor& x_seq, const ModelConfig& cfg,
                             const GenerativeParams& params) {
    GradTape tape;
    GenModel m = GenModel::bind_to(tape, cfg, params);
    std::vector<Var> hs = m.encode_forward(x_seq);
    Tensor out({hs.size(), cfg.H});
    for (std::size_t t = 0; t < hs.size(); ++t)
        for (std::size_t j = 0; j < cfg.H; ++j) out.at(t, j) = hs[t].value()[j];
    return out;
}

inline std::pair<Tensor, Tensor> prior_z_params(const Tensor& z_prev, const Tensor& h_t,
                                                std::size_t k, const ModelConfig& cfg,
                                                const GenerativeParams& params) {
    GradTape tape;
    GenModel m = GenModel::bind_to(tape, cfg, params);
    auto [mu, lv] = m.prior_z_params(tape.constant(z_prev), tape.constant(h_t), k);
    return {mu.value(), lv.value()};
}

inline EmissionDist emission_dist(const Tensor& z_t, const Tensor& h_t, std::size_t k,
                                  const ModelConfig& cfg, const GenerativeParams& params) {
    GradTape tape;
    GenModel m = GenModel::bind_to(tape, cfg, params);
    auto [mu, lv] = m.emission_params(tape.constant(z_t), tape.constant(h_t), k);
    return EmissionDist{cfg.family, mu.value(), lv.value()};
}

/// Joint log p(y, z, d | x) per the factorized model. The first step scores
/// d_1 against the uniform initial distribution and uses z_0 = 0.
inline double joint_log_prob(const Tensor& y_seq, const Tensor& x_seq, const Tensor& z_path,
                             const std::vector<std::size_t>& d_path, const ModelConfig& cfg,
                             const GenerativeParams& params) {
    std::size_t T = y_seq.rows();
    if (x_seq.rows() != T || z_path.rows() != T || d_path.size() != T)
        throw std::invalid_argument("joint_log_prob: misaligned sequence lengths");
    GradTape tape;
    GenModel m = GenModel::bind_to(tape, cfg, params);
    RegimeChain chain = params.chain();
    Tensor gamma = chain.gamma();
    Tensor init = chain.initial_distribution();

    std::vector<Var> hs = m.encode_forward(x_seq);
    double total = 0.0;
    Var z_prev = tape.constant(Tensor({cfg.Z}));
    for (std::size_t t = 0; t < T; ++t) {
        std::size_t d = d_path[t];
        if (d >= cfg.K) throw std::out_of_range("joint_log_prob: regime index out of range");
        total += t == 0 ? std::log(init[d]) : std::log(gamma.at(d_path[t - 1], d));

        Tensor zt({cfg.Z}), yt({cfg.D});
        for (std::size_t j = 0; j < cfg.Z; ++j) zt[j] = z_path.at(t, j);
        for (std::size_t j = 0; j < cfg.D; ++j) yt[j] = y_seq.at(t, j);
        Var z_t = tape.constant(zt);

        auto [mu, lv] = m.prior_z_params(z_prev, hs[t], d);
        total += gaussian_log_pdf(zt, mu.value(), lv.value());
        total += m.emission_log_pdf(yt, z_t, hs[t], d).item();
        z_prev = z_t;
    }
    return total;
}

struct GeneratedSeries {
    Tensor y_seq;   // T x D
    Tensor z_path;  // T x Z
    std::vector<std::size_t> d_path;
};

/// Ancestral draw from the generative model. If x_seq is absent the model runs
/// autoregressively with x_t = y_{t-1} (y_0 = 0), which requires U == D.
inline GeneratedSeries generate(const ModelConfig& cfg, const GenerativeParams& params,
                                const std::optional<Tensor>& x_seq, std::size_t T,
                                std::uint64_t seed) {
    if (!x_seq && cfg.U != cfg.D)
        throw std::invalid_argument("generate: autoregressive mode requires U == D");
    if (x_seq) T = x_seq->rows();
    Rng rng(seed);
    GradTape tape;
    GenModel m = GenModel::bind_to(tape, cfg, params);
    RegimeChain chain = params.chain();

    GeneratedSeries out;
    out.y_seq = Tensor({T, cfg.D});
    out.z_path = Tensor({T, cfg.Z});
    out.d_path.resize(T);

    Var h = tape.constant(Tensor({cfg.H}));
    Var z_prev = tape.constant(Tensor({cfg.Z}));
    Tensor y_prev({cfg.D});
    std::size_t d_prev = 0;
    for (std::size_t t = 0; t < T; ++t) {
        Tensor xt({cfg.U});
        if (x_seq)
            for (std::size_t j = 0; j < cfg.U; ++j) xt[j] = x_seq->at(t, j);
        else
            xt = y_prev;
        h = m.gru_step(h, tape.constant(xt));

        Tensor probs = t == 0 ? chain.initial_distribution() : regime_step_probs(chain, d_prev);
        std::size_t d = rng.categorical(probs);
        out.d_path[t] = d;

        auto [zmu, zlv] = m.prior_z_params(z_prev, h, d);
        Tensor zt({cfg.Z});
        for (std::size_t j = 0; j < cfg.Z; ++j)
            zt[j] = zmu.value()[j] + rng.normal() * std::exp(0.5 * zlv.value()[j]);
        Var z_t = tape.constant(zt);

        auto [ymu, ylv] = m.emission_params(z_t, h, d);
        Tensor yt({cfg.D});
        for (std::size_t j = 0; j < cfg.D; ++j) {
            double draw = ymu.value()[j] + rng.normal() * std::exp(0.5 * ylv.value()[j]);
            yt[j] = cfg.family == EmissionFamily::lognormal ? std::exp(draw) : draw;
        }

        for (std::size_t j = 0; j < cfg.Z; ++j) out.z_path.at(t, j) = zt[j];
        for (std::size_t j = 0; j < cfg.D; ++j) out.y_seq.at(t, j) = yt[j];
        z_prev = z_t;
        y_prev = yt;
        d_prev = d;
    }
    return out;
}

}  // namespace ds3m
