#pragma once

#include "ds3m/training.hpp"

namespace ds3m {

/// One-step predictive summary for y_{T+1} plus the regime distribution.
struct ForecastResult {
    Tensor mean;          // (D)
    Tensor lower, upper;  // (D), empirical interval at the requested coverage
    Tensor regime_probs;  // (K), predictive distribution of d_{T+1}
    Tensor samples;       // S x D raw Monte-Carlo draws of y_{T+1}
};

/// In-sample regime assignment for a whole sequence.
struct SegmentationResult {
    std::vector<std::size_t> regime_path;  // argmax per step, ties to lower index
    Tensor probabilities;                  // T x K averaged realized q_d
    std::vector<double> run_lengths_per_regime;
};

namespace detail {

/// Forward and backward encodings of one sequence, computed numerically once
/// and shared across Monte-Carlo paths.
struct SequenceEncoding {
    Tensor h;       // T x H
    Tensor a;       // T x H
    Tensor h_next;  // (H), forward state after feeding x_{T+1} = y_T
};

inline SequenceEncoding encode_sequence(const ModelConfig& cfg,
                                        const GenerativeParams& gen_params,
                                        const InferenceParams& inf_params, const Tensor& y_seq,
                                        const Tensor& x_seq) {
    std::size_t T = y_seq.rows();
    SequenceEncoding enc;
    enc.h = Tensor({T, cfg.H});
    enc.a = Tensor({T, cfg.H});
    Tensor h({cfg.H});
    for (std::size_t t = 0; t < T; ++t) {
        Tensor xt({cfg.U});
        for (std::size_t j = 0; j < cfg.U; ++j) xt[j] = x_seq.at(t, j);
        h = ngru_cell(gen_params.ps, "gen.rnn", h, xt);
        for (std::size_t j = 0; j < cfg.H; ++j) enc.h.at(t, j) = h[j];
    }
    Tensor yT({cfg.U});
    for (std::size_t j = 0; j < cfg.U && j < cfg.D; ++j) yT[j] = y_seq.at(T - 1, j);
    enc.h_next = ngru_cell(gen_params.ps, "gen.rnn", h, yT);

    Tensor a({cfg.H});
    for (std::size_t i = 0; i < T; ++i) {
        std::size_t t = T - 1 - i;
        Tensor yh({cfg.D + cfg.H});
        for (std::size_t j = 0; j < cfg.D; ++j) yh[j] = y_seq.at(t, j);
        for (std::size_t j = 0; j < cfg.H; ++j) yh[cfg.D + j] = enc.h.at(t, j);
        a = ngru_cell(inf_params.ps, "inf.rnn", a, yh);
        for (std::size_t j = 0; j < cfg.H; ++j) enc.a.at(t, j) = a[j];
    }
    return enc;
}

/// One numeric ancestral draw through the posterior; mirrors the draw order
/// of the differentiable path so equal seeds give equal paths.
inline LatentPath sample_path(const ModelConfig& cfg, const GenerativeParams& gen_params,
                              const InferenceParams& inf_params, const SequenceEncoding& enc,
                              Rng& rng) {
    std::size_t T = enc.h.rows();
    LatentPath path;
    path.z_samples = Tensor({T, cfg.Z});
    path.eps_noise = Tensor({T, cfg.Z});
    path.q_d_probs = Tensor({T, cfg.K});
    path.d_samples.resize(T);

    Tensor uniform({cfg.K});
    for (double& v : uniform.data) v = 1.0 / static_cast<double>(cfg.K);
    path.d_initial = rng.categorical(uniform);

    Tensor z_prev({cfg.Z});
    std::size_t d_prev = path.d_initial;
    for (std::size_t t = 0; t < T; ++t) {
        Tensor a_t({cfg.H});
        for (std::size_t j = 0; j < cfg.H; ++j) a_t[j] = enc.a.at(t, j);
        Tensor w = softmax(
            nmatvec(inf_params.ps.at("inf.cat.W.k" + std::to_string(d_prev)), a_t));
        for (std::size_t k = 0; k < cfg.K; ++k) path.q_d_probs.at(t, k) = w[k];

        std::size_t d = rng.categorical(w);
        path.d_samples[t] = d;

        std::string suffix = ".k" + std::to_string(d);
        Tensor in = nconcat(z_prev, a_t);
        Tensor mu = nmlp2(inf_params.ps, "inf.post_mean" + suffix, in);
        Tensor lv = nclamp_logvar(nmlp2(inf_params.ps, "inf.post_logvar" + suffix, in));
        for (std::size_t j = 0; j < cfg.Z; ++j) {
            double eps = rng.normal();
            path.eps_noise.at(t, j) = eps;
            z_prev[j] = mu[j] + eps * std::exp(0.5 * lv[j]);
            path.z_samples.at(t, j) = z_prev[j];
        }
        d_prev = d;
    }
    return path;
}

inline double quantile_linear(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    if (v.size() == 1) return v[0];
    double h = p * static_cast<double>(v.size() - 1);
    std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= v.size()) return v.back();
    double frac = h - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

}  // namespace detail

/// Monte-Carlo one-step forecast. Draws S posterior paths, steps the regime
/// chain, latent and emission one step, and summarizes the draws. The mean is
/// the sample mean of the per-path emission means; the interval is the
/// empirical quantile pair at (1 +- coverage) / 2 with linear interpolation.
/// Inputs and outputs are in the model's (normalized) units.
inline ForecastResult predict_one_step(const ModelConfig& cfg,
                                       const GenerativeParams& gen_params,
                                       const InferenceParams& inf_params, const Tensor& x_seq,
                                       const Tensor& y_seq, std::size_t S, double coverage,
                                       std::uint64_t seed) {
    if (S < 1) throw std::invalid_argument("predict_one_step: S must be >= 1");
    if (coverage <= 0.0 || coverage >= 1.0)
        throw std::invalid_argument("predict_one_step: coverage must be in (0,1)");

    detail::SequenceEncoding enc =
        detail::encode_sequence(cfg, gen_params, inf_params, y_seq, x_seq);
    RegimeChain chain = gen_params.chain();

    ForecastResult out;
    out.mean = Tensor({cfg.D});
    out.lower = Tensor({cfg.D});
    out.upper = Tensor({cfg.D});
    out.regime_probs = Tensor({cfg.K});
    out.samples = Tensor({S, cfg.D});

    std::size_t T = y_seq.rows();
    for (std::size_t s = 0; s < S; ++s) {
        Rng rng(Rng::derive(seed, s));
        LatentPath path = detail::sample_path(cfg, gen_params, inf_params, enc, rng);

        Tensor gamma_row = regime_step_probs(chain, path.d_samples[T - 1]);
        for (std::size_t k = 0; k < cfg.K; ++k) out.regime_probs[k] += gamma_row[k];
        std::size_t d_next = rng.categorical(gamma_row);

        Tensor z_T({cfg.Z});
        for (std::size_t j = 0; j < cfg.Z; ++j) z_T[j] = path.z_samples.at(T - 1, j);
        std::string suffix = ".k" + std::to_string(d_next);
        Tensor in = nconcat(z_T, enc.h_next);
        Tensor zmu = nmlp2(gen_params.ps, "gen.trans_mean" + suffix, in);
        Tensor zlv = nclamp_logvar(nmlp2(gen_params.ps, "gen.trans_logvar" + suffix, in));
        Tensor z_next({cfg.Z});
        for (std::size_t j = 0; j < cfg.Z; ++j)
            z_next[j] = zmu[j] + rng.normal() * std::exp(0.5 * zlv[j]);

        Tensor eo = nmlp2(gen_params.ps, "gen.emission" + suffix, nconcat(z_next, enc.h_next));
        for (std::size_t j = 0; j < cfg.D; ++j) {
            double mu = eo[j];
            double lv = std::min(kLogVarMax, std::max(kLogVarMin, eo[cfg.D + j]));
            double draw = mu + rng.normal() * std::exp(0.5 * lv);
            if (cfg.family == EmissionFamily::lognormal) {
                out.mean[j] += std::exp(mu + 0.5 * std::exp(lv));
                out.samples.at(s, j) = std::exp(draw);
            } else {
                out.mean[j] += mu;
                out.samples.at(s, j) = draw;
            }
        }
    }

    for (double& v : out.mean.data) v /= static_cast<double>(S);
    for (double& v : out.regime_probs.data) v /= static_cast<double>(S);
    double tail = (1.0 - coverage) / 2.0;
    for (std::size_t j = 0; j < cfg.D; ++j) {
        std::vector<double> col(S);
        for (std::size_t s = 0; s < S; ++s) col[s] = out.samples.at(s, j);
        out.lower[j] = detail::quantile_linear(col, tail);
        out.upper[j] = detail::quantile_linear(col, 1.0 - tail);
    }
    return out;
}

/// One-step forecasts for every test window, denormalized to original units.
inline std::vector<ForecastResult> predict_rolling(const ModelConfig& cfg,
                                                   const GenerativeParams& gen_params,
                                                   const InferenceParams& inf_params,
                                                   const DatasetSplit& split, std::size_t S,
                                                   double coverage, std::uint64_t seed) {
    if (split.test.empty()) throw std::invalid_argument("predict_rolling: empty test set");
    std::vector<ForecastResult> out;
    out.reserve(split.test.size());
    for (std::size_t i = 0; i < split.test.size(); ++i) {
        const Window& w = split.test[i];
        ForecastResult r = predict_one_step(cfg, gen_params, inf_params, w.seq.x, w.seq.y, S,
                                            coverage, Rng::derive(seed, 0xF0CA + w.pos));
        r.mean = split.denormalize(r.mean);
        r.lower = split.denormalize(r.lower);
        r.upper = split.denormalize(r.upper);
        for (std::size_t s = 0; s < S; ++s)
            for (std::size_t j = 0; j < cfg.D; ++j)
                r.samples.at(s, j) = r.samples.at(s, j) * split.stdev[j] + split.mean[j];
        out.push_back(std::move(r));
    }
    return out;
}

/// In-sample segmentation: the realized posterior regime probabilities
/// averaged over S ancestral samples, argmaxed per step.
inline SegmentationResult segment(const ModelConfig& cfg, const GenerativeParams& gen_params,
                                  const InferenceParams& inf_params, const Tensor& y_seq,
                                  const Tensor& x_seq, std::size_t S, std::uint64_t seed) {
    if (S < 1) throw std::invalid_argument("segment: S must be >= 1");
    detail::SequenceEncoding enc =
        detail::encode_sequence(cfg, gen_params, inf_params, y_seq, x_seq);
    std::size_t T = y_seq.rows();

    SegmentationResult out;
    out.probabilities = Tensor({T, cfg.K});
    for (std::size_t s = 0; s < S; ++s) {
        Rng rng(Rng::derive(seed, s));
        LatentPath path = detail::sample_path(cfg, gen_params, inf_params, enc, rng);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t k = 0; k < cfg.K; ++k)
                out.probabilities.at(t, k) += path.q_d_probs.at(t, k);
    }
    for (double& v : out.probabilities.data) v /= static_cast<double>(S);

    out.regime_path.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < cfg.K; ++k)
            if (out.probabilities.at(t, k) > out.probabilities.at(t, best)) best = k;
        out.regime_path[t] = best;
    }
    // mean run length per regime, for reporting
    std::vector<double> total(cfg.K, 0.0);
    std::vector<std::size_t> runs(cfg.K, 0);
    std::size_t t = 0;
    while (t < T) {
        std::size_t k = out.regime_path[t], len = 1;
        while (t + len < T && out.regime_path[t + len] == k) ++len;
        total[k] += static_cast<double>(len);
        ++runs[k];
        t += len;
    }
    out.run_lengths_per_regime.assign(cfg.K, 0.0);
    for (std::size_t k = 0; k < cfg.K; ++k)
        if (runs[k]) out.run_lengths_per_regime[k] = total[k] / static_cast<double>(runs[k]);
    return out;
}

}  // namespace ds3m
