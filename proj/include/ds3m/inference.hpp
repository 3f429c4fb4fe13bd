#pragma once

#include <span>

#include "ds3m/model.hpp"

namespace ds3m {

/// Inference parameters: backward RNN g_A, per-regime posterior nets g1/g2 and
/// per-regime categorical weight matrices W. The backward hidden width equals
/// the forward one, so dim(A) = H.
struct InferenceParams {
    ParamSet ps;

    static InferenceParams init(const ModelConfig& cfg, Rng& rng) {
        cfg.validate();
        InferenceParams ip;
        init_gru_params(ip.ps, "inf.rnn", cfg.D + cfg.H, cfg.H, rng);
        for (std::size_t k = 0; k < cfg.K; ++k) {
            std::string suffix = ".k" + std::to_string(k);
            init_mlp2_params(ip.ps, "inf.post_mean" + suffix, cfg.Z + cfg.H, cfg.Z, cfg.Z, rng);
            init_mlp2_params(ip.ps, "inf.post_logvar" + suffix, cfg.Z + cfg.H, cfg.Z, cfg.Z,
                             rng);
            // mirror the generative side's staggered noise scales
            for (double& v : ip.ps.at("inf.post_logvar" + suffix + ".b2").data)
                v = regime_logvar_offset(k, cfg.K);
            ip.ps.add("inf.cat.W" + suffix, rng.init_weights({cfg.K, cfg.H}, cfg.H));
        }
        return ip;
    }
};

/// One ancestral sample of the latent variables together with the noise that
/// produced it, so the same path can be replayed differentiably.
struct LatentPath {
    Tensor z_samples;                   // T x Z
    std::vector<std::size_t> d_samples; // length T
    std::size_t d_initial = 0;          // sampled d_0 (conditioning for t = 1)
    Tensor eps_noise;                   // T x Z
    Tensor q_d_probs;                   // T x K, realized q(d_t | d_{t-1}^(s), A_t)
    double log_q = 0.0;                 // log q(z, d) of the realized path
};

/// The three per-step-summed terms of the Monte-Carlo ELBO.
struct ElboBreakdown {
    Var reconstruction;
    Var kl_z;
    Var kl_d;

    Var total(double beta) const {
        return sub(reconstruction, scale(add(kl_z, kl_d), beta));
    }
};

/// Inference network bound to one tape.
struct InfModel {
    ModelConfig cfg;
    BoundParams p;

    static InfModel bind_to(GradTape& tape, const ModelConfig& cfg,
                            const InferenceParams& params) {
        return InfModel{cfg, bind(tape, params.ps)};
    }

    GradTape& tape() const { return *p.tape; }

    /// Backward recursion A_t = g([y_t, h_t], A_{t+1}), A_{T+1} = 0.
    /// Returned in forward order; A_t depends only on y_{t:T}, h_{t:T}.
    std::vector<Var> encode_backward(const Tensor& y_seq, const std::vector<Var>& h_seq) const {
        std::size_t T = h_seq.size();
        if (y_seq.rank() != 2 || y_seq.rows() != T || y_seq.cols() != cfg.D)
            throw std::invalid_argument("encode_backward: expected T x D observations, got " +
                                        y_seq.shape_str());
        std::vector<Var> as(T);
        Var a = tape().constant(Tensor({cfg.H}));
        for (std::size_t i = 0; i < T; ++i) {
            std::size_t t = T - 1 - i;
            Tensor yt({cfg.D});
            for (std::size_t j = 0; j < cfg.D; ++j) yt[j] = y_seq.at(t, j);
            a = gru_cell(a, concat(tape().constant(yt), h_seq[t]), p, "inf.rnn");
            as[t] = a;
        }
        return as;
    }

    /// softmax(W^(d_prev) A_t)
    Var posterior_d_probs(Var a_t, std::size_t d_prev) const {
        if (d_prev >= cfg.K)
            throw std::out_of_range("posterior_d_probs: regime index out of range");
        return softmax(matvec(p.at("inf.cat.W.k" + std::to_string(d_prev)), a_t));
    }

    std::pair<Var, Var> posterior_z_params(Var z_prev, Var a_t, std::size_t k) const {
        if (k >= cfg.K)
            throw std::out_of_range("posterior_z_params: regime index out of range");
        Var in = concat(z_prev, a_t);
        std::string suffix = ".k" + std::to_string(k);
        Var mu = mlp2(in, p, "inf.post_mean" + suffix);
        Var lv = clamp(mlp2(in, p, "inf.post_logvar" + suffix), kLogVarMin, kLogVarMax);
        return {mu, lv};
    }
};

// ---------------------------------------------------------------------------
// ELBO assembly
// ---------------------------------------------------------------------------

/// Builds the per-step-marginalized ELBO on the tape shared by `gen` and
/// `inf`. When `frozen` is non-null its noise and discrete path are replayed
/// (the objective is then a smooth function of the parameters); otherwise a
/// fresh path is sampled with `rng`. The realized path is written to
/// `path_out` when given.
///
/// Per step t:
///   w_t(k)  = q(d_t = k | d_{t-1}^(s), A_t)
///   recon  += sum_k w_t(k) log p(y_t | z_t^(s), d_t = k, h_t)
///   kl_z   += sum_k w_t(k) KL[q_z(. | z_{t-1}^(s), k, A_t) || p_z(. | z_{t-1}^(s), k, h_t)]
///   kl_d   += sum_j w_{t-1}(j) KL[q_d(. | j, A_t) || Gamma_j]
/// with the t = 1 conventions: z_0 = 0, d_0 drawn from the uniform initial
/// distribution (point-mass weighting), and the d-KL scored against the
/// uniform initial distribution.
inline ElboBreakdown build_elbo(const GenModel& gen, const InfModel& inf, const Tensor& y_seq,
                                const Tensor& x_seq, const LatentPath* frozen, Rng* rng,
                                LatentPath* path_out) {
    const ModelConfig& cfg = gen.cfg;
    std::size_t T = y_seq.rows();
    if (x_seq.rows() != T)
        throw std::invalid_argument("build_elbo: misaligned sequence lengths");
    if (frozen && frozen->d_samples.size() != T)
        throw std::invalid_argument("build_elbo: frozen path length mismatch");
    GradTape& tape = gen.tape();

    std::vector<Var> hs = gen.encode_forward(x_seq);
    std::vector<Var> as = inf.encode_backward(y_seq, hs);

    LatentPath path;
    path.z_samples = Tensor({T, cfg.Z});
    path.eps_noise = Tensor({T, cfg.Z});
    path.q_d_probs = Tensor({T, cfg.K});
    path.d_samples.resize(T);
    path.d_initial = frozen ? frozen->d_initial
                            : rng->categorical(RegimeChain(Tensor({cfg.K, cfg.K}))
                                                   .initial_distribution());

    Var recon = tape.constant(Tensor::scalar(0.0));
    Var kl_z = tape.constant(Tensor::scalar(0.0));
    Var kl_d = tape.constant(Tensor::scalar(0.0));
    Var uniform_init = tape.constant(RegimeChain(Tensor({cfg.K, cfg.K})).initial_distribution());

    Var z_prev = tape.constant(Tensor({cfg.Z}));
    Var w_prev;  // q_d row of the previous step
    std::size_t d_prev = path.d_initial;
    for (std::size_t t = 0; t < T; ++t) {
        Tensor yt({cfg.D});
        for (std::size_t j = 0; j < cfg.D; ++j) yt[j] = y_seq.at(t, j);

        Var w = inf.posterior_d_probs(as[t], d_prev);
        for (std::size_t k = 0; k < cfg.K; ++k) path.q_d_probs.at(t, k) = w.value()[k];

        // d-KL, weighted by the previous step's q_d row (point mass at t = 1)
        if (t == 0) {
            kl_d = add(kl_d, categorical_kl(w, uniform_init));
        } else {
            Var term = tape.constant(Tensor::scalar(0.0));
            for (std::size_t j = 0; j < cfg.K; ++j) {
                Var qj = inf.posterior_d_probs(as[t], j);
                term = add(term, mul(pick(w_prev, j), categorical_kl(qj, gen.gamma_row(j))));
            }
            kl_d = add(kl_d, term);
        }

        // posterior parameters for every candidate regime
        std::vector<std::pair<Var, Var>> q_params;
        q_params.reserve(cfg.K);
        for (std::size_t k = 0; k < cfg.K; ++k)
            q_params.push_back(inf.posterior_z_params(z_prev, as[t], k));

        std::size_t d = frozen ? frozen->d_samples[t] : rng->categorical(w.value());
        path.d_samples[t] = d;

        Tensor eps({cfg.Z});
        if (frozen)
            for (std::size_t j = 0; j < cfg.Z; ++j) eps[j] = frozen->eps_noise.at(t, j);
        else
            for (std::size_t j = 0; j < cfg.Z; ++j) eps[j] = rng->normal();
        for (std::size_t j = 0; j < cfg.Z; ++j) path.eps_noise.at(t, j) = eps[j];

        // z_t = mu + eps .* exp(logvar / 2), reparameterized under the sampled d
        auto [qmu, qlv] = q_params[d];
        Var z_t = add(qmu, mul(tape.constant(eps), vexp(scale(qlv, 0.5))));
        for (std::size_t j = 0; j < cfg.Z; ++j) path.z_samples.at(t, j) = z_t.value()[j];

        path.log_q += std::log(w.value()[d]);
        for (std::size_t j = 0; j < cfg.Z; ++j)
            path.log_q += -0.5 * (kLog2Pi + qlv.value()[j] + eps[j] * eps[j]);

        for (std::size_t k = 0; k < cfg.K; ++k) {
            Var wk = pick(w, k);
            recon = add(recon, mul(wk, gen.emission_log_pdf(yt, z_t, hs[t], k)));
            auto [pmu, plv] = gen.prior_z_params(z_prev, hs[t], k);
            kl_z = add(kl_z,
                       mul(wk, gaussian_kl(q_params[k].first, q_params[k].second, pmu, plv)));
        }

        z_prev = z_t;
        w_prev = w;
        d_prev = d;
    }

    if (path_out) *path_out = std::move(path);
    return ElboBreakdown{recon, kl_z, kl_d};
}

/// Draws one posterior path by ancestral sampling. Numeric output only; feed
/// it back through elbo() to replay it differentiably.
inline LatentPath ancestral_sample(const Tensor& y_seq, const Tensor& x_seq,
                                   const ModelConfig& cfg, const GenerativeParams& gen_params,
                                   const InferenceParams& inf_params, std::uint64_t seed) {
    GradTape tape;
    GenModel gen = GenModel::bind_to(tape, cfg, gen_params);
    InfModel inf = InfModel::bind_to(tape, cfg, inf_params);
    Rng rng(seed);
    LatentPath path;
    build_elbo(gen, inf, y_seq, x_seq, nullptr, &rng, &path);
    return path;
}

/// Replays a recorded path through the ELBO on a fresh tape and returns the
/// breakdown plus the bound models (callers needing gradients keep the tape).
inline ElboBreakdown elbo(GradTape& tape, const Tensor& y_seq, const Tensor& x_seq,
                          const LatentPath& path, const ModelConfig& cfg,
                          const GenerativeParams& gen_params,
                          const InferenceParams& inf_params) {
    GenModel gen = GenModel::bind_to(tape, cfg, gen_params);
    InfModel inf = InfModel::bind_to(tape, cfg, inf_params);
    return build_elbo(gen, inf, y_seq, x_seq, &path, nullptr, nullptr);
}

/// One (x, y) training window.
struct SeqPair {
    Tensor x;  // T x U
    Tensor y;  // T x D
};

/// Mean over sequences and samples of -elbo.total(beta), built on `tape` with
/// the given bound models. Seeds are derived per (sequence, sample) so the
/// value is independent of batch order.
inline Var minibatch_loss(const GenModel& gen, const InfModel& inf,
                          std::span<const SeqPair> batch,
                          std::span<const std::size_t> seq_ids, double beta, std::size_t S,
                          std::uint64_t seed) {
    if (batch.empty()) throw std::invalid_argument("minibatch_loss: empty batch");
    if (S < 1) throw std::invalid_argument("minibatch_loss: S must be >= 1");
    GradTape& tape = gen.tape();
    Var acc = tape.constant(Tensor::scalar(0.0));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (std::size_t s = 0; s < S; ++s) {
            Rng rng(Rng::derive(seed, seq_ids[i] * 0x10001ULL + s));
            ElboBreakdown b =
                build_elbo(gen, inf, batch[i].y, batch[i].x, nullptr, &rng, nullptr);
            acc = add(acc, b.total(beta));
        }
    }
    return scale(acc, -1.0 / static_cast<double>(batch.size() * S));
}

/// Spec-level convenience: scalar minibatch loss without keeping the tape.
inline double elbo_minibatch(std::span<const SeqPair> batch, const ModelConfig& cfg,
                             const GenerativeParams& gen_params,
                             const InferenceParams& inf_params, double beta, std::size_t S,
                             std::uint64_t seed) {
    GradTape tape;
    GenModel gen = GenModel::bind_to(tape, cfg, gen_params);
    InfModel inf = InfModel::bind_to(tape, cfg, inf_params);
    std::vector<std::size_t> ids(batch.size());
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
    return minibatch_loss(gen, inf, batch, ids, beta, S, seed).item();
}

}  // namespace ds3m
