#pragma once

#include "ds3m/training.hpp"

namespace ds3m {

/// Deterministic GRU regressor with a Gaussian output head, trained by
/// maximum likelihood with the same optimizer and stopping machinery as the
/// main model. Hidden width equals the main model's H.
struct GruBaselineParams {
    ParamSet ps;

    static GruBaselineParams init(const ModelConfig& cfg, Rng& rng) {
        GruBaselineParams bp;
        init_gru_params(bp.ps, "bl.rnn", cfg.U, cfg.H, rng);
        bp.ps.add("bl.head.W", rng.init_weights({2 * cfg.D, cfg.H}, cfg.H));
        bp.ps.add("bl.head.b", Tensor({2 * cfg.D}));
        return bp;
    }
};

namespace detail {

inline Var baseline_window_nll(GradTape& tape, const BoundParams& p, const ModelConfig& cfg,
                               const SeqPair& seq) {
    Var h = tape.constant(Tensor({cfg.H}));
    Var nll = tape.constant(Tensor::scalar(0.0));
    for (std::size_t t = 0; t < seq.x.rows(); ++t) {
        Tensor xt({cfg.U}), yt({cfg.D});
        for (std::size_t j = 0; j < cfg.U; ++j) xt[j] = seq.x.at(t, j);
        for (std::size_t j = 0; j < cfg.D; ++j) yt[j] = seq.y.at(t, j);
        h = gru_cell(h, tape.constant(xt), p, "bl.rnn");
        Var out = affine(h, p.at("bl.head.W"), p.at("bl.head.b"));
        Var mu = slice(out, 0, cfg.D);
        Var lv = clamp(slice(out, cfg.D, cfg.D), kLogVarMin, kLogVarMax);
        nll = sub(nll, gaussian_log_pdf(tape.constant(yt), mu, lv));
    }
    return nll;
}

}  // namespace detail

struct BaselineTrainResult {
    GruBaselineParams params;
    TrainReport report;
};

inline double baseline_evaluate_loss(std::span<const Window> part, const ModelConfig& cfg,
                                     const GruBaselineParams& params) {
    if (part.empty()) throw std::invalid_argument("baseline_evaluate_loss: empty split");
    double acc = 0.0;
    for (const Window& w : part) {
        GradTape tape;
        BoundParams p = bind(tape, params.ps);
        acc += detail::baseline_window_nll(tape, p, cfg, w.seq).item();
    }
    return acc / static_cast<double>(part.size());
}

inline BaselineTrainResult baseline_train(const DatasetSplit& split,
                                          const ModelConfig& model_cfg,
                                          const TrainConfig& train_cfg,
                                          const GruBaselineParams* resume = nullptr) {
    train_cfg.validate();
    if (split.train.empty() || split.val.empty())
        throw std::invalid_argument("baseline_train: empty train or validation split");

    Rng init_rng(train_cfg.seed);
    GruBaselineParams params = resume ? *resume : GruBaselineParams::init(model_cfg, init_rng);
    AdamOptimizer opt(train_cfg.initial_lr);

    BaselineTrainResult result{params, {}};
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0, since_plateau = 0;

    std::vector<std::size_t> order(split.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    auto t_start = std::chrono::steady_clock::now();
    for (std::size_t epoch = 0; epoch < train_cfg.max_epochs; ++epoch) {
        std::mt19937_64 shuffler(Rng::derive(train_cfg.seed, 0x50FF + epoch));
        std::shuffle(order.begin(), order.end(), shuffler);

        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
            std::size_t stop = std::min(start + train_cfg.batch_size, order.size());
            GradTape tape;
            BoundParams p = bind(tape, params.ps);
            Var loss = tape.constant(Tensor::scalar(0.0));
            for (std::size_t i = start; i < stop; ++i)
                loss = add(loss, detail::baseline_window_nll(tape, p, model_cfg,
                                                             split.train[order[i]].seq));
            loss = scale(loss, 1.0 / static_cast<double>(stop - start));
            if (!std::isfinite(loss.item()))
                throw NumericError("baseline_train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(n_batches));
            tape.backward(loss);
            GradMap grads = collect_grads(p, params.ps);
            clip_grad_norm({&grads}, train_cfg.grad_clip);
            opt.step(params.ps, grads);
            epoch_loss += loss.item();
            ++n_batches;
        }
        epoch_loss /= static_cast<double>(n_batches);

        double val_loss = baseline_evaluate_loss(split.val, model_cfg, params);
        result.report.epochs.push_back({epoch, epoch_loss, val_loss, opt.learning_rate(), 0.0});

        if (val_loss < best_val) {
            best_val = val_loss;
            result.params = params;
            result.report.best_epoch = epoch;
            since_best = 0;
            since_plateau = 0;
        } else {
            ++since_best;
            ++since_plateau;
            if (since_plateau >= train_cfg.plateau_patience) {
                opt.set_learning_rate(opt.learning_rate() * train_cfg.plateau_factor);
                since_plateau = 0;
            }
            if (since_best >= train_cfg.early_stop_patience) break;
        }
    }
    result.report.best_val_loss = best_val;
    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

/// Deterministic forward pass predicting (mean, logvar) of y_{T+1} with
/// x_{T+1} = y_T. Model-space units.
inline std::pair<Tensor, Tensor> baseline_predict(const ModelConfig& cfg,
                                                  const GruBaselineParams& params,
                                                  const Tensor& x_seq, const Tensor& y_seq) {
    Tensor h({cfg.H});
    for (std::size_t t = 0; t < x_seq.rows(); ++t) {
        Tensor xt({cfg.U});
        for (std::size_t j = 0; j < cfg.U; ++j) xt[j] = x_seq.at(t, j);
        h = ngru_cell(params.ps, "bl.rnn", h, xt);
    }
    Tensor yT({cfg.U});
    for (std::size_t j = 0; j < cfg.U && j < cfg.D; ++j) yT[j] = y_seq.at(y_seq.rows() - 1, j);
    h = ngru_cell(params.ps, "bl.rnn", h, yT);
    Tensor out = naffine(h, params.ps.at("bl.head.W"), params.ps.at("bl.head.b"));
    Tensor mu({cfg.D}), lv({cfg.D});
    for (std::size_t j = 0; j < cfg.D; ++j) {
        mu[j] = out[j];
        lv[j] = std::min(kLogVarMax, std::max(kLogVarMin, out[cfg.D + j]));
    }
    return {mu, lv};
}

}  // namespace ds3m
