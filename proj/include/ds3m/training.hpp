#pragma once

#include <chrono>

#include "ds3m/inference.hpp"

namespace ds3m {

/// Training hyperparameters. Defaults follow the published experiment setup.
struct TrainConfig {
    std::size_t batch_size = 64;
    double initial_lr = 0.001;
    double plateau_factor = 0.1;
    std::size_t plateau_patience = 10;
    std::size_t early_stop_patience = 20;
    std::size_t max_epochs = 100;
    double kl_anneal_start = 0.01;
    double kl_anneal_end = 1.0;
    std::size_t anneal_epochs = 50;
    std::size_t mc_samples = 1;  // ELBO samples per sequence during training
    double grad_clip = 10.0;
    std::uint64_t seed = 0;

    void validate() const {
        if (initial_lr <= 0.0)
            throw std::invalid_argument("TrainConfig: learning rate must be positive");
        if (plateau_factor <= 0.0 || plateau_factor >= 1.0)
            throw std::invalid_argument("TrainConfig: plateau_factor must be in (0,1)");
        if (plateau_patience < 1 || early_stop_patience < 1)
            throw std::invalid_argument("TrainConfig: patiences must be >= 1");
        if (kl_anneal_start < 0.0 || kl_anneal_start > kl_anneal_end)
            throw std::invalid_argument("TrainConfig: need 0 <= anneal_start <= anneal_end");
        if (batch_size < 1 || mc_samples < 1)
            throw std::invalid_argument("TrainConfig: batch_size and mc_samples must be >= 1");
    }
};

/// Linear KL annealing: anneal_start at epoch 0 rising to anneal_end at
/// anneal_epochs, constant afterwards.
inline double kl_beta(std::size_t epoch, const TrainConfig& cfg) {
    if (cfg.anneal_epochs == 0 || epoch >= cfg.anneal_epochs) return cfg.kl_anneal_end;
    double frac = static_cast<double>(epoch) / static_cast<double>(cfg.anneal_epochs);
    return cfg.kl_anneal_start + (cfg.kl_anneal_end - cfg.kl_anneal_start) * frac;
}

// ---------------------------------------------------------------------------
// Windows, splits, normalization
// ---------------------------------------------------------------------------

/// One training window plus its bookkeeping: position in the source series and
/// the one-step-ahead target in original units (absent for the final window).
struct Window {
    SeqPair seq;       // normalized x (T x U) and y (T x D)
    std::size_t pos;   // start index in the source series
    bool has_target = false;
    Tensor target_y;   // original units, shape (D)
};

/// Train/validation/test windows plus the normalization fitted on training
/// windows only. Normalization is per-dimension (y - mean) / std.
struct DatasetSplit {
    std::vector<Window> train, val, test;
    Tensor mean;  // (D)
    Tensor stdev; // (D), floored away from zero
    std::size_t window_len = 0;

    Tensor normalize(const Tensor& y_row) const {
        Tensor out = y_row;
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = (out[j] - mean[j]) / stdev[j];
        return out;
    }
    Tensor denormalize(const Tensor& y_row) const {
        Tensor out = y_row;
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = out[j] * stdev[j] + mean[j];
        return out;
    }
};

/// Slides a length-`window_len` window over the series with stride 1 and the
/// input rule x_t = y_{t-1}. The window at position 0 would need a zero pad
/// for x_1 and is dropped; if the remaining count still exceeds
/// n_train + n_val + n_test, the earliest extras are dropped as well.
inline DatasetSplit make_windows(const Tensor& series, std::size_t window_len,
                                 std::size_t n_train, std::size_t n_val, std::size_t n_test) {
    if (series.rank() != 2) throw std::invalid_argument("make_windows: series must be T x D");
    std::size_t total = series.rows();
    std::size_t D = series.cols();
    if (window_len < 2 || window_len > total)
        throw std::invalid_argument("make_windows: series shorter than window length");

    std::size_t raw = total - window_len + 1;  // positions 0 .. raw-1
    std::size_t wanted = n_train + n_val + n_test;
    if (wanted == 0 || wanted > raw)
        throw std::invalid_argument("make_windows: split sizes exceed available windows (" +
                                    std::to_string(raw) + ")");
    // Trim extras from the front; the position-0 window (whose x_1 lacks a
    // lag and is zero padded) goes first and survives only if every raw
    // window is needed.
    std::size_t first_pos = raw - wanted;

    // normalization statistics over y values covered by training windows
    std::size_t train_lo = first_pos, train_hi = first_pos + n_train - 1 + window_len;
    Tensor mean({D}), stdev({D});
    std::size_t n_stat = train_hi - train_lo;
    for (std::size_t t = train_lo; t < train_hi; ++t)
        for (std::size_t j = 0; j < D; ++j) mean[j] += series.at(t, j);
    for (double& v : mean.data) v /= static_cast<double>(n_stat);
    for (std::size_t t = train_lo; t < train_hi; ++t)
        for (std::size_t j = 0; j < D; ++j) {
            double d = series.at(t, j) - mean[j];
            stdev[j] += d * d;
        }
    for (double& v : stdev.data) v = std::max(std::sqrt(v / static_cast<double>(n_stat)), 1e-8);

    DatasetSplit split;
    split.mean = mean;
    split.stdev = stdev;
    split.window_len = window_len;

    auto build = [&](std::size_t pos) {
        Window w;
        w.pos = pos;
        w.seq.x = Tensor({window_len, D});
        w.seq.y = Tensor({window_len, D});
        for (std::size_t t = 0; t < window_len; ++t)
            for (std::size_t j = 0; j < D; ++j) {
                w.seq.y.at(t, j) = (series.at(pos + t, j) - mean[j]) / stdev[j];
                w.seq.x.at(t, j) =
                    (pos + t == 0) ? 0.0 : (series.at(pos + t - 1, j) - mean[j]) / stdev[j];
            }
        if (pos + window_len < total) {
            w.has_target = true;
            w.target_y = Tensor({D});
            for (std::size_t j = 0; j < D; ++j) w.target_y[j] = series.at(pos + window_len, j);
        }
        return w;
    };

    for (std::size_t i = 0; i < n_train; ++i) split.train.push_back(build(first_pos + i));
    for (std::size_t i = 0; i < n_val; ++i) split.val.push_back(build(first_pos + n_train + i));
    for (std::size_t i = 0; i < n_test; ++i)
        split.test.push_back(build(first_pos + n_train + n_val + i));
    return split;
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

/// Adam with bias-corrected first/second moments (0.9 / 0.999, eps 1e-8).
class AdamOptimizer {
  public:
    explicit AdamOptimizer(double lr) : lr_(lr) {}

    double learning_rate() const { return lr_; }
    void set_learning_rate(double lr) { lr_ = lr; }

    void step(ParamSet& params, const GradMap& grads) {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (auto& [name, entry] : params.entries) {
            if (!entry.trainable) continue;
            const Tensor& g = grads.at(name);
            auto& m = m_[name];
            auto& v = v_[name];
            if (m.size() != g.size()) {
                m.assign(g.size(), 0.0);
                v.assign(g.size(), 0.0);
            }
            for (std::size_t i = 0; i < g.size(); ++i) {
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
                double mhat = m[i] / bc1;
                double vhat = v[i] / bc2;
                entry.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

  private:
    double lr_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    std::size_t t_ = 0;
    std::map<std::string, std::vector<double>> m_, v_;
};

/// Scales gradients in place so their global L2 norm does not exceed max_norm.
inline void clip_grad_norm(std::vector<GradMap*> grads, double max_norm) {
    double sq = 0.0;
    for (GradMap* gm : grads)
        for (const auto& [name, g] : *gm)
            for (double v : g.data) sq += v * v;
    double norm = std::sqrt(sq);
    if (norm <= max_norm || norm == 0.0) return;
    double s = max_norm / norm;
    for (GradMap* gm : grads)
        for (auto& [name, g] : *gm)
            for (double& v : g.data) v *= s;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochRecord {
    std::size_t epoch;
    double train_loss;
    double val_loss;
    double lr;
    double beta;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    double wall_seconds = 0.0;

    std::string serialize() const {
        std::ostringstream os;
        os.precision(17);
        os << "epoch train_loss val_loss lr beta\n";
        for (const EpochRecord& r : epochs)
            os << r.epoch << " " << r.train_loss << " " << r.val_loss << " " << r.lr << " "
               << r.beta << "\n";
        return os.str();
    }
};

struct TrainResult {
    GenerativeParams gen;
    InferenceParams inf;
    TrainReport report;
};

/// Mean negative ELBO over a split with a fixed seed, so values are
/// comparable across epochs.
inline double evaluate_loss(std::span<const Window> part, const ModelConfig& cfg,
                            const GenerativeParams& gen_params,
                            const InferenceParams& inf_params, double beta,
                            std::uint64_t seed) {
    if (part.empty()) throw std::invalid_argument("evaluate_loss: empty split");
    double acc = 0.0;
    for (std::size_t i = 0; i < part.size(); ++i) {
        GradTape tape;
        GenModel gen = GenModel::bind_to(tape, cfg, gen_params);
        InfModel inf = InfModel::bind_to(tape, cfg, inf_params);
        Rng rng(Rng::derive(seed, i));
        ElboBreakdown b = build_elbo(gen, inf, part[i].seq.y, part[i].seq.x, nullptr, &rng,
                                     nullptr);
        acc -= b.total(beta).item();
    }
    return acc / static_cast<double>(part.size());
}

/// Algorithm-1 outer loop: shuffled minibatches, Adam, KL annealing, plateau
/// learning-rate schedule, early stopping. Returns the parameters from the
/// best validation epoch.
inline TrainResult train(const DatasetSplit& split, const ModelConfig& model_cfg,
                         const TrainConfig& train_cfg,
                         const GenerativeParams* resume_gen = nullptr,
                         const InferenceParams* resume_inf = nullptr) {
    train_cfg.validate();
    model_cfg.validate();
    if (split.train.empty() || split.val.empty())
        throw std::invalid_argument("train: empty train or validation split");
    if ((resume_gen == nullptr) != (resume_inf == nullptr))
        throw std::invalid_argument("train: resume needs both parameter sets");

    auto t_start = std::chrono::steady_clock::now();
    Rng init_rng(train_cfg.seed);
    GenerativeParams gen_params =
        resume_gen ? *resume_gen : GenerativeParams::init(model_cfg, init_rng);
    InferenceParams inf_params =
        resume_inf ? *resume_inf : InferenceParams::init(model_cfg, init_rng);
    AdamOptimizer opt(train_cfg.initial_lr);

    const std::uint64_t eval_seed = Rng::derive(train_cfg.seed, 0xE7A1);
    TrainResult result{gen_params, inf_params, {}};
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0, since_plateau = 0;

    std::vector<std::size_t> order(split.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < train_cfg.max_epochs; ++epoch) {
        double beta = kl_beta(epoch, train_cfg);
        std::mt19937_64 shuffler(Rng::derive(train_cfg.seed, 0x50FF + epoch));
        std::shuffle(order.begin(), order.end(), shuffler);

        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
            std::size_t stop = std::min(start + train_cfg.batch_size, order.size());
            std::vector<SeqPair> batch;
            std::vector<std::size_t> ids;
            for (std::size_t i = start; i < stop; ++i) {
                batch.push_back(split.train[order[i]].seq);
                ids.push_back(order[i]);
            }

            GradTape tape;
            GenModel gen = GenModel::bind_to(tape, model_cfg, gen_params);
            InfModel inf = InfModel::bind_to(tape, model_cfg, inf_params);
            Var loss = minibatch_loss(gen, inf, batch, ids, beta, train_cfg.mc_samples,
                                      Rng::derive(train_cfg.seed, 0xBA7C + epoch));
            if (!std::isfinite(loss.item()))
                throw NumericError("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " +
                                         std::to_string(n_batches));
            tape.backward(loss);
            GradMap ggen = collect_grads(gen.p, gen_params.ps);
            GradMap ginf = collect_grads(inf.p, inf_params.ps);
            clip_grad_norm({&ggen, &ginf}, train_cfg.grad_clip);
            opt.step(gen_params.ps, ggen);
            opt.step(inf_params.ps, ginf);

            epoch_loss += loss.item();
            ++n_batches;
        }
        epoch_loss /= static_cast<double>(n_batches);

        double val_loss =
            evaluate_loss(split.val, model_cfg, gen_params, inf_params, 1.0, eval_seed);
        result.report.epochs.push_back(
            {epoch, epoch_loss, val_loss, opt.learning_rate(), beta});

        if (val_loss < best_val) {
            best_val = val_loss;
            result.gen = gen_params;
            result.inf = inf_params;
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

}  // namespace ds3m
