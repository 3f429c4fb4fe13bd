// Command-line harness: simulate | train | predict | segment | evaluate | report.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric divergence.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "ds3m/ds3m.hpp"

namespace fs = std::filesystem;
using namespace ds3m;

static constexpr const char* kVersion = "ds3m 0.1.0";

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

static void require_fresh(const std::string& path, bool force) {
    if (!force && fs::exists(path))
        throw ConfigError("output path already exists (use --force): " + path);
}

static double normal_quantile(double p) {
    // bisection on the standard normal CDF; plenty for interval half-widths
    double lo = -12.0, hi = 12.0;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

struct LoadedData {
    LabeledSeries series;
    bool has_labels = false;
};

static LoadedData load_data(const ExperimentConfig& cfg, const std::string& override_path,
                            std::uint64_t seed) {
    std::string src = override_path.empty() ? cfg.source : override_path;
    if (src == "toy") {
        ToyConfig tc;
        if (cfg.sim_length) tc.length = cfg.sim_length;
        tc.seed = seed;
        return {simulate_toy(tc), true};
    }
    if (src == "lorenz") {
        LorenzConfig lc;
        if (cfg.sim_length) lc.length = cfg.sim_length;
        lc.seed = seed;
        return {simulate_lorenz(lc), true};
    }
    try {
        DataTable table = read_table(src);
        if (!cfg.target_columns.empty()) {
            std::vector<std::size_t> idx;
            for (const auto& c : cfg.target_columns) idx.push_back(table.column_index(c));
            std::size_t T = table.values.rows();
            LoadedData out;
            out.series.y = Tensor({T, idx.size()});
            for (std::size_t t = 0; t < T; ++t)
                for (std::size_t j = 0; j < idx.size(); ++j)
                    out.series.y.at(t, j) = table.values.at(t, idx[j]);
            out.series.d_true.assign(T, 0);
            out.series.z_true = Tensor({T, 1});
            if (table.has_column("d_true")) {
                std::size_t dc = table.column_index("d_true");
                for (std::size_t t = 0; t < T; ++t)
                    out.series.d_true[t] =
                        static_cast<std::size_t>(table.values.at(t, dc));
                out.has_labels = true;
            }
            return out;
        }
        auto [series, has_labels] = read_labeled_series(table);
        return {std::move(series), has_labels};
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
}

static DatasetSplit windows_for(const ExperimentConfig& cfg, const LabeledSeries& series) {
    try {
        return make_windows(series.y, cfg.window, cfg.n_train, cfg.n_val, cfg.n_test);
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

static int cmd_simulate(const std::string& name, std::uint64_t seed, std::size_t length,
                        const std::string& out, bool force) {
    require_fresh(out, force);
    LabeledSeries series;
    if (name == "toy") {
        ToyConfig tc;
        if (length) tc.length = length;
        tc.seed = seed;
        series = simulate_toy(tc);
    } else if (name == "lorenz") {
        LorenzConfig lc;
        if (length) lc.length = length;
        lc.seed = seed;
        series = simulate_lorenz(lc);
    } else {
        throw ConfigError("unknown simulator '" + name + "' (expected toy or lorenz)");
    }
    write_labeled_series(series, out);
    std::cout << "wrote " << series.y.rows() << " rows to " << out << "\n";
    return 0;
}

static int cmd_train(const std::string& config_path, std::int64_t seed_override,
                     const std::string& out_dir, const std::string& resume_path,
                     const std::string& data_override, bool force) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    if (seed_override >= 0) {
        cfg.seed = static_cast<std::uint64_t>(seed_override);
        cfg.train.seed = cfg.seed;
    }
    cfg.validate();

    std::string ckpt_path = out_dir + "/model.ckpt";
    std::string report_path = out_dir + "/train_report.txt";
    std::string manifest_path = out_dir + "/manifest.txt";
    fs::create_directories(out_dir);
    require_fresh(ckpt_path, force);
    require_fresh(report_path, force);
    require_fresh(manifest_path, force);

    LoadedData data = load_data(cfg, data_override, cfg.seed);
    cfg.model.D = data.series.y.cols();
    cfg.model.U = cfg.model.D;
    DatasetSplit split = windows_for(cfg, data.series);

    TrainReport report;
    Checkpoint ckpt;
    if (cfg.kind == "baseline-gru") {
        GruBaselineParams resume;
        bool resuming = !resume_path.empty();
        if (resuming) {
            Checkpoint prev = load_checkpoint(resume_path);
            cfg.model = prev.config;
            resume = prev.to_baseline();
        }
        BaselineTrainResult r =
            baseline_train(split, cfg.model, cfg.train, resuming ? &resume : nullptr);
        report = r.report;
        ckpt = Checkpoint::from_baseline(cfg.model, r.params);
    } else {
        GenerativeParams rgen;
        InferenceParams rinf;
        bool resuming = !resume_path.empty();
        if (resuming) {
            Checkpoint prev = load_checkpoint(resume_path);
            cfg.model = prev.config;
            std::tie(rgen, rinf) = prev.to_model();
        }
        TrainResult r = train(split, cfg.model, cfg.train, resuming ? &rgen : nullptr,
                              resuming ? &rinf : nullptr);
        report = r.report;
        ckpt = Checkpoint::from_model(cfg.model, r.gen, r.inf);
    }

    save_checkpoint(ckpt, ckpt_path);
    write_text(report.serialize(), report_path);

    std::ostringstream manifest;
    manifest.precision(17);
    manifest << "ds3m-run-v1\n"
             << "version = " << kVersion << "\n"
             << "command = train\n"
             << "checkpoint = " << ckpt_path << "\n"
             << "report = " << report_path << "\n"
             << "best_epoch = " << report.best_epoch << "\n"
             << "best_val_loss = " << report.best_val_loss << "\n"
             << "\n[config]\n"
             << cfg.serialize();
    write_text(manifest.str(), manifest_path);

    // timing goes to stderr so output files stay deterministic
    std::cerr << "trained in " << report.wall_seconds << "s, best epoch "
              << report.best_epoch << ", val loss " << report.best_val_loss << "\n";
    std::cout << "wrote " << ckpt_path << ", " << report_path << ", " << manifest_path
              << "\n";
    return 0;
}

static int cmd_predict(const std::string& config_path, const std::string& ckpt_path,
                       const std::string& data_override, std::int64_t seed_override,
                       std::size_t samples_override, double coverage_override,
                       const std::string& out, bool force) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (samples_override) cfg.predict_samples = samples_override;
    if (coverage_override > 0.0) cfg.coverage = coverage_override;
    cfg.validate();
    require_fresh(out, force);

    Checkpoint ckpt = load_checkpoint(ckpt_path);
    LoadedData data = load_data(cfg, data_override, cfg.seed);
    if (data.series.y.cols() != ckpt.config.D)
        throw DataError("data has " + std::to_string(data.series.y.cols()) +
                        " target columns but checkpoint expects " +
                        std::to_string(ckpt.config.D));
    DatasetSplit split = windows_for(cfg, data.series);

    std::vector<ForecastResult> forecasts;
    if (ckpt.kind == "baseline-gru") {
        GruBaselineParams bl = ckpt.to_baseline();
        double zq = normal_quantile(0.5 + cfg.coverage / 2.0);
        for (const Window& w : split.test) {
            auto [mu, lv] = baseline_predict(ckpt.config, bl, w.seq.x, w.seq.y);
            ForecastResult f;
            f.mean = split.denormalize(mu);
            f.lower = Tensor({ckpt.config.D});
            f.upper = Tensor({ckpt.config.D});
            for (std::size_t j = 0; j < ckpt.config.D; ++j) {
                double sd = std::exp(0.5 * lv[j]) * split.stdev[j];
                f.lower[j] = f.mean[j] - zq * sd;
                f.upper[j] = f.mean[j] + zq * sd;
            }
            f.regime_probs = Tensor({1});
            f.regime_probs[0] = 1.0;
            f.samples = Tensor({1, ckpt.config.D});
            for (std::size_t j = 0; j < ckpt.config.D; ++j) f.samples.at(0, j) = f.mean[j];
            forecasts.push_back(std::move(f));
        }
    } else {
        auto [gen, inf] = ckpt.to_model();
        forecasts = predict_rolling(ckpt.config, gen, inf, split, cfg.predict_samples,
                                    cfg.coverage, cfg.seed);
    }

    std::vector<const Window*> windows;
    for (const Window& w : split.test) windows.push_back(&w);
    write_forecasts(forecasts, windows, out);
    std::cout << "wrote " << forecasts.size() << " forecasts to " << out << "\n";
    return 0;
}

static int cmd_segment(const std::string& config_path, const std::string& ckpt_path,
                       const std::string& data_override, std::int64_t seed_override,
                       std::size_t samples_override, const std::string& out, bool force) {
    ExperimentConfig cfg = ExperimentConfig::parse_file(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
    if (samples_override) cfg.predict_samples = samples_override;
    cfg.validate();
    require_fresh(out, force);

    Checkpoint ckpt = load_checkpoint(ckpt_path);
    if (ckpt.kind != "ds3m")
        throw ConfigError("segment needs a ds3m checkpoint, got kind '" + ckpt.kind + "'");
    auto [gen, inf] = ckpt.to_model();

    LoadedData data = load_data(cfg, data_override, cfg.seed);
    if (data.series.y.cols() != ckpt.config.D)
        throw DataError("data and checkpoint dimensions disagree");
    DatasetSplit split = windows_for(cfg, data.series);

    // segment the whole series as one sequence, in normalized units
    std::size_t T = data.series.y.rows(), D = ckpt.config.D;
    Tensor y_norm({T, D}), x_norm({T, D});
    for (std::size_t t = 0; t < T; ++t) {
        Tensor row({D});
        for (std::size_t j = 0; j < D; ++j) row[j] = data.series.y.at(t, j);
        Tensor n = split.normalize(row);
        for (std::size_t j = 0; j < D; ++j) {
            y_norm.at(t, j) = n[j];
            if (t + 1 < T) x_norm.at(t + 1, j) = n[j];
        }
    }
    SegmentationResult seg =
        segment(ckpt.config, gen, inf, y_norm, x_norm, cfg.predict_samples, cfg.seed);
    write_segmentation(seg, out);
    std::cout << "wrote segmentation of " << T << " steps to " << out << "\n";
    return 0;
}

static int cmd_evaluate(const std::string& input_path, const std::string& truth_path,
                        const std::string& out, const std::string& manifest_path,
                        bool force) {
    require_fresh(out, force);
    DataTable in, tt;
    try {
        in = read_table(input_path);
        tt = read_table(truth_path);
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
    auto [truth, has_labels] = read_labeled_series(tt);
    std::size_t T = truth.y.rows(), D = truth.y.cols();

    std::size_t K = 0;
    while (in.has_column("p" + std::to_string(K))) ++K;

    MetricsRecord rec;
    std::vector<std::size_t> pred_lab, true_lab;
    if (in.has_column("mean0")) {
        if (!in.has_column("mean" + std::to_string(D - 1)) ||
            in.has_column("mean" + std::to_string(D)))
            throw DataError("forecast and truth dimensions disagree");
        std::size_t ic = in.column_index("index");
        std::size_t rc = in.column_index("regime");
        std::vector<double> yt, yp;
        for (std::size_t r = 0; r < in.values.rows(); ++r) {
            auto idx = static_cast<std::size_t>(in.values.at(r, ic));
            bool scored = std::isfinite(in.values.at(r, in.column_index("true0")));
            if (idx >= T) {
                if (scored) throw DataError("forecast index " + std::to_string(idx) +
                                            " beyond truth length " + std::to_string(T));
                continue;
            }
            for (std::size_t j = 0; j < D; ++j) {
                yt.push_back(truth.y.at(idx, j));
                yp.push_back(in.values.at(r, in.column_index("mean" + std::to_string(j))));
            }
            if (has_labels) {
                pred_lab.push_back(static_cast<std::size_t>(in.values.at(r, rc)));
                true_lab.push_back(truth.d_true[idx]);
            }
        }
        if (yt.empty()) throw DataError("no forecast rows overlap the truth series");
        Tensor a({yt.size()}), b({yp.size()});
        a.data = yt;
        b.data = yp;
        rec.rmse = rmse(a, b);
        rec.mape = mape(a, b);
    } else if (in.has_column("regime")) {
        std::size_t ic = in.column_index("index");
        std::size_t rc = in.column_index("regime");
        for (std::size_t r = 0; r < in.values.rows(); ++r) {
            auto idx = static_cast<std::size_t>(in.values.at(r, ic));
            if (idx >= T)
                throw DataError("segmentation index " + std::to_string(idx) +
                                " beyond truth length " + std::to_string(T));
            if (has_labels) {
                pred_lab.push_back(static_cast<std::size_t>(in.values.at(r, rc)));
                true_lab.push_back(truth.d_true[idx]);
            }
        }
    } else {
        throw DataError("unrecognized input schema: " + input_path);
    }

    if (has_labels && !pred_lab.empty()) {
        std::size_t Kt = K;
        for (std::size_t v : true_lab) Kt = std::max(Kt, v + 1);
        for (std::size_t v : pred_lab) Kt = std::max(Kt, v + 1);
        auto [perm, aligned] = align_labels(pred_lab, true_lab, Kt);
        rec.accuracy = accuracy(aligned, true_lab);
        rec.f1 = f1_score(aligned, true_lab, Kt);
        rec.duration_per_regime = mean_durations(aligned, Kt);
        rec.label_permutation = perm;
    }

    write_text(rec.serialize(), out);
    if (!manifest_path.empty()) {
        std::ofstream os(manifest_path, std::ios::app);
        if (!os) throw DataError("cannot append to manifest: " + manifest_path);
        os << "\n[metrics]\ninput = " << input_path << "\ntruth = " << truth_path
           << "\nrecord = " << out << "\n"
           << rec.serialize();
    }
    std::cout << rec.serialize();
    return 0;
}

static int cmd_report(const std::string& manifest_path) {
    std::ifstream is(manifest_path);
    if (!is) throw DataError("cannot open manifest: " + manifest_path);
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
        if (first && line != "ds3m-run-v1")
            throw DataError("not a run manifest: " + manifest_path);
        first = false;
        std::cout << line << "\n";
    }
    if (first) throw DataError("empty manifest: " + manifest_path);
    return 0;
}

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"Deep switching state space model toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    // simulate
    std::string sim_name, sim_out;
    std::uint64_t sim_seed = 0;
    std::size_t sim_length = 0;
    bool sim_force = false;
    auto* sim = app.add_subcommand("simulate", "Generate a benchmark dataset");
    sim->add_option("name", sim_name, "Simulator: toy or lorenz")->required();
    sim->add_option("--seed", sim_seed, "Random seed");
    sim->add_option("--length", sim_length, "Series length (0 = simulator default)");
    sim->add_option("--out", sim_out, "Output file")->required();
    sim->add_flag("--force", sim_force, "Overwrite existing outputs");

    // train
    std::string tr_config, tr_out = "run", tr_resume, tr_data;
    std::int64_t tr_seed = -1;
    bool tr_force = false;
    auto* tr = app.add_subcommand("train", "Train a model from a config");
    tr->add_option("--config", tr_config, "Experiment config file")->required();
    tr->add_option("--seed", tr_seed, "Seed override");
    tr->add_option("--out", tr_out, "Output directory");
    tr->add_option("--resume", tr_resume, "Checkpoint to continue from");
    tr->add_option("--data", tr_data, "Data source override (file path or simulator name)");
    tr->add_flag("--force", tr_force, "Overwrite existing outputs");

    // predict
    std::string pr_config, pr_ckpt, pr_data, pr_out;
    std::int64_t pr_seed = -1;
    std::size_t pr_samples = 0;
    double pr_coverage = 0.0;
    bool pr_force = false;
    auto* pr = app.add_subcommand("predict", "One-step forecasts over the test split");
    pr->add_option("--config", pr_config, "Experiment config file")->required();
    pr->add_option("--checkpoint", pr_ckpt, "Trained checkpoint")->required();
    pr->add_option("--data", pr_data, "Data source override");
    pr->add_option("--seed", pr_seed, "Seed override");
    pr->add_option("--samples", pr_samples, "Monte Carlo sample count override");
    pr->add_option("--coverage", pr_coverage, "Interval coverage override");
    pr->add_option("--out", pr_out, "Output file")->required();
    pr->add_flag("--force", pr_force, "Overwrite existing outputs");

    // segment
    std::string sg_config, sg_ckpt, sg_data, sg_out;
    std::int64_t sg_seed = -1;
    std::size_t sg_samples = 0;
    bool sg_force = false;
    auto* sg = app.add_subcommand("segment", "Regime segmentation of the whole series");
    sg->add_option("--config", sg_config, "Experiment config file")->required();
    sg->add_option("--checkpoint", sg_ckpt, "Trained checkpoint")->required();
    sg->add_option("--data", sg_data, "Data source override");
    sg->add_option("--seed", sg_seed, "Seed override");
    sg->add_option("--samples", sg_samples, "Monte Carlo sample count override");
    sg->add_option("--out", sg_out, "Output file")->required();
    sg->add_flag("--force", sg_force, "Overwrite existing outputs");

    // evaluate
    std::string ev_input, ev_truth, ev_out, ev_manifest;
    bool ev_force = false;
    auto* ev = app.add_subcommand("evaluate", "Score forecasts or segmentations");
    ev->add_option("--input", ev_input, "Forecast or segmentation file")->required();
    ev->add_option("--truth", ev_truth, "Labeled series file")->required();
    ev->add_option("--out", ev_out, "Metrics output file")->required();
    ev->add_option("--manifest", ev_manifest, "Run manifest to append metrics to");
    ev->add_flag("--force", ev_force, "Overwrite existing outputs");

    // report
    std::string rp_manifest;
    auto* rp = app.add_subcommand("report", "Print a run manifest");
    rp->add_option("--manifest", rp_manifest, "Manifest file")->required();

    try {
        app.parse(argc, argv);
        if (sim->parsed())
            return cmd_simulate(sim_name, sim_seed, sim_length, sim_out, sim_force);
        if (tr->parsed())
            return cmd_train(tr_config, tr_seed, tr_out, tr_resume, tr_data, tr_force);
        if (pr->parsed())
            return cmd_predict(pr_config, pr_ckpt, pr_data, pr_seed, pr_samples,
                               pr_coverage, pr_out, pr_force);
        if (sg->parsed())
            return cmd_segment(sg_config, sg_ckpt, sg_data, sg_seed, sg_samples, sg_out,
                               sg_force);
        if (ev->parsed())
            return cmd_evaluate(ev_input, ev_truth, ev_out, ev_manifest, ev_force);
        if (rp->parsed()) return cmd_report(rp_manifest);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric divergence: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
