#include <catch2/catch_amalgamated.hpp>

#include "ds3m/model.hpp"
#include "ds3m/training.hpp"

using namespace ds3m;

namespace {
ModelConfig tiny() {
    ModelConfig cfg;
    cfg.K = 2;
    cfg.D = 1;
    cfg.U = 1;
    cfg.H = 3;
    cfg.Z = 2;
    return cfg;
}
}  // namespace

TEST_CASE("regime chain rows are stochastic for any logits") {
    Rng rng(5);
    for (int rep = 0; rep < 100; ++rep) {
        std::size_t K = 2 + static_cast<std::size_t>(rng.uniform() * 3);
        Tensor logits({K, K});
        for (double& v : logits.data) v = 20.0 * rng.normal();
        RegimeChain chain(logits);
        Tensor g = chain.gamma();
        for (std::size_t i = 0; i < K; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < K; ++j) {
                REQUIRE(g.at(i, j) >= 0.0);
                row += g.at(i, j);
            }
            REQUIRE(std::abs(row - 1.0) < 1e-12);
        }
        Tensor init = chain.initial_distribution();
        for (std::size_t j = 0; j < K; ++j)
            REQUIRE(init[j] == Catch::Approx(1.0 / static_cast<double>(K)));
    }
}

TEST_CASE("gamma rows still sum to one after 100 optimizer steps") {
    ModelConfig cfg = tiny();
    Rng rng(17);
    GenerativeParams params = GenerativeParams::init(cfg, rng);
    AdamOptimizer opt(0.05);

    Rng noise(18);
    for (int step = 0; step < 100; ++step) {
        GradTape tape;
        GenModel m = GenModel::bind_to(tape, cfg, params);
        // arbitrary smooth objective touching every gamma entry
        Var loss = tape.constant(Tensor::scalar(0.0));
        for (std::size_t k = 0; k < cfg.K; ++k) {
            Tensor target({cfg.K});
            for (double& v : target.data) v = std::abs(noise.normal()) + 0.05;
            double z = 0;
            for (double v : target.data) z += v;
            for (double& v : target.data) v /= z;
            loss = add(loss, categorical_kl(m.gamma_row(k), tape.constant(target)));
        }
        tape.backward(loss);
        opt.step(params.ps, collect_grads(m.p, params.ps));
    }

    Tensor g = params.chain().gamma();
    for (std::size_t i = 0; i < cfg.K; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < cfg.K; ++j) row += g.at(i, j);
        REQUIRE(std::abs(row - 1.0) < 1e-9);
    }
}

TEST_CASE("generated series has the declared shapes and is finite") {
    ModelConfig cfg = tiny();
    Rng rng(23);
    GenerativeParams params = GenerativeParams::init(cfg, rng);
    GeneratedSeries s = generate(cfg, params, std::nullopt, 50, 7);
    REQUIRE(s.y_seq.rows() == 50);
    REQUIRE(s.y_seq.cols() == 1);
    REQUIRE(s.z_path.rows() == 50);
    REQUIRE(s.d_path.size() == 50);
    REQUIRE(s.y_seq.all_finite());
    REQUIRE(s.z_path.all_finite());
    for (std::size_t d : s.d_path) REQUIRE(d < cfg.K);

    GeneratedSeries s2 = generate(cfg, params, std::nullopt, 50, 7);
    REQUIRE(s2.y_seq.data == s.y_seq.data);
    GeneratedSeries s3 = generate(cfg, params, std::nullopt, 50, 8);
    REQUIRE(s3.y_seq.data != s.y_seq.data);
}

TEST_CASE("generated regime paths follow the transition matrix") {
    ModelConfig cfg = tiny();
    Rng rng(29);
    GenerativeParams params = GenerativeParams::init(cfg, rng);
    // sticky chain: diagonals around 0.88
    Tensor& logits = params.ps.at("gen.gamma.logits");
    logits.at(0, 0) = 2.0;
    logits.at(0, 1) = 0.0;
    logits.at(1, 0) = 0.0;
    logits.at(1, 1) = 2.0;
    Tensor gamma = params.chain().gamma();

    GeneratedSeries s = generate(cfg, params, std::nullopt, 20000, 11);
    std::size_t stay = 0, total = 0;
    for (std::size_t t = 1; t < s.d_path.size(); ++t) {
        if (s.d_path[t - 1] == 0) {
            ++total;
            if (s.d_path[t] == 0) ++stay;
        }
    }
    double empirical = static_cast<double>(stay) / static_cast<double>(total);
    REQUIRE(std::abs(empirical - gamma.at(0, 0)) < 0.02);
}

TEST_CASE("joint log prob is finite and decreases for distant observations") {
    ModelConfig cfg = tiny();
    Rng rng(31);
    GenerativeParams params = GenerativeParams::init(cfg, rng);
    GeneratedSeries s = generate(cfg, params, std::nullopt, 10, 3);
    Tensor x({10, 1});
    for (std::size_t t = 1; t < 10; ++t) x.at(t, 0) = s.y_seq.at(t - 1, 0);

    double lp = joint_log_prob(s.y_seq, x, s.z_path, s.d_path, cfg, params);
    REQUIRE(std::isfinite(lp));

    Tensor far = s.y_seq;
    for (double& v : far.data) v += 50.0;
    double lp_far = joint_log_prob(far, x, s.z_path, s.d_path, cfg, params);
    REQUIRE(lp_far < lp);

    std::vector<std::size_t> bad = s.d_path;
    bad[0] = 99;
    REQUIRE_THROWS_AS(joint_log_prob(s.y_seq, x, s.z_path, bad, cfg, params),
                      std::out_of_range);
}

TEST_CASE("lognormal emission density includes the jacobian") {
    ModelConfig cfg = tiny();
    cfg.family = EmissionFamily::lognormal;
    Rng rng(37);
    GenerativeParams params = GenerativeParams::init(cfg, rng);

    GradTape tape;
    GenModel m = GenModel::bind_to(tape, cfg, params);
    Var z = tape.constant(Tensor::vec({0.2, -0.1}));
    Var h = tape.constant(Tensor::vec({0.1, 0.0, -0.2}));
    Tensor y = Tensor::vec({2.5});

    auto [mu, lv] = m.emission_params(z, h, 0);
    double expect = gaussian_log_pdf(Tensor::vec({std::log(2.5)}), mu.value(), lv.value()) -
                    std::log(2.5);
    REQUIRE(m.emission_log_pdf(y, z, h, 0).item() == Catch::Approx(expect).epsilon(1e-12));

    REQUIRE_THROWS_AS(m.emission_log_pdf(Tensor::vec({-1.0}), z, h, 0), std::domain_error);
}

TEST_CASE("forward encoding is causal") {
    ModelConfig cfg = tiny();
    Rng rng(41);
    GenerativeParams params = GenerativeParams::init(cfg, rng);
    Tensor x({6, 1});
    for (std::size_t t = 0; t < 6; ++t) x.at(t, 0) = rng.normal();

    Tensor h1 = encode_forward(x, cfg, params);
    Tensor x2 = x;
    x2.at(5, 0) += 10.0;  // only the last input changes
    Tensor h2 = encode_forward(x2, cfg, params);
    for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t j = 0; j < cfg.H; ++j) REQUIRE(h1.at(t, j) == h2.at(t, j));
    bool moved = false;
    for (std::size_t j = 0; j < cfg.H; ++j)
        if (h1.at(5, j) != h2.at(5, j)) moved = true;
    REQUIRE(moved);
}

TEST_CASE("config validation") {
    ModelConfig cfg = tiny();
    cfg.K = 0;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = tiny();
    cfg.Z = 0;
    REQUIRE_THROWS_AS(cfg.validate(), std::invalid_argument);
    REQUIRE_THROWS_AS(emission_family_from_string("poisson"), std::invalid_argument);
    REQUIRE(to_string(EmissionFamily::lognormal) == "lognormal");
}
