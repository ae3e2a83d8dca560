#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "cslstm/adam.hpp"
#include "cslstm/gradcheck.hpp"
#include "cslstm/model.hpp"
#include "cslstm/rng.hpp"
#include "cslstm/windows.hpp"

using namespace cslstm;
using ad::Tensor;
using ad::Var;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.seasonal_window = 8;
    cfg.total_window = 24;
    cfg.context_window = 4;
    cfg.context_stride = 2;
    cfg.context_history = 8;
    cfg.d_model = 8;
    return cfg;
}

SeriesView view_of(const std::vector<double>& values, const std::vector<double>& mask,
                   const std::vector<double>& denoised) {
    return SeriesView{values, mask, denoised};
}

}  // namespace

TEST_CASE("model config validation") {
    ModelConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    cfg.total_window = 20;  // not a multiple of 8
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.context_stride = 4;  // no overlap
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.sigma_min = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = small_config();
    cfg.disable_seasonal = cfg.disable_contextual = true;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("seasonal extraction tiles the history exactly") {
    std::vector<double> values(40), mask(40, 1.0), denoised(40);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(i);
    denoised = values;
    auto row = extract_seasonal(view_of(values, mask, denoised), 8, 24, 30, true, true);
    REQUIRE(row.inputs.shape == ad::Shape{3, 16});
    REQUIRE(row.covariates.shape == ad::Shape{3, 8});
    // Concatenated covariate windows reproduce values[6..30).
    for (std::int64_t wi = 0; wi < 3; ++wi) {
        for (std::int64_t i = 0; i < 8; ++i) {
            CHECK(row.covariates.data[static_cast<std::size_t>(wi * 8 + i)] ==
                  values[static_cast<std::size_t>(6 + wi * 8 + i)]);
        }
    }
    // The raw half of each feature row equals the covariate window.
    for (std::int64_t wi = 0; wi < 3; ++wi) {
        for (std::int64_t i = 0; i < 8; ++i) {
            CHECK(row.inputs.data[static_cast<std::size_t>(wi * 16 + 8 + i)] ==
                  row.covariates.data[static_cast<std::size_t>(wi * 8 + i)]);
        }
    }
    // Target is the next w_s points.
    CHECK(row.target.front() == 30.0);
    CHECK(row.target.back() == 37.0);

    CHECK_THROWS_AS(extract_seasonal(view_of(values, mask, denoised), 8, 24, 10),
                    std::out_of_range);
}

TEST_CASE("seasonal window arithmetic matches the defaults") {
    std::vector<double> values(300, 0.0), mask(300, 1.0), denoised(300, 0.0);
    auto row = extract_seasonal(view_of(values, mask, denoised), 48, 240, 240, true, true);
    CHECK(row.inputs.shape == ad::Shape{5, 96});  // 240/48 windows

    std::vector<double> v2(144, 1.0), m2(144, 1.0), d2(144, 1.0);
    auto row2 = extract_seasonal(view_of(v2, m2, d2), 48, 96, 96, true, true);
    CHECK(row2.inputs.shape == ad::Shape{2, 96});
    CHECK(row2.target.size() == 48);
}

TEST_CASE("context extraction produces overlapping windows") {
    std::vector<double> values(20), mask(20, 1.0), denoised(20);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(i);
    denoised = values;
    auto row = extract_context(view_of(values, mask, denoised), 4, 2, 10, 10, true, true);
    REQUIRE(row.inputs.shape == ad::Shape{4, 8});  // offsets 0,2,4,6
    for (std::int64_t wi = 0; wi < 4; ++wi) {
        CHECK(row.covariates.data[static_cast<std::size_t>(wi * 4)] ==
              values[static_cast<std::size_t>(wi * 2)]);
    }
    CHECK(row.target == std::vector<double>{10.0});

    CHECK_THROWS_AS(extract_context(view_of(values, mask, denoised), 4, 4, 10, 10),
                    std::invalid_argument);
    CHECK_THROWS_AS(extract_context(view_of(values, mask, denoised), 4, 2, 10, 5),
                    std::out_of_range);
}

TEST_CASE("consecutive context windows overlap by w_c - stride points") {
    std::vector<double> values(32), mask(32, 1.0), denoised(32);
    Rng rng(4);
    for (auto& v : values) v = rng.normal();
    denoised = values;
    const std::int64_t w_c = 6, stride = 2;
    auto row = extract_context(view_of(values, mask, denoised), w_c, stride, 14, 20, false, false);
    const std::int64_t windows = (14 - w_c) / stride + 1;
    REQUIRE(row.covariates.shape == ad::Shape{windows, w_c});
    for (std::int64_t wi = 0; wi + 1 < windows; ++wi) {
        for (std::int64_t i = 0; i < w_c - stride; ++i) {
            CHECK(row.covariates.data[static_cast<std::size_t>(wi * w_c + stride + i)] ==
                  row.covariates.data[static_cast<std::size_t>((wi + 1) * w_c + i)]);
        }
    }
}

TEST_CASE("zero heads give zero mean and unit sigma in both branches") {
    ModelConfig cfg = small_config();
    CsModel model(cfg, 11);
    for (auto* t : {&model.s_head_mu_w, &model.s_head_mu_b, &model.s_head_lv_w,
                    &model.s_head_lv_b, &model.c_head_w, &model.c_head_b}) {
        std::fill(t->data.begin(), t->data.end(), 0.0);
    }
    std::vector<double> values(40), mask(40, 1.0), denoised(40);
    Rng rng(3);
    for (auto& v : values) v = rng.normal();
    denoised = values;
    auto srow = extract_seasonal(view_of(values, mask, denoised), 8, 24, 30, true, true);
    auto crow = extract_context(view_of(values, mask, denoised), 4, 2, 8, 30, true, true);

    ad::Tape tape;
    auto bm = bind_model(tape, model);
    auto sfeat = rows_as_tensors(srow.inputs);
    auto cfeat = rows_as_tensors(crow.inputs);
    auto sf = s_branch_forward(tape, bm, cfg, sfeat);
    auto cf = c_branch_forward(tape, bm, cfg, cfeat);
    auto s = read_forecast(tape, sf, cfg.sigma_min, Branch::seasonal);
    auto c = read_forecast(tape, cf, cfg.sigma_min, Branch::contextual);
    REQUIRE(s.mu.size() == 8);
    REQUIRE(c.mu.size() == 1);
    for (double m : s.mu) CHECK(m == Catch::Approx(0.0).margin(1e-12));
    for (double sg : s.sigma) CHECK(sg == Catch::Approx(1.0).margin(1e-12));
    CHECK(c.mu[0] == Catch::Approx(0.0).margin(1e-12));
    CHECK(c.sigma[0] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("branch forwards reject config mismatches") {
    ModelConfig cfg = small_config();
    CsModel model(cfg, 1);
    std::vector<double> values(40, 0.0), mask(40, 1.0), denoised(40, 0.0);
    auto srow = extract_seasonal(view_of(values, mask, denoised), 8, 16, 30, true, false);
    ad::Tape tape;
    auto bm = bind_model(tape, model);
    auto feats = rows_as_tensors(srow.inputs);  // 2 windows, config wants 3
    CHECK_THROWS_AS(s_branch_forward(tape, bm, cfg, feats), std::invalid_argument);
}

TEST_CASE("emitted variance is floored at sigma_min exactly") {
    ModelConfig cfg = small_config();
    CsModel model(cfg, 5);
    // Push the log-variance head far below the floor.
    std::fill(model.s_head_lv_w.data.begin(), model.s_head_lv_w.data.end(), 0.0);
    std::fill(model.s_head_lv_b.data.begin(), model.s_head_lv_b.data.end(), -100.0);
    std::vector<double> values(40), mask(40, 1.0), denoised(40);
    Rng rng(9);
    for (auto& v : values) v = rng.normal();
    denoised = values;
    auto srow = extract_seasonal(view_of(values, mask, denoised), 8, 24, 30, true, true);
    ad::Tape tape;
    auto bm = bind_model(tape, model);
    auto sfeat = rows_as_tensors(srow.inputs);
    auto sf = s_branch_forward(tape, bm, cfg, sfeat);
    auto s = read_forecast(tape, sf, cfg.sigma_min, Branch::seasonal);
    for (double sg : s.sigma) CHECK(sg == cfg.sigma_min);
}

TEST_CASE("masked_nll hand-checked values") {
    ad::Tape tape;
    const double sigma_min = 1e-3;

    // zero residual, unit variance
    Var mu0 = tape.constant_vector(std::vector<double>{0.0});
    Var lv0 = tape.constant_vector(std::vector<double>{0.0});
    std::vector<double> x0 = {0.0}, xh0 = {0.0}, m1 = {1.0};
    CHECK(tape.value(masked_nll(tape, mu0, lv0, x0, xh0, m1, sigma_min))[0] ==
          Catch::Approx(0.0).margin(1e-12));

    // anomalous point: the denoised value substitutes the target
    std::vector<double> x1 = {5.0}, xh1 = {1.0}, m0 = {0.0};
    CHECK(tape.value(masked_nll(tape, mu0, lv0, x1, xh1, m0, sigma_min))[0] ==
          Catch::Approx(1.0).margin(1e-12));

    // unit log-variance term
    Var mu2 = tape.constant_vector(std::vector<double>{2.0});
    Var lv1 = tape.constant_vector(std::vector<double>{1.0});
    std::vector<double> x2 = {2.0};
    CHECK(tape.value(masked_nll(tape, mu2, lv1, x2, xh1, m1, sigma_min))[0] ==
          Catch::Approx(1.0).margin(1e-12));

    // shape errors
    std::vector<double> too_long = {1.0, 2.0};
    CHECK_THROWS_AS(masked_nll(tape, mu0, lv0, too_long, xh1, m1, sigma_min),
                    std::invalid_argument);
    std::vector<double> bad_mask = {0.5};
    CHECK_THROWS_AS(masked_nll(tape, mu0, lv0, x0, xh0, bad_mask, sigma_min),
                    std::invalid_argument);
}

TEST_CASE("flipping a masked-out observation leaves the loss bit-identical") {
    Rng rng(31);
    std::vector<double> x(6), xh(6), mask = {1, 0, 1, 1, 0, 1};
    for (auto& v : x) v = rng.normal();
    for (auto& v : xh) v = rng.normal();
    std::vector<double> muv(6), lvv(6);
    for (auto& v : muv) v = rng.normal();
    for (auto& v : lvv) v = rng.normal();

    auto eval = [&](const std::vector<double>& xin) {
        ad::Tape tape;
        Var mu = tape.constant_vector(muv);
        Var lv = tape.constant_vector(lvv);
        return tape.value(masked_nll(tape, mu, lv, xin, xh, mask, 1e-3))[0];
    };
    double base = eval(x);
    auto flipped = x;
    flipped[1] = 1000.0;
    flipped[4] = -77.0;
    double after = eval(flipped);
    CHECK(base == after);
}

TEST_CASE("with unit variance the loss reduces to MSE against the hybrid target") {
    Rng rng(12);
    std::vector<double> x(10), xh(10), mask(10);
    for (auto& v : x) v = rng.normal();
    for (auto& v : xh) v = rng.normal();
    for (auto& v : mask) v = rng.uniform01() < 0.5 ? 0.0 : 1.0;
    std::vector<double> muv(10);
    for (auto& v : muv) v = rng.normal();

    ad::Tape tape;
    Var mu = tape.constant_vector(muv);
    Var lv = tape.constant_vector(std::vector<double>(10, 0.0));
    double loss = tape.value(masked_nll(tape, mu, lv, x, xh, mask, 1e-3))[0];

    auto hybrid = hybrid_target(x, xh, mask);
    double mse = 0.0;
    for (std::size_t i = 0; i < 10; ++i) mse += (hybrid[i] - muv[i]) * (hybrid[i] - muv[i]);
    mse /= 10.0;
    CHECK(loss == Catch::Approx(mse).epsilon(1e-12));
}

TEST_CASE("total loss adds the branch losses bit-exactly") {
    ad::Tape tape;
    Var a = tape.constant_scalar(1.0);
    Var b = tape.constant_scalar(2.0);
    CHECK(tape.value(total_loss(a, b))[0] == 3.0);

    Var z = tape.constant_scalar(0.0);
    CHECK(tape.value(total_loss(z, z))[0] == 0.0);
}

TEST_CASE("loss optima oracle closed forms") {
    std::vector<double> x = {1.0, 2.0}, xh = {0.0, 0.0}, mask = {1.0, 0.0};
    auto opt = loss_optima_oracle(x, xh, mask, 1e-3);
    CHECK(opt.mu_star == std::vector<double>{1.0, 0.0});
    for (double s : opt.sigma_star) CHECK(s == 1e-3);

    std::vector<double> fixed_mu = {0.5, 0.3};
    auto opt2 = loss_optima_oracle(x, xh, mask, 1e-3, std::span<const double>(fixed_mu));
    CHECK(opt2.sigma_star[0] == Catch::Approx(0.5));
    CHECK(opt2.sigma_star[1] == Catch::Approx(0.3));
}

TEST_CASE("free (mu, log-variance) optimization reaches the closed-form optima") {
    Rng rng(2718);
    const std::size_t n = 12;
    std::vector<double> x(n), xh(n), mask(n);
    for (auto& v : x) v = rng.normal();
    for (auto& v : xh) v = rng.normal();
    for (auto& v : mask) v = rng.uniform01() < 0.3 ? 0.0 : 1.0;
    const double sigma_min = 1e-3;

    Tensor mu = Tensor::zeros({static_cast<std::int64_t>(n)}, true);
    Tensor lv = Tensor::zeros({static_cast<std::int64_t>(n)}, true);
    std::vector<ad::Tensor*> ps = {&mu, &lv};
    auto st = AdamState::for_params(ps);
    AdamConfig cfg;
    cfg.lr = 1e-2;
    for (int step = 0; step < 2000; ++step) {
        mu.zero_grad();
        lv.zero_grad();
        ad::Tape tape;
        Var loss = masked_nll(tape, tape.leaf(mu), tape.leaf(lv), x, xh, mask, sigma_min);
        tape.backward(loss);
        adam_step(ps, st, cfg);
    }
    auto opt = loss_optima_oracle(x, xh, mask, sigma_min);
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(mu.data[i] - opt.mu_star[i]) < 1e-3);
    }
}

TEST_CASE("seasonal branch gradient matches finite differences") {
    ModelConfig cfg = small_config();
    CsModel model(cfg, 77);
    std::vector<double> values(40), mask(40, 1.0), denoised(40);
    Rng rng(13);
    for (auto& v : values) v = rng.normal();
    denoised = values;
    auto srow = extract_seasonal(view_of(values, mask, denoised), cfg.seasonal_window,
                                 cfg.total_window, 30, true, true);

    auto named = model.named_params();
    std::vector<Tensor> point;
    for (auto& [name, t] : named) point.push_back(*t);
    const auto irfft_copy = model.irfft_mat;

    double err = ad::grad_check(
        [&](ad::Tape& tape, std::vector<Var>& vars) {
            BoundModel bm;
            bm.s_lstm = LstmBound{vars[0], vars[1], vars[2], vars[3],
                                  vars[4], vars[5], vars[6], vars[7], cfg.d_model};
            bm.s_mu_w = vars[8];
            bm.s_mu_b = vars[9];
            bm.s_lv_w = vars[10];
            bm.s_lv_b = vars[11];
            bm.c_lstm = LstmBound{vars[12], vars[13], vars[14], vars[15],
                                  vars[16], vars[17], vars[18], vars[19], cfg.d_model};
            bm.c_w = vars[20];
            bm.c_b = vars[21];
            auto m = irfft_copy;
            bm.irfft_m = tape.leaf(m);
            auto feats = rows_as_tensors(srow.inputs);
            auto fv = s_branch_forward(tape, bm, cfg, feats);
            return masked_nll(tape, fv.mu, fv.log_var, srow.target, srow.target_denoised,
                              srow.target_mask, cfg.sigma_min);
        },
        point);
    CHECK(err < 1e-4);
}

TEST_CASE("contextual branch gradient matches finite differences") {
    ModelConfig cfg = small_config();
    CsModel model(cfg, 78);
    std::vector<double> values(40), mask(40, 1.0), denoised(40);
    Rng rng(14);
    for (auto& v : values) v = rng.normal();
    denoised = values;
    auto crow = extract_context(view_of(values, mask, denoised), cfg.context_window,
                                cfg.context_stride, cfg.context_history, 30, true, true);

    auto named = model.named_params();
    std::vector<Tensor> point;
    for (auto& [name, t] : named) point.push_back(*t);
    const auto irfft_copy = model.irfft_mat;

    double err = ad::grad_check(
        [&](ad::Tape& tape, std::vector<Var>& vars) {
            BoundModel bm;
            bm.s_lstm = LstmBound{vars[0], vars[1], vars[2], vars[3],
                                  vars[4], vars[5], vars[6], vars[7], cfg.d_model};
            bm.s_mu_w = vars[8];
            bm.s_mu_b = vars[9];
            bm.s_lv_w = vars[10];
            bm.s_lv_b = vars[11];
            bm.c_lstm = LstmBound{vars[12], vars[13], vars[14], vars[15],
                                  vars[16], vars[17], vars[18], vars[19], cfg.d_model};
            bm.c_w = vars[20];
            bm.c_b = vars[21];
            auto m = irfft_copy;
            bm.irfft_m = tape.leaf(m);
            auto feats = rows_as_tensors(crow.inputs);
            auto fv = c_branch_forward(tape, bm, cfg, feats);
            return masked_nll(tape, fv.mu, fv.log_var, crow.target, crow.target_denoised,
                              crow.target_mask, cfg.sigma_min);
        },
        point);
    CHECK(err < 1e-4);
}

TEST_CASE("seasonal branch learns a strictly periodic signal") {
    ModelConfig cfg = small_config();
    cfg.d_model = 16;
    CsModel model(cfg, 101);

    const std::size_t len = 120;
    std::vector<double> values(len), mask(len, 1.0);
    for (std::size_t t = 0; t < len; ++t) {
        values[t] = std::sin(2.0 * 3.14159265358979323846 * static_cast<double>(t) / 8.0);
    }
    std::vector<double> denoised = values;
    SeriesView view{values, mask, denoised};

    std::vector<WindowRow> samples;
    for (std::int64_t t = cfg.total_window; t + cfg.seasonal_window <= 64; ++t) {
        samples.push_back(extract_seasonal(view, cfg.seasonal_window, cfg.total_window, t));
    }
    auto params = model.params();
    auto st = AdamState::for_params(params);
    AdamConfig acfg;
    acfg.lr = 5e-3;
    for (int step = 0; step < 400; ++step) {
        model.zero_grads();
        for (auto& srow : samples) {
            ad::Tape tape;
            auto bm = bind_model(tape, model);
            auto feats = rows_as_tensors(srow.inputs);
            auto fv = s_branch_forward(tape, bm, cfg, feats);
            Var loss = masked_nll(tape, fv.mu, fv.log_var, srow.target, srow.target_denoised,
                                  srow.target_mask, cfg.sigma_min);
            tape.backward(loss);
        }
        adam_step(params, st, acfg);
    }

    // Held-out prediction late in the series.
    auto test_row = extract_seasonal(view, cfg.seasonal_window, cfg.total_window, 100);
    ad::Tape tape;
    auto bm = bind_model(tape, model);
    auto feats = rows_as_tensors(test_row.inputs);
    auto fv = s_branch_forward(tape, bm, cfg, feats);
    auto fc = read_forecast(tape, fv, cfg.sigma_min, Branch::seasonal);
    double mse = 0.0;
    for (std::size_t i = 0; i < fc.mu.size(); ++i) {
        mse += (fc.mu[i] - test_row.target[i]) * (fc.mu[i] - test_row.target[i]);
    }
    mse /= static_cast<double>(fc.mu.size());
    CHECK(mse < 1e-2);
}

TEST_CASE("contextual branch learns linear ramps") {
    ModelConfig cfg = small_config();
    cfg.d_model = 16;
    CsModel model(cfg, 202);
    Rng rng(55);

    auto make_ramp = [&](double slope, std::size_t len) {
        std::vector<double> v(len);
        for (std::size_t t = 0; t < len; ++t) {
            v[t] = slope * (static_cast<double>(t) - static_cast<double>(len) / 2.0);
        }
        return v;
    };

    std::vector<WindowRow> samples;
    for (int ri = 0; ri < 8; ++ri) {
        double slope = rng.uniform(-0.05, 0.05);
        auto v = make_ramp(slope, 24);
        std::vector<double> m(24, 1.0);
        SeriesView view{v, m, v};
        for (std::int64_t t = cfg.context_history; t < 24; ++t) {
            samples.push_back(extract_context(view, cfg.context_window, cfg.context_stride,
                                              cfg.context_history, t));
        }
    }

    auto params = model.params();
    auto st = AdamState::for_params(params);
    AdamConfig acfg;
    acfg.lr = 5e-3;
    for (int step = 0; step < 400; ++step) {
        model.zero_grads();
        for (auto& crow : samples) {
            ad::Tape tape;
            auto bm = bind_model(tape, model);
            auto feats = rows_as_tensors(crow.inputs);
            auto fv = c_branch_forward(tape, bm, cfg, feats);
            Var loss = masked_nll(tape, fv.mu, fv.log_var, crow.target, crow.target_denoised,
                                  crow.target_mask, cfg.sigma_min);
            tape.backward(loss);
        }
        adam_step(params, st, acfg);
    }

    double worst = 0.0;
    for (double slope : {-0.033, 0.011, 0.042}) {
        auto v = make_ramp(slope, 24);
        std::vector<double> m(24, 1.0);
        SeriesView view{v, m, v};
        auto crow = extract_context(view, cfg.context_window, cfg.context_stride,
                                    cfg.context_history, 20);
        ad::Tape tape;
        auto bm = bind_model(tape, model);
        auto feats = rows_as_tensors(crow.inputs);
        auto fv = c_branch_forward(tape, bm, cfg, feats);
        auto fc = read_forecast(tape, fv, cfg.sigma_min, Branch::contextual);
        worst = std::max(worst, std::abs(fc.mu[0] - crow.target[0]));
    }
    CHECK(worst < 0.05);
}
