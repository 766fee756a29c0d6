#include <doctest.h>

#include <cmath>
#include <limits>

#include "layoutvae/errors.hpp"
#include "layoutvae/train.hpp"

using namespace layoutvae;

namespace {

ParamTensor scalar_param(double w, double g) {
    ParamTensor p(Matrix(1, 1, w));
    p.grad(0, 0) = g;
    return p;
}

double one_step(OptimConfig cfg, double w, double g) {
    ParamTensor p = scalar_param(w, g);
    ParamTensor* ptrs[] = {&p};
    Optimizer opt(cfg);
    opt.step(ptrs);
    CHECK(p.grad(0, 0) == 0.0);
    return p.value(0, 0);
}

OptimConfig with_kind(OptimKind k, double lr) {
    OptimConfig c;
    c.kind = k;
    c.lr = lr;
    return c;
}

// 1 x 4 x 6 grid keeps the model tiny (D = 24).
const GridSpec kTinySpec{1, 4, 6};

VaeConfig tiny_model() {
    VaeConfig m;
    m.input_dim = kTinySpec.dim();
    m.hidden = {16, 12, 8};
    m.latent_dim = 4;
    return m;
}

}  // namespace

TEST_CASE("optimizer first steps follow their recurrences") {
    CHECK(std::abs(one_step(with_kind(OptimKind::SGD, 0.1), 1.0, 2.0) - 0.8) < 1e-12);

    const double adam = 1.0 - 0.001 * 0.5 / (0.5 + 1e-8);
    CHECK(std::abs(one_step(with_kind(OptimKind::Adam, 0.001), 1.0, 0.5) - adam) < 1e-12);
    CHECK(std::abs(adam - 0.999) < 1e-10);

    const double adamw = adam - 0.001 * 0.01 * 1.0;
    CHECK(std::abs(one_step(with_kind(OptimKind::AdamW, 0.001), 1.0, 0.5) - adamw) < 1e-12);
    CHECK(std::abs(adamw - 0.99899) < 1e-10);

    const double rms = -0.01 / (std::sqrt(0.1) + 1e-8);
    CHECK(std::abs(one_step(with_kind(OptimKind::RMSprop, 0.01), 0.0, 1.0) - rms) < 1e-12);
    CHECK(std::abs(rms + 0.03162) < 1e-5);
}

TEST_CASE("SGD momentum accumulates across steps") {
    OptimConfig c = with_kind(OptimKind::SGD, 0.1);
    c.momentum = 0.9;
    ParamTensor p = scalar_param(1.0, 1.0);
    ParamTensor* ptrs[] = {&p};
    Optimizer opt(c);
    opt.step(ptrs);
    p.grad(0, 0) = 1.0;
    opt.step(ptrs);
    CHECK(p.value(0, 0) == doctest::Approx(1.0 - 0.1 - 0.1 * 1.9).epsilon(1e-14));
    CHECK(opt.state().t == 2);
}

TEST_CASE("zero learning rate and zero gradient") {
    for (OptimKind k : {OptimKind::SGD, OptimKind::RMSprop, OptimKind::Adam, OptimKind::AdamW}) {
        CAPTURE(optim_name(k));
        CHECK(one_step(with_kind(k, 0.0), 0.7, 0.3) == 0.7);
        const double expected = k == OptimKind::AdamW ? 0.7 - 0.01 * 0.01 * 0.7 : 0.7;
        CHECK(one_step(with_kind(k, 0.01), 0.7, 0.0) == doctest::Approx(expected).epsilon(1e-15));
    }
}

TEST_CASE("non-finite gradient aborts the step untouched") {
    ParamTensor a = scalar_param(1.0, 0.5);
    ParamTensor b = scalar_param(2.0, std::numeric_limits<double>::quiet_NaN());
    ParamTensor* ptrs[] = {&a, &b};
    Optimizer opt(with_kind(OptimKind::Adam, 0.1));
    CHECK_THROWS_AS(opt.step(ptrs), NumericError);
    CHECK(a.value(0, 0) == 1.0);
    CHECK(opt.state().t == 0);
}

TEST_CASE("optimizer config validation and names") {
    OptimConfig c;
    CHECK_NOTHROW(c.validate());
    c.lr = 0.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.beta2 = 1.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.weight_decay = -1.0;
    CHECK_THROWS_AS(Optimizer{c}, ValidationError);
    for (OptimKind k : {OptimKind::SGD, OptimKind::RMSprop, OptimKind::Adam, OptimKind::AdamW}) {
        CHECK(parse_optim(optim_name(k)) == k);
    }
    CHECK_FALSE(parse_optim("Adagrad").has_value());
}

TEST_CASE("plateau schedule") {
    SUBCASE("improving every epoch keeps lr") {
        PlateauSchedule s({}, 0.001);
        for (int e = 0; e < 20; ++e) CHECK(s.step(100.0 - e) == 0.001);
    }
    SUBCASE("five stalls halve lr") {
        PlateauSchedule s({}, 0.001);
        s.step(10.0);
        for (int e = 0; e < 4; ++e) CHECK(s.step(10.0) == 0.001);
        CHECK(s.step(10.0) == 0.0005);
        CHECK(s.stalls() == 0);
    }
    SUBCASE("improvement below the relative threshold is a stall") {
        PlateauSchedule s({}, 0.001);
        s.step(10.0);
        s.step(10.0 * (1.0 - 0.5e-4));
        CHECK(s.stalls() == 1);
    }
    SUBCASE("floor at min_lr and never rises") {
        PlateauSchedule s({}, 2e-5);
        s.step(1.0);
        double prev = s.lr();
        for (int e = 0; e < 40; ++e) {
            const double lr = s.step(1.0);
            CHECK(lr <= prev);
            CHECK(lr >= 1e-5);
            prev = lr;
        }
        CHECK(prev == 1e-5);
    }
    PlateauConfig bad;
    bad.factor = 1.0;
    CHECK_THROWS_AS(PlateauSchedule(bad, 0.1), ValidationError);
}

TEST_CASE("training loop bookkeeping") {
    const auto docs = synth_corpus(5, 80, kTinySpec);
    const Dataset tr = Dataset::from_docs(std::span(docs).first(64), kTinySpec);
    const Dataset va = Dataset::from_docs(std::span(docs).subspan(64), kTinySpec);
    TrainConfig cfg;
    cfg.epochs = 1;

    const TrainReport one = train(tiny_model(), tr, va, cfg);
    CHECK(one.steps == 1);
    CHECK(one.train_loss.size() == 1);
    CHECK(one.val_loss.size() == 1);
    CHECK(one.lr.size() == 1);

    cfg.epochs = 4;
    cfg.batch_size = 30;  // 64 = 30 + 30 + 4: the short batch is kept
    const TrainReport a = train(tiny_model(), tr, va, cfg);
    CHECK(a.steps == 12);
    const TrainReport b = train(tiny_model(), tr, va, cfg);
    for (std::size_t e = 0; e < 4; ++e) {
        CHECK(a.train_loss[e].total == b.train_loss[e].total);
        CHECK(a.val_loss[e].total == b.val_loss[e].total);
        CHECK(std::isfinite(a.train_loss[e].total));
    }
    CHECK(serialize_params(a.final_params) == serialize_params(b.final_params));
    for (std::size_t e = 0; e < 4; ++e) CHECK(a.val_loss[a.best_epoch].total <= a.val_loss[e].total);

    cfg.shuffle_seed += 1;
    const TrainReport c = train(tiny_model(), tr, va, cfg);
    CHECK(c.train_loss[0].total != a.train_loss[0].total);

    const auto json = a.to_json();
    CHECK(json["epochs"].size() == 4);
    CHECK(json["train_loss"].size() == 4);
    CHECK(json["val_loss"].size() == 4);
    CHECK(json["lr"].size() == 4);
    CHECK(json["best_epoch"].get<std::size_t>() == a.best_epoch + 1);

    CHECK_THROWS_AS(train(tiny_model(), Dataset{}, va, cfg), ValidationError);
    CHECK_THROWS_AS(train(tiny_model(), tr, Dataset{}, cfg), ValidationError);
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(tiny_model(), tr, va, cfg), ValidationError);
}

TEST_CASE("sweeps") {
    const auto docs = synth_corpus(9, 90, kTinySpec);
    const CorpusSplits splits = split(docs, {16, 1, 1}, 9);
    TrainConfig base;
    base.epochs = 2;
    base.batch_size = 16;
    const std::uint64_t seeds[] = {4};

    SUBCASE("single cell matches a direct run") {
        const double lrs[] = {0.002};
        const SweepTable t = sweep_lr(tiny_model(), splits, base, lrs, seeds, kTinySpec);
        REQUIRE(t.rows.size() == 1);
        TrainConfig direct = base.with_seed(4);
        direct.optim.lr = 0.002;
        const TrainReport r = train(tiny_model(), splits, direct, kTinySpec);
        const MetricsReport m = evaluate(r.best_params, splits.test, kTinySpec);
        CHECK(t.rows[0].mean_ssim == m.mean_ssim);
        CHECK(t.rows[0].mean_mae == m.mean_mae);
        CHECK(t.rows[0].mean_best_val == r.best_val());
    }
    SUBCASE("rows keep the requested order") {
        const OptimKind kinds[] = {OptimKind::RMSprop, OptimKind::Adam, OptimKind::SGD, OptimKind::AdamW};
        const SweepTable t = sweep_optimizers(tiny_model(), splits, base, kinds, seeds, kTinySpec);
        REQUIRE(t.rows.size() == 4);
        CHECK(t.rows[0].label == "RMSprop");
        CHECK(t.rows[2].label == "SGD");
        const std::string text = t.to_text();
        CHECK(text.rfind("Optimizer | SSIM   | MAE", 0) == 0);
        CHECK(text.find("\nAdamW     | ") != std::string::npos);
        CHECK(t.to_json()["rows"][3]["per_seed"].size() == 1);
    }
    SUBCASE("empty grids are rejected") {
        CHECK_THROWS_AS(sweep_lr(tiny_model(), splits, base, {}, seeds, kTinySpec), ValidationError);
        const double lrs[] = {0.001};
        CHECK_THROWS_AS(sweep_lr(tiny_model(), splits, base, lrs, {}, kTinySpec), ValidationError);
    }
}
