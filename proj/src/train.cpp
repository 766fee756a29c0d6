#include "layoutvae/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "layoutvae/errors.hpp"

namespace layoutvae {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    optim.validate();
    plateau.validate();
}

TrainConfig TrainConfig::with_seed(std::uint64_t seed) const {
    TrainConfig c = *this;
    c.init_seed = seed;
    c.shuffle_seed = seed + 1;
    c.eps_seed = seed + 2;
    return c;
}

Dataset Dataset::from_docs(std::span<const LayoutDoc> docs, const GridSpec& spec) {
    Dataset d{Matrix(docs.size(), spec.dim()), Matrix(docs.size(), FeedbackVector::kSize)};
    for (std::size_t r = 0; r < docs.size(); ++r) {
        const GridTensor g = rasterize(docs[r], spec);
        std::ranges::copy(g.cells(), d.x.row(r).begin());
        std::ranges::copy(feedback_from_layout(g).values(), d.feedback.row(r).begin());
    }
    return d;
}

namespace {

LossParts validation_loss(const Dataset& val, const VaeParams& params) {
    constexpr std::size_t kChunk = 256;
    LossParts sum;
    for (std::size_t start = 0; start < val.size(); start += kChunk) {
        const std::size_t n = std::min(kChunk, val.size() - start);
        Matrix x(n, val.x.cols()), f(n, val.feedback.cols());
        for (std::size_t r = 0; r < n; ++r) {
            std::ranges::copy(val.x.row(start + r), x.row(r).begin());
            std::ranges::copy(val.feedback.row(start + r), f.row(r).begin());
        }
        const LossParts l = eval_loss_batch(x, f, params);
        const double w = static_cast<double>(n);
        sum.total += l.total * w;
        sum.recon += l.recon * w;
        sum.kl += l.kl * w;
    }
    const double n = static_cast<double>(val.size());
    return {sum.total / n, sum.recon / n, sum.kl / n};
}

}  // namespace

nlohmann::ordered_json TrainReport::to_json() const {
    auto column = [](const std::vector<LossParts>& v, double LossParts::*field) {
        std::vector<double> out;
        out.reserve(v.size());
        for (const LossParts& l : v) out.push_back(l.*field);
        return out;
    };
    std::vector<std::size_t> epochs(train_loss.size());
    std::iota(epochs.begin(), epochs.end(), std::size_t{1});
    nlohmann::ordered_json j;
    j["epochs"] = epochs;
    j["train_loss"] = column(train_loss, &LossParts::total);
    j["val_loss"] = column(val_loss, &LossParts::total);
    j["lr"] = lr;
    j["best_epoch"] = best_epoch + 1;
    j["train_recon"] = column(train_loss, &LossParts::recon);
    j["train_kl"] = column(train_loss, &LossParts::kl);
    j["val_recon"] = column(val_loss, &LossParts::recon);
    j["val_kl"] = column(val_loss, &LossParts::kl);
    j["steps"] = steps;
    j["wall_seconds"] = wall_seconds;
    return j;
}

TrainReport train(const VaeConfig& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    model.validate();
    if (train_set.size() == 0) throw ValidationError("train: training split is empty");
    if (val_set.size() == 0) throw ValidationError("train: validation split is empty");
    if (train_set.x.cols() != model.input_dim || val_set.x.cols() != model.input_dim) {
        throw ShapeError("train: dataset width does not match model input_dim " +
                         std::to_string(model.input_dim));
    }

    const auto started = std::chrono::steady_clock::now();
    VaeParams params = VaeParams::init(model, cfg.init_seed);
    Optimizer optimizer(cfg.optim);
    PlateauSchedule schedule(cfg.plateau, cfg.optim.lr);
    std::mt19937_64 shuffle_rng(cfg.shuffle_seed);
    std::mt19937_64 noise_rng(cfg.eps_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution drop(model.feedback_dropout);
    const auto neutral = FeedbackVector::neutral().values();

    TrainReport report;
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t d = model.input_dim, fdim = train_set.feedback.cols(), l = model.latent_dim;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        LossParts epoch_sum;
        for (std::size_t start = 0, batch = 0; start < order.size(); start += cfg.batch_size, ++batch) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - start);
            Matrix x(n, d), f(n, fdim), eps(n, l);
            for (std::size_t r = 0; r < n; ++r) {
                const std::size_t src = order[start + r];
                std::ranges::copy(train_set.x.row(src), x.row(r).begin());
                if (drop(noise_rng)) {
                    std::copy_n(neutral.begin(), fdim, f.row(r).begin());
                } else {
                    std::ranges::copy(train_set.feedback.row(src), f.row(r).begin());
                }
                for (double& e : eps.row(r)) e = normal(noise_rng);
            }
            const LossParts loss = elbo_batch(x, f, eps, params, true);
            const auto where = " at epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(batch + 1);
            if (!std::isfinite(loss.total)) throw NumericError("non-finite training loss" + where);
            try {
                optimizer.step(params.tensors());
            } catch (const NumericError& e) {
                throw NumericError(e.what() + where);
            }
            ++report.steps;
            const double w = static_cast<double>(n);
            epoch_sum.total += loss.total * w;
            epoch_sum.recon += loss.recon * w;
            epoch_sum.kl += loss.kl * w;
        }
        const double count = static_cast<double>(order.size());
        report.train_loss.push_back({epoch_sum.total / count, epoch_sum.recon / count, epoch_sum.kl / count});
        const LossParts val = validation_loss(val_set, params);
        if (!std::isfinite(val.total)) {
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch + 1));
        }
        report.val_loss.push_back(val);
        report.lr.push_back(optimizer.lr());
        if (epoch == 0 || val.total < report.val_loss[report.best_epoch].total) {
            report.best_epoch = epoch;
            report.best_params = params;
        }
        optimizer.set_lr(schedule.step(val.total));
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        if (on_epoch) on_epoch(epoch, report);
    }
    report.final_params = std::move(params);
    return report;
}

TrainReport train(const VaeConfig& model, const CorpusSplits& splits, const TrainConfig& cfg,
                  const GridSpec& spec, const EpochCallback& on_epoch) {
    return train(model, Dataset::from_docs(splits.train, spec), Dataset::from_docs(splits.val, spec),
                 cfg, on_epoch);
}

namespace {

void finish_row(SweepRow& row) {
    const double n = static_cast<double>(row.cells.size());
    for (const SweepCell& c : row.cells) {
        row.mean_ssim += c.ssim / n;
        row.mean_mae += c.mae / n;
        row.mean_best_val += c.best_val / n;
    }
}

SweepCell run_cell(const VaeConfig& model, const Dataset& tr, const Dataset& va,
                   std::span<const LayoutDoc> test, const TrainConfig& cfg, std::uint64_t seed,
                   const GridSpec& spec) {
    const TrainReport report = train(model, tr, va, cfg.with_seed(seed));
    const MetricsReport m = evaluate(report.best_params, test, spec);
    return {seed, report.best_val(), m.mean_ssim, m.mean_mae};
}

void check_sweep(std::size_t settings, std::size_t seeds, const CorpusSplits& splits) {
    if (settings == 0) throw ValidationError("sweep: no settings given");
    if (seeds == 0) throw ValidationError("sweep: no seeds given");
    if (splits.test.empty()) throw ValidationError("sweep: test split is empty");
}

std::string format_lr(double lr) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", lr);
    return buf;
}

}  // namespace

SweepTable sweep_lr(const VaeConfig& model, const CorpusSplits& splits, const TrainConfig& base,
                    std::span<const double> lrs, std::span<const std::uint64_t> seeds,
                    const GridSpec& spec, const SweepCallback& progress) {
    check_sweep(lrs.size(), seeds.size(), splits);
    const Dataset tr = Dataset::from_docs(splits.train, spec);
    const Dataset va = Dataset::from_docs(splits.val, spec);
    SweepTable table{"Lr", {}};
    for (double lr : lrs) {
        SweepRow row;
        row.label = format_lr(lr);
        row.lr = lr;
        row.kind = base.optim.kind;
        TrainConfig cfg = base;
        cfg.optim.lr = lr;
        for (std::uint64_t seed : seeds) {
            if (progress) progress(row.label, seed);
            row.cells.push_back(run_cell(model, tr, va, splits.test, cfg, seed, spec));
        }
        finish_row(row);
        table.rows.push_back(std::move(row));
    }
    return table;
}

SweepTable sweep_optimizers(const VaeConfig& model, const CorpusSplits& splits,
                            const TrainConfig& base, std::span<const OptimKind> kinds,
                            std::span<const std::uint64_t> seeds, const GridSpec& spec,
                            const SweepCallback& progress) {
    check_sweep(kinds.size(), seeds.size(), splits);
    const Dataset tr = Dataset::from_docs(splits.train, spec);
    const Dataset va = Dataset::from_docs(splits.val, spec);
    SweepTable table{"Optimizer", {}};
    for (OptimKind kind : kinds) {
        SweepRow row;
        row.label = std::string(optim_name(kind));
        row.lr = base.optim.lr;
        row.kind = kind;
        TrainConfig cfg = base;
        cfg.optim.kind = kind;
        for (std::uint64_t seed : seeds) {
            if (progress) progress(row.label, seed);
            row.cells.push_back(run_cell(model, tr, va, splits.test, cfg, seed, spec));
        }
        finish_row(row);
        table.rows.push_back(std::move(row));
    }
    return table;
}

nlohmann::ordered_json SweepTable::to_json() const {
    nlohmann::ordered_json j;
    j["heading"] = heading;
    nlohmann::ordered_json rows_json = nlohmann::ordered_json::array();
    for (const SweepRow& r : rows) {
        nlohmann::ordered_json jr;
        jr["label"] = r.label;
        jr["lr"] = r.lr;
        jr["optimizer"] = optim_name(r.kind);
        jr["ssim"] = r.mean_ssim;
        jr["mae"] = r.mean_mae;
        jr["best_val"] = r.mean_best_val;
        nlohmann::ordered_json cells = nlohmann::ordered_json::array();
        for (const SweepCell& c : r.cells) {
            cells.push_back({{"seed", c.seed}, {"ssim", c.ssim}, {"mae", c.mae}, {"best_val", c.best_val}});
        }
        jr["per_seed"] = std::move(cells);
        rows_json.push_back(std::move(jr));
    }
    j["rows"] = std::move(rows_json);
    return j;
}

std::string SweepTable::to_text() const {
    std::size_t width = heading.size();
    for (const SweepRow& r : rows) width = std::max(width, r.label.size());
    std::string out;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-*s | %-6s | %-6s\n", static_cast<int>(width), heading.c_str(), "SSIM", "MAE");
    out += buf;
    for (const SweepRow& r : rows) {
        std::snprintf(buf, sizeof buf, "%-*s | %6.3f | %6.3f\n", static_cast<int>(width), r.label.c_str(),
                      r.mean_ssim, r.mean_mae);
        out += buf;
    }
    return out;
}

}  // namespace layoutvae
