#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "layoutvae/layout.hpp"
#include "layoutvae/metrics.hpp"
#include "layoutvae/optim.hpp"
#include "layoutvae/vae.hpp"

namespace layoutvae {

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t epochs = 200;
    OptimConfig optim;
    PlateauConfig plateau;
    std::uint64_t init_seed = 1;
    std::uint64_t shuffle_seed = 2;
    /// Drives reparameterization noise and feedback dropout.
    std::uint64_t eps_seed = 3;

    void validate() const;
    /// Seeds derived from a single run seed, as used by the sweeps.
    TrainConfig with_seed(std::uint64_t seed) const;
};

/// Flattened grids with their teacher-forced feedback rows.
struct Dataset {
    Matrix x;
    Matrix feedback;

    std::size_t size() const noexcept { return x.rows(); }
    static Dataset from_docs(std::span<const LayoutDoc> docs, const GridSpec& spec = {});
};

struct TrainReport {
    std::vector<LossParts> train_loss;
    std::vector<LossParts> val_loss;
    std::vector<double> lr;
    std::size_t best_epoch = 0;
    std::size_t steps = 0;
    double wall_seconds = 0.0;
    VaeParams best_params;
    VaeParams final_params;

    double best_val() const { return val_loss.at(best_epoch).total; }
    nlohmann::ordered_json to_json() const;
};

/// Called after each epoch with (epoch index, report so far).
using EpochCallback = std::function<void(std::size_t, const TrainReport&)>;

TrainReport train(const VaeConfig& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});
TrainReport train(const VaeConfig& model, const CorpusSplits& splits, const TrainConfig& cfg,
                  const GridSpec& spec = {}, const EpochCallback& on_epoch = {});

struct SweepCell {
    std::uint64_t seed = 0;
    double best_val = 0.0;
    double ssim = 0.0;
    double mae = 0.0;
};

struct SweepRow {
    std::string label;
    double lr = 0.0;
    OptimKind kind = OptimKind::AdamW;
    std::vector<SweepCell> cells;
    double mean_ssim = 0.0;
    double mean_mae = 0.0;
    double mean_best_val = 0.0;
};

struct SweepTable {
    /// First column heading: "Lr" or "Optimizer".
    std::string heading;
    std::vector<SweepRow> rows;

    nlohmann::ordered_json to_json() const;
    /// Aligned text table: heading | SSIM | MAE, one row per setting.
    std::string to_text() const;
};

/// Progress hook: (row label, seed) before each run.
using SweepCallback = std::function<void(const std::string&, std::uint64_t)>;

SweepTable sweep_lr(const VaeConfig& model, const CorpusSplits& splits, const TrainConfig& base,
                    std::span<const double> lrs, std::span<const std::uint64_t> seeds,
                    const GridSpec& spec = {}, const SweepCallback& progress = {});
SweepTable sweep_optimizers(const VaeConfig& model, const CorpusSplits& splits,
                            const TrainConfig& base, std::span<const OptimKind> kinds,
                            std::span<const std::uint64_t> seeds, const GridSpec& spec = {},
                            const SweepCallback& progress = {});

}  // namespace layoutvae
