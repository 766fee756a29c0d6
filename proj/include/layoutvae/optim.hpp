#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "layoutvae/numcore.hpp"

namespace layoutvae {

enum class OptimKind { SGD, RMSprop, Adam, AdamW };

std::string_view optim_name(OptimKind k) noexcept;
std::optional<OptimKind> parse_optim(std::string_view name) noexcept;

struct OptimConfig {
    OptimKind kind = OptimKind::AdamW;
    double lr = 0.001;
    double momentum = 0.0;  // SGD
    double rho = 0.9;       // RMSprop
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
    double weight_decay = 0.01;  // AdamW only

    /// Requires lr > 0 and the coefficient ranges of each field.
    void validate() const;
};

/// Per-parameter optimizer slots plus the step counter.
struct OptimState {
    std::vector<Matrix> m;  // SGD momentum buffer / Adam first moment
    std::vector<Matrix> v;  // Adam second moment / RMSprop squared average
    std::size_t t = 0;
};

class Optimizer {
public:
    /// Accepts lr == 0 (a frozen optimizer); other fields as OptimConfig::validate.
    explicit Optimizer(OptimConfig config);

    /// Applies one update from the stored gradients, then zeroes them.
    /// A non-finite gradient throws NumericError before anything changes.
    void step(std::span<ParamTensor* const> params);

    const OptimConfig& config() const noexcept { return config_; }
    double lr() const noexcept { return config_.lr; }
    void set_lr(double lr) noexcept { config_.lr = lr; }
    const OptimState& state() const noexcept { return state_; }

private:
    OptimConfig config_;
    OptimState state_;
};

struct PlateauConfig {
    double factor = 0.5;
    std::size_t patience = 5;
    double min_lr = 1e-5;
    double rel_threshold = 1e-4;

    void validate() const;
};

/// Halves (by `factor`) the learning rate after `patience` consecutive
/// epochs without relative validation improvement.
class PlateauSchedule {
public:
    PlateauSchedule(PlateauConfig config, double initial_lr);

    /// Feeds one validation loss; returns the learning rate to use next.
    double step(double val_total);

    double lr() const noexcept { return lr_; }
    double best() const noexcept { return best_; }
    std::size_t stalls() const noexcept { return stalls_; }

private:
    PlateauConfig config_;
    double lr_;
    double best_;
    std::size_t stalls_ = 0;
};

}  // namespace layoutvae
