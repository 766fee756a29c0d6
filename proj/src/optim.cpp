#include "layoutvae/optim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>

#include "layoutvae/errors.hpp"

namespace layoutvae {

namespace {
constexpr std::array<std::string_view, 4> kOptimNames = {"SGD", "RMSprop", "Adam", "AdamW"};

bool unit_interval(double v) { return v >= 0.0 && v < 1.0; }

void validate_coefficients(const OptimConfig& c) {
    if (!unit_interval(c.momentum)) throw ValidationError("momentum must be in [0, 1)");
    if (!unit_interval(c.rho)) throw ValidationError("rho must be in [0, 1)");
    if (!unit_interval(c.beta1) || !unit_interval(c.beta2)) {
        throw ValidationError("beta1 and beta2 must be in [0, 1)");
    }
    if (!(c.eps_hat > 0.0)) throw ValidationError("eps_hat must be positive");
    if (!(c.weight_decay >= 0.0)) throw ValidationError("weight_decay must be non-negative");
}
}  // namespace

std::string_view optim_name(OptimKind k) noexcept { return kOptimNames[static_cast<std::size_t>(k)]; }

std::optional<OptimKind> parse_optim(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kOptimNames.size(); ++i) {
        if (kOptimNames[i] == name) return static_cast<OptimKind>(i);
    }
    return std::nullopt;
}

void OptimConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("learning rate must be positive");
    validate_coefficients(*this);
}

Optimizer::Optimizer(OptimConfig config) : config_(config) {
    if (!(config_.lr >= 0.0) || !std::isfinite(config_.lr)) {
        throw ValidationError("learning rate must be non-negative");
    }
    validate_coefficients(config_);
}

void Optimizer::step(std::span<ParamTensor* const> params) {
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (!params[k]->grad.all_finite()) {
            throw NumericError("non-finite gradient in parameter tensor " + std::to_string(k));
        }
    }
    if (state_.m.empty()) {
        for (const ParamTensor* p : params) {
            state_.m.emplace_back(p->value.rows(), p->value.cols());
            state_.v.emplace_back(p->value.rows(), p->value.cols());
        }
    } else if (state_.m.size() != params.size()) {
        throw ShapeError("optimizer state holds " + std::to_string(state_.m.size()) +
                         " slots but step received " + std::to_string(params.size()) + " tensors");
    }
    ++state_.t;

    const OptimConfig& c = config_;
    const double t = static_cast<double>(state_.t);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);

    for (std::size_t k = 0; k < params.size(); ++k) {
        auto w = params[k]->value.data();
        auto g = params[k]->grad.data();
        auto m = state_.m[k].data();
        auto v = state_.v[k].data();
        if (m.size() != w.size()) throw ShapeError("optimizer slot shape mismatch");
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i];
            switch (c.kind) {
                case OptimKind::SGD:
                    m[i] = c.momentum * m[i] + gi;
                    w[i] -= c.lr * m[i];
                    break;
                case OptimKind::RMSprop:
                    v[i] = c.rho * v[i] + (1.0 - c.rho) * gi * gi;
                    w[i] -= c.lr * gi / (std::sqrt(v[i]) + c.eps_hat);
                    break;
                case OptimKind::Adam:
                case OptimKind::AdamW: {
                    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
                    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
                    double delta = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps_hat);
                    // Decoupled decay uses the pre-step weight.
                    if (c.kind == OptimKind::AdamW) delta += c.weight_decay * w[i];
                    w[i] -= c.lr * delta;
                    break;
                }
            }
        }
        params[k]->zero_grad();
    }
}

void PlateauConfig::validate() const {
    if (!(factor > 0.0 && factor < 1.0)) throw ValidationError("plateau factor must be in (0, 1)");
    if (patience < 1) throw ValidationError("plateau patience must be >= 1");
    if (!(min_lr > 0.0)) throw ValidationError("plateau min_lr must be positive");
    if (!(rel_threshold >= 0.0)) throw ValidationError("plateau rel_threshold must be non-negative");
}

PlateauSchedule::PlateauSchedule(PlateauConfig config, double initial_lr)
    : config_(config), lr_(initial_lr), best_(std::numeric_limits<double>::infinity()) {
    config_.validate();
}

double PlateauSchedule::step(double val_total) {
    if (val_total < best_ * (1.0 - config_.rel_threshold) || std::isinf(best_)) {
        best_ = val_total;
        stalls_ = 0;
        return lr_;
    }
    if (++stalls_ >= config_.patience) {
        if (lr_ > config_.min_lr) lr_ = std::max(config_.min_lr, lr_ * config_.factor);
        stalls_ = 0;
    }
    return lr_;
}

}  // namespace layoutvae
