#pragma once

#include <ostream>
#include <string>

#include "layoutvae/train.hpp"

namespace layoutvae {

/// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;    // bad flags, unreadable or invalid input
inline constexpr int kExitNumeric = 3;  // NaN/Inf during training

/// Entry point behind the `layoutvae` binary: train, generate, evaluate,
/// sweep, synth, render and serve.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// "batch=64 epochs=200 lr=0.001 optim=AdamW"
std::string config_echo(const TrainConfig& cfg);

/// Train and validation loss totals per epoch as a standalone SVG chart.
std::string loss_curve_svg(const TrainReport& report);

}  // namespace layoutvae
