#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "layoutvae/layout.hpp"
#include "layoutvae/vae.hpp"

namespace layoutvae {

inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Gaussian-window SSIM (11x11, sigma 1.5, reflected borders, window
/// clipped to the grid), averaged over every position and channel.
double ssim(const GridTensor& a, const GridTensor& b);
double mae(const GridTensor& a, const GridTensor& b);

struct MetricsReport {
    double mean_ssim = 0.0;
    double mean_mae = 0.0;
    std::size_t n = 0;
    std::vector<double> per_example_ssim;
    std::vector<double> per_example_mae;

    nlohmann::ordered_json to_json() const;
};

/// Deterministic reconstruction (z = mu, teacher-forced feedback) of every
/// doc, scored against its own rasterization.
MetricsReport evaluate(const VaeParams& params, std::span<const LayoutDoc> docs,
                       const GridSpec& spec = {});

}  // namespace layoutvae
