#include "layoutvae/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "layoutvae/errors.hpp"

namespace layoutvae {

namespace {

constexpr std::size_t kWindow = 11;
constexpr double kSigma = 1.5;

struct Window1d {
    std::vector<double> weights;
    std::ptrdiff_t offset = 0;  // position of weights[0] relative to the centre
};

Window1d gaussian_window(std::size_t extent) {
    const std::size_t n = std::min(kWindow, extent);
    const double centre = (static_cast<double>(n) - 1.0) / 2.0;
    Window1d w;
    w.weights.resize(n);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = static_cast<double>(k) - centre;
        w.weights[k] = std::exp(-d * d / (2.0 * kSigma * kSigma));
        total += w.weights[k];
    }
    for (double& v : w.weights) v /= total;
    w.offset = -static_cast<std::ptrdiff_t>(n / 2);
    return w;
}

// Half-sample symmetric reflection: ... b a | a b c ... c | c b ...
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    const auto len = static_cast<std::ptrdiff_t>(n);
    const std::ptrdiff_t period = 2 * len;
    i %= period;
    if (i < 0) i += period;
    return static_cast<std::size_t>(i < len ? i : period - 1 - i);
}

// Separable weighted sum of one plane at every position.
std::vector<double> filter(std::span<const double> plane, std::size_t rows, std::size_t cols,
                           const Window1d& wr, const Window1d& wc) {
    std::vector<double> tmp(rows * cols, 0.0), out(rows * cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < wc.weights.size(); ++k) {
                const auto jj = reflect(static_cast<std::ptrdiff_t>(j) + wc.offset + static_cast<std::ptrdiff_t>(k), cols);
                acc += wc.weights[k] * plane[i * cols + jj];
            }
            tmp[i * cols + j] = acc;
        }
    }
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < wr.weights.size(); ++k) {
                const auto ii = reflect(static_cast<std::ptrdiff_t>(i) + wr.offset + static_cast<std::ptrdiff_t>(k), rows);
                acc += wr.weights[k] * tmp[ii * cols + j];
            }
            out[i * cols + j] = acc;
        }
    }
    return out;
}

void require_same_spec(const GridTensor& a, const GridTensor& b, const char* op) {
    if (a.spec() != b.spec()) throw ShapeError(std::string(op) + ": grid specs differ");
}

}  // namespace

double ssim(const GridTensor& a, const GridTensor& b) {
    require_same_spec(a, b, "ssim");
    const GridSpec& s = a.spec();
    const Window1d wr = gaussian_window(s.rows);
    const Window1d wc = gaussian_window(s.cols);
    const std::size_t plane = s.plane();

    double total = 0.0;
    std::vector<double> aa(plane), bb(plane), ab(plane);
    for (std::size_t c = 0; c < s.channels; ++c) {
        const std::span<const double> pa(a.cells().data() + c * plane, plane);
        const std::span<const double> pb(b.cells().data() + c * plane, plane);
        for (std::size_t k = 0; k < plane; ++k) {
            aa[k] = pa[k] * pa[k];
            bb[k] = pb[k] * pb[k];
            ab[k] = pa[k] * pb[k];
        }
        const auto mu_a = filter(pa, s.rows, s.cols, wr, wc);
        const auto mu_b = filter(pb, s.rows, s.cols, wr, wc);
        const auto e_aa = filter(aa, s.rows, s.cols, wr, wc);
        const auto e_bb = filter(bb, s.rows, s.cols, wr, wc);
        const auto e_ab = filter(ab, s.rows, s.cols, wr, wc);
        double channel = 0.0;
        for (std::size_t k = 0; k < plane; ++k) {
            const double var_a = e_aa[k] - mu_a[k] * mu_a[k];
            const double var_b = e_bb[k] - mu_b[k] * mu_b[k];
            const double cov = e_ab[k] - mu_a[k] * mu_b[k];
            const double num = (2.0 * mu_a[k] * mu_b[k] + kSsimC1) * (2.0 * cov + kSsimC2);
            const double den = (mu_a[k] * mu_a[k] + mu_b[k] * mu_b[k] + kSsimC1) * (var_a + var_b + kSsimC2);
            channel += num / den;
        }
        total += channel / static_cast<double>(plane);
    }
    return total / static_cast<double>(s.channels);
}

double mae(const GridTensor& a, const GridTensor& b) {
    require_same_spec(a, b, "mae");
    const auto ca = a.cells();
    const auto cb = b.cells();
    double sum = 0.0;
    for (std::size_t k = 0; k < ca.size(); ++k) sum += std::abs(ca[k] - cb[k]);
    return sum / static_cast<double>(ca.size());
}

nlohmann::ordered_json MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["ssim"] = mean_ssim;
    j["mae"] = mean_mae;
    j["n"] = n;
    nlohmann::ordered_json per = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < n; ++k) {
        per.push_back({{"ssim", per_example_ssim[k]}, {"mae", per_example_mae[k]}});
    }
    j["per_example"] = std::move(per);
    return j;
}

MetricsReport evaluate(const VaeParams& params, std::span<const LayoutDoc> docs, const GridSpec& spec) {
    if (docs.empty()) throw ValidationError("evaluate: test split is empty");
    if (spec.dim() != params.config().input_dim) {
        throw ShapeError("evaluate: grid dimension " + std::to_string(spec.dim()) +
                         " does not match model input " + std::to_string(params.config().input_dim));
    }
    constexpr std::size_t kChunk = 256;
    MetricsReport report;
    report.n = docs.size();
    for (std::size_t start = 0; start < docs.size(); start += kChunk) {
        const std::size_t n = std::min(kChunk, docs.size() - start);
        std::vector<GridTensor> grids;
        grids.reserve(n);
        Matrix x(n, spec.dim());
        Matrix f(n, FeedbackVector::kSize);
        for (std::size_t r = 0; r < n; ++r) {
            grids.push_back(rasterize(docs[start + r], spec));
            std::ranges::copy(grids.back().cells(), x.row(r).begin());
            std::ranges::copy(feedback_from_layout(grids.back()).values(), f.row(r).begin());
        }
        const Matrix xhat = reconstruct_batch(x, f, params);
        for (std::size_t r = 0; r < n; ++r) {
            const GridTensor rec = unflatten(xhat.row(r), spec);
            report.per_example_ssim.push_back(ssim(grids[r], rec));
            report.per_example_mae.push_back(mae(grids[r], rec));
        }
    }
    double s = 0.0, m = 0.0;
    for (std::size_t k = 0; k < report.n; ++k) {
        s += report.per_example_ssim[k];
        m += report.per_example_mae[k];
    }
    report.mean_ssim = s / static_cast<double>(report.n);
    report.mean_mae = m / static_cast<double>(report.n);
    return report;
}

}  // namespace layoutvae
