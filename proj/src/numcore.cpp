#include "layoutvae/numcore.hpp"

#include <algorithm>
#include <cmath>

#include "layoutvae/errors.hpp"

namespace layoutvae {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str());
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged rows in matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::row_vector(std::span<const double> values) {
    return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double v) noexcept { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_str() const {
    return "(" + std::to_string(rows_) + " x " + std::to_string(cols_) + ")";
}

namespace {

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
    if (!ok) {
        throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul", a, b);
    Matrix out(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* orow = out.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "matmul_tn", a, b);
    Matrix out(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double* brow = b.row(r).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double ari = a(r, i);
            if (ari == 0.0) continue;
            double* orow = out.row(i).data();
            for (std::size_t j = 0; j < n; ++j) orow[j] += ari * brow[j];
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.cols(), "matmul_nt", a, b);
    Matrix out(a.rows(), b.rows());
    const std::size_t k = a.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* arow = a.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* brow = b.row(j).data();
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
            out(i, j) = acc;
        }
    }
    return out;
}

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::pair<Matrix, LayerCache> affine_forward(const Matrix& x, const ParamTensor& w,
                                             const ParamTensor& b, Activation act) {
    if (b.value.rows() != 1 || b.value.cols() != w.value.cols()) {
        throw ShapeError("affine_forward: bias " + b.value.shape_str() +
                         " does not match weight " + w.value.shape_str());
    }
    Matrix pre = matmul(x, w.value);
    const auto bias = b.value.row(0);
    for (std::size_t r = 0; r < pre.rows(); ++r) {
        auto row = pre.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
    }
    Matrix out = pre;
    switch (act) {
        case Activation::Relu:
            for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
            break;
        case Activation::Sigmoid:
            for (double& v : out.data()) v = sigmoid(v);
            break;
        case Activation::None:
            break;
    }
    LayerCache cache{x, std::move(pre), out, act};
    return {std::move(out), std::move(cache)};
}

Matrix affine_backward(const Matrix& dy, const LayerCache& cache, ParamTensor& w, ParamTensor& b) {
    if (!dy.same_shape(cache.output)) {
        throw ShapeError("affine_backward: upstream gradient " + dy.shape_str() +
                         " does not match layer output " + cache.output.shape_str());
    }
    if (!w.value.same_shape(w.grad) || w.value.rows() != cache.input.cols() ||
        w.value.cols() != dy.cols()) {
        throw ShapeError("affine_backward: weight " + w.value.shape_str() +
                         " inconsistent with cache input " + cache.input.shape_str());
    }
    Matrix dpre = dy;
    switch (cache.act) {
        case Activation::Relu: {
            auto gate = cache.pre_activation.data();
            auto d = dpre.data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                if (!(gate[i] > 0.0)) d[i] = 0.0;
            }
            break;
        }
        case Activation::Sigmoid: {
            auto y = cache.output.data();
            auto d = dpre.data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] *= y[i] * (1.0 - y[i]);
            break;
        }
        case Activation::None:
            break;
    }

    Matrix dw = matmul_tn(cache.input, dpre);
    auto wg = w.grad.data();
    auto dwd = dw.data();
    for (std::size_t i = 0; i < wg.size(); ++i) wg[i] += dwd[i];

    auto bg = b.grad.row(0);
    for (std::size_t r = 0; r < dpre.rows(); ++r) {
        auto row = dpre.row(r);
        for (std::size_t j = 0; j < row.size(); ++j) bg[j] += row[j];
    }
    return matmul_nt(dpre, w.value);
}

GradCheckResult finite_diff_check(std::span<ParamTensor* const> params,
                                  const std::function<double()>& loss, double eps,
                                  double noise_floor) {
    if (!(eps > 0.0)) throw ValidationError("finite_diff_check: eps must be positive");
    GradCheckResult result;
    for (std::size_t t = 0; t < params.size(); ++t) {
        ParamTensor& p = *params[t];
        auto values = p.value.data();
        auto grads = p.grad.data();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + eps;
            const double up = loss();
            values[i] = saved - eps;
            const double down = loss();
            values[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) {
                throw NumericError("finite_diff_check: non-finite loss at tensor " +
                                   std::to_string(t) + " index " + std::to_string(i));
            }
            const double numeric = (up - down) / (2.0 * eps);
            const double analytic = grads[i];
            const double denom =
                std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            const double abs_err = std::abs(analytic - numeric);
            const double rel = abs_err / denom;
            ++result.checked;
            result.max_abs_error = std::max(result.max_abs_error, abs_err);
            if (abs_err > noise_floor) {
                result.max_rel_error_above_floor = std::max(result.max_rel_error_above_floor, rel);
            }
            if (rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst_tensor = t;
                result.worst_index = i;
                result.analytic = analytic;
                result.numeric = numeric;
            }
        }
    }
    return result;
}

}  // namespace layoutvae
