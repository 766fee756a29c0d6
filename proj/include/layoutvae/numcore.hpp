#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace layoutvae {

/// Dense row-major matrix of doubles. Batches are stored one example per row.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix row_vector(std::span<const double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    void fill(double v) noexcept;
    bool same_shape(const Matrix& other) const noexcept {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }
    bool all_finite() const noexcept;

    /// "(rows x cols)", used in error messages.
    std::string shape_str() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// a * b. Throws ShapeError naming both shapes when a.cols != b.rows.
Matrix matmul(const Matrix& a, const Matrix& b);
/// transpose(a) * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * transpose(b) without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// A trainable value together with its accumulated gradient.
struct ParamTensor {
    Matrix value;
    Matrix grad;

    ParamTensor() = default;
    explicit ParamTensor(Matrix v) : value(std::move(v)), grad(value.rows(), value.cols()) {}

    void zero_grad() noexcept { grad.fill(0.0); }
};

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

enum class Activation { None, Relu, Sigmoid };

/// Branch-stable logistic function; never overflows.
double sigmoid(double x) noexcept;

struct LayerCache {
    Matrix input;
    Matrix pre_activation;
    Matrix output;
    Activation act = Activation::None;
};

/// y = act(x W + b), with b (1 x out) broadcast over rows.
std::pair<Matrix, LayerCache> affine_forward(const Matrix& x, const ParamTensor& w,
                                             const ParamTensor& b, Activation act);

/// Accumulates dL/dW and dL/db into the grads of w and b and returns dL/dx.
Matrix affine_backward(const Matrix& dy, const LayerCache& cache, ParamTensor& w, ParamTensor& b);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_tensor = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;
    double max_abs_error = 0.0;
    /// Largest relative error among entries whose absolute error exceeds
    /// the caller's noise floor.
    double max_rel_error_above_floor = 0.0;
};

/// Compares the gradients already stored in `params` against central
/// differences of `loss`, perturbing each value in place and restoring it.
/// Relative error uses the denominator max(|a|, |n|, 1e-8).
GradCheckResult finite_diff_check(std::span<ParamTensor* const> params,
                                  const std::function<double()>& loss, double eps,
                                  double noise_floor = 0.0);

}  // namespace layoutvae
