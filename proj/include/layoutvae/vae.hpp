#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "layoutvae/layout.hpp"
#include "layoutvae/numcore.hpp"

namespace layoutvae {

enum class ReconLoss { Bernoulli, Gaussian };

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;
/// Clamp applied to decoder outputs inside the Bernoulli likelihood.
inline constexpr double kProbClamp = 1e-7;

struct VaeConfig {
    std::size_t input_dim = 1440;
    std::vector<std::size_t> hidden = {512, 256, 128};
    std::size_t latent_dim = 64;
    std::size_t feedback_dim = 10;
    ReconLoss recon_loss = ReconLoss::Bernoulli;
    double kl_weight = 1.0;
    /// AE ablation: z = mu, KL reported but excluded from the objective.
    bool deterministic_mode = false;
    bool feedback_enabled = true;
    double feedback_dropout = 0.3;

    void validate() const;
    std::size_t decoder_input_dim() const noexcept {
        return latent_dim + (feedback_enabled ? feedback_dim : 0);
    }
    /// The KL weight actually applied to the objective.
    double effective_kl_weight() const noexcept { return deterministic_mode ? 0.0 : kl_weight; }
};

/// Diagonal Gaussian q(z|x); log_var already clamped to [kLogVarMin, kLogVarMax].
struct GaussianLatent {
    std::vector<double> mu;
    std::vector<double> log_var;
};

/// Decoder conditioning: 6 per-class weights then 4 quadrant weights
/// (top-left, top-right, bottom-left, bottom-right).
struct FeedbackVector {
    static constexpr std::size_t kSize = kNumClasses + 4;

    std::array<double, kNumClasses> class_weights{};
    std::array<double, 4> quadrant_weights{};

    static FeedbackVector neutral() noexcept;
    static FeedbackVector from_values(std::span<const double> values);
    std::array<double, kSize> values() const noexcept;
    /// Throws ValidationError if any entry is outside [0, 1].
    void validate() const;

    friend bool operator==(const FeedbackVector&, const FeedbackVector&) = default;
};

struct LossParts {
    double total = 0.0;
    double recon = 0.0;
    double kl = 0.0;
};

struct Dense {
    ParamTensor w;
    ParamTensor b;
};

/// Encoder trunk, the two latent heads, decoder trunk, and output layer.
class VaeParams {
public:
    VaeParams() = default;
    /// Scaled-normal init: sqrt(2/fan_in) for ReLU layers, sqrt(1/fan_in)
    /// for the heads and the sigmoid output; zero biases.
    static VaeParams init(const VaeConfig& config, std::uint64_t seed);
    /// All-zero parameters of the right shapes.
    static VaeParams zeros(const VaeConfig& config);

    const VaeConfig& config() const noexcept { return config_; }
    VaeConfig& mutable_config() noexcept { return config_; }

    std::vector<Dense> encoder;
    Dense mu_head;
    Dense logvar_head;
    std::vector<Dense> decoder;
    Dense output;

    /// Every tensor in serialization order (each weight followed by its bias).
    std::vector<ParamTensor*> tensors();
    std::vector<const ParamTensor*> tensors() const;

    void zero_grad();
    bool all_finite() const;
    std::size_t parameter_count() const;

private:
    VaeConfig config_;
};

LossParts combine_loss(double recon, double kl, const VaeConfig& config) noexcept;

GaussianLatent encode(std::span<const double> x, const VaeParams& params);
std::vector<double> reparameterize(const GaussianLatent& lat, std::span<const double> eps);
std::vector<double> decode(std::span<const double> z, const FeedbackVector& f, const VaeParams& params);
double kl_divergence(const GaussianLatent& lat);
double recon_loss(std::span<const double> x, std::span<const double> xhat, ReconLoss kind);

/// Negative ELBO for one example with explicit noise.
LossParts elbo_loss(std::span<const double> x, const FeedbackVector& f, std::span<const double> eps,
                    const VaeParams& params);

/// Batched forward/backward: rows of `x`, `feedback`, `eps` are examples.
/// Returns the per-example mean LossParts and, when `accumulate_grads`,
/// adds the gradient of that mean into `params`.
LossParts elbo_batch(const Matrix& x, const Matrix& feedback, const Matrix& eps, VaeParams& params,
                     bool accumulate_grads);

/// Batched mean loss with z = mu (validation path). No gradients.
LossParts eval_loss_batch(const Matrix& x, const Matrix& feedback, const VaeParams& params);

/// Batched deterministic reconstruction (z = mu).
Matrix reconstruct_batch(const Matrix& x, const Matrix& feedback, const VaeParams& params);
/// Batched encoder; returns (mu, clamped log_var).
std::pair<Matrix, Matrix> encode_batch(const Matrix& x, const VaeParams& params);
Matrix decode_batch(const Matrix& z, const Matrix& feedback, const VaeParams& params);

std::vector<double> reconstruct(std::span<const double> x, const FeedbackVector& f,
                                const VaeParams& params);

/// Class masses normalized by the heaviest class; quadrant masses likewise.
FeedbackVector feedback_from_layout(const GridTensor& g);

/// n x L standard-normal latents drawn row-major from mt19937_64(seed);
/// the draws generate() decodes.
Matrix sample_latents(std::size_t n, std::size_t latent_dim, std::uint64_t seed);

std::vector<GridTensor> generate(std::size_t n, const FeedbackVector& f, std::uint64_t seed,
                                 const VaeParams& params, const GridSpec& spec = {});

/// Weight file: "VAEW", version 1, little-endian. See README for the layout.
void save_params(const VaeParams& params, const std::filesystem::path& path);
VaeParams load_params(const std::filesystem::path& path);
std::vector<unsigned char> serialize_params(const VaeParams& params);
VaeParams deserialize_params(std::span<const unsigned char> bytes);

}  // namespace layoutvae
