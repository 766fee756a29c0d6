#include "layoutvae/vae.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "layoutvae/errors.hpp"

namespace layoutvae {

void VaeConfig::validate() const {
    if (input_dim < 1 || latent_dim < 1 || hidden.empty()) {
        throw ValidationError("vae config: input_dim, latent_dim and hidden widths must be >= 1");
    }
    for (auto h : hidden) {
        if (h < 1) throw ValidationError("vae config: hidden widths must be >= 1");
    }
    if (feedback_dim != FeedbackVector::kSize) {
        throw ValidationError("vae config: feedback_dim must be " +
                              std::to_string(FeedbackVector::kSize));
    }
    if (!(kl_weight >= 0.0) || !std::isfinite(kl_weight)) {
        throw ValidationError("vae config: kl_weight must be >= 0");
    }
    if (!(feedback_dropout >= 0.0 && feedback_dropout <= 1.0)) {
        throw ValidationError("vae config: feedback_dropout must lie in [0, 1]");
    }
}

FeedbackVector FeedbackVector::neutral() noexcept {
    FeedbackVector f;
    f.class_weights.fill(0.5);
    f.quadrant_weights.fill(0.5);
    return f;
}

FeedbackVector FeedbackVector::from_values(std::span<const double> values) {
    if (values.size() != kSize) {
        throw ShapeError("feedback vector needs " + std::to_string(kSize) + " values, got " +
                         std::to_string(values.size()));
    }
    FeedbackVector f;
    std::copy_n(values.begin(), kNumClasses, f.class_weights.begin());
    std::copy_n(values.begin() + kNumClasses, 4, f.quadrant_weights.begin());
    f.validate();
    return f;
}

std::array<double, FeedbackVector::kSize> FeedbackVector::values() const noexcept {
    std::array<double, kSize> out{};
    std::copy(class_weights.begin(), class_weights.end(), out.begin());
    std::copy(quadrant_weights.begin(), quadrant_weights.end(), out.begin() + kNumClasses);
    return out;
}

void FeedbackVector::validate() const {
    for (double v : values()) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw ValidationError("feedback weights must lie in [0, 1]");
        }
    }
}

namespace {

Dense make_dense(std::size_t in, std::size_t out) {
    return {ParamTensor(Matrix(in, out)), ParamTensor(Matrix(1, out))};
}

VaeParams shaped(const VaeConfig& config) {
    config.validate();
    VaeParams p;
    p.mutable_config() = config;
    std::size_t prev = config.input_dim;
    for (auto h : config.hidden) {
        p.encoder.push_back(make_dense(prev, h));
        prev = h;
    }
    p.mu_head = make_dense(prev, config.latent_dim);
    p.logvar_head = make_dense(prev, config.latent_dim);
    prev = config.decoder_input_dim();
    for (auto it = config.hidden.rbegin(); it != config.hidden.rend(); ++it) {
        p.decoder.push_back(make_dense(prev, *it));
        prev = *it;
    }
    p.output = make_dense(prev, config.input_dim);
    return p;
}

void fill_normal(Matrix& m, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : m.data()) v = dist(rng);
}

}  // namespace

VaeParams VaeParams::zeros(const VaeConfig& config) { return shaped(config); }

VaeParams VaeParams::init(const VaeConfig& config, std::uint64_t seed) {
    VaeParams p = shaped(config);
    std::mt19937_64 rng(seed);
    auto init_layer = [&](Dense& d, bool relu) {
        const double fan_in = static_cast<double>(d.w.value.rows());
        fill_normal(d.w.value, std::sqrt((relu ? 2.0 : 1.0) / fan_in), rng);
    };
    for (auto& d : p.encoder) init_layer(d, true);
    init_layer(p.mu_head, false);
    init_layer(p.logvar_head, false);
    for (auto& d : p.decoder) init_layer(d, true);
    init_layer(p.output, false);
    return p;
}

std::vector<ParamTensor*> VaeParams::tensors() {
    std::vector<ParamTensor*> out;
    auto push = [&](Dense& d) {
        out.push_back(&d.w);
        out.push_back(&d.b);
    };
    for (auto& d : encoder) push(d);
    push(mu_head);
    push(logvar_head);
    for (auto& d : decoder) push(d);
    push(output);
    return out;
}

std::vector<const ParamTensor*> VaeParams::tensors() const {
    auto mut = const_cast<VaeParams*>(this)->tensors();
    return {mut.begin(), mut.end()};
}

void VaeParams::zero_grad() {
    for (auto* t : tensors()) t->zero_grad();
}

bool VaeParams::all_finite() const {
    const auto ts = tensors();
    return std::all_of(ts.begin(), ts.end(), [](const ParamTensor* t) { return t->value.all_finite(); });
}

std::size_t VaeParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto* t : tensors()) n += t->value.size();
    return n;
}

LossParts combine_loss(double recon, double kl, const VaeConfig& config) noexcept {
    return {recon + config.effective_kl_weight() * kl, recon, kl};
}

namespace {

struct Trace {
    std::vector<LayerCache> enc;
    LayerCache mu_cache;
    LayerCache lv_cache;
    Matrix mu;
    Matrix lv_raw;
    Matrix lv;
    Matrix z;
    std::vector<LayerCache> dec;
    LayerCache out_cache;
    Matrix xhat;
};

void check_batch(const Matrix& x, const Matrix& feedback, const VaeConfig& cfg) {
    if (x.cols() != cfg.input_dim) {
        throw ShapeError("input has " + std::to_string(x.cols()) + " features, model expects " +
                         std::to_string(cfg.input_dim));
    }
    if (cfg.feedback_enabled && (feedback.cols() != cfg.feedback_dim || feedback.rows() != x.rows())) {
        throw ShapeError("feedback batch " + feedback.shape_str() + " does not match input batch " +
                         x.shape_str());
    }
}

Matrix decoder_input(const Matrix& z, const Matrix& feedback, const VaeConfig& cfg) {
    if (!cfg.feedback_enabled) return z;
    Matrix in(z.rows(), cfg.decoder_input_dim());
    for (std::size_t r = 0; r < z.rows(); ++r) {
        auto dst = in.row(r);
        auto zr = z.row(r);
        auto fr = feedback.row(r);
        std::copy(zr.begin(), zr.end(), dst.begin());
        std::copy(fr.begin(), fr.end(), dst.begin() + static_cast<std::ptrdiff_t>(zr.size()));
    }
    return in;
}

void run_encoder(const Matrix& x, const VaeParams& p, Trace& t) {
    Matrix h = x;
    t.enc.clear();
    for (const auto& d : p.encoder) {
        auto [y, cache] = affine_forward(h, d.w, d.b, Activation::Relu);
        t.enc.push_back(std::move(cache));
        h = std::move(y);
    }
    std::tie(t.mu, t.mu_cache) = affine_forward(h, p.mu_head.w, p.mu_head.b, Activation::None);
    std::tie(t.lv_raw, t.lv_cache) =
        affine_forward(h, p.logvar_head.w, p.logvar_head.b, Activation::None);
    t.lv = t.lv_raw;
    for (double& v : t.lv.data()) v = std::clamp(v, kLogVarMin, kLogVarMax);
}

void run_decoder(const Matrix& z, const Matrix& feedback, const VaeParams& p, Trace& t) {
    Matrix h = decoder_input(z, feedback, p.config());
    t.dec.clear();
    for (const auto& d : p.decoder) {
        auto [y, cache] = affine_forward(h, d.w, d.b, Activation::Relu);
        t.dec.push_back(std::move(cache));
        h = std::move(y);
    }
    std::tie(t.xhat, t.out_cache) = affine_forward(h, p.output.w, p.output.b, Activation::Sigmoid);
}

double bernoulli_term(double x, double xhat) {
    const double p = std::clamp(xhat, kProbClamp, 1.0 - kProbClamp);
    return -(x * std::log(p) + (1.0 - x) * std::log(1.0 - p));
}

void add_recon(CompensatedSum& s, std::span<const double> x, std::span<const double> xhat,
               ReconLoss kind) {
    if (kind == ReconLoss::Bernoulli) {
        for (std::size_t j = 0; j < x.size(); ++j) s.add(bernoulli_term(x[j], xhat[j]));
    } else {
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double d = x[j] - xhat[j];
            s.add(0.5 * d * d);
        }
    }
}

void add_kl(CompensatedSum& s, std::span<const double> mu, std::span<const double> lv) {
    for (std::size_t i = 0; i < mu.size(); ++i) {
        s.add(0.5 * (mu[i] * mu[i] + std::exp(lv[i]) - 1.0 - lv[i]));
    }
}

double recon_row(std::span<const double> x, std::span<const double> xhat, ReconLoss kind) {
    CompensatedSum s;
    add_recon(s, x, xhat, kind);
    return s.value();
}

double kl_row(std::span<const double> mu, std::span<const double> lv) {
    CompensatedSum s;
    add_kl(s, mu, lv);
    return s.value();
}

LossParts batch_loss(const Matrix& x, const Trace& t, const VaeConfig& cfg) {
    CompensatedSum recon;
    CompensatedSum kl;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        add_recon(recon, x.row(r), t.xhat.row(r), cfg.recon_loss);
        add_kl(kl, t.mu.row(r), t.lv.row(r));
    }
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    return combine_loss(recon.value() * inv_n, kl.value() * inv_n, cfg);
}

Matrix backprop_stack(Matrix grad, std::vector<Dense>& layers, const std::vector<LayerCache>& caches) {
    for (std::size_t k = layers.size(); k-- > 0;) {
        grad = affine_backward(grad, caches[k], layers[k].w, layers[k].b);
    }
    return grad;
}

}  // namespace

namespace {

LossParts forward_loss(const Matrix& x, const Matrix& feedback, const Matrix& eps,
                       const VaeParams& params, Trace& t) {
    const VaeConfig& cfg = params.config();
    check_batch(x, feedback, cfg);
    const std::size_t n = x.rows();
    if (n == 0) throw ShapeError("elbo: empty batch");
    if (!cfg.deterministic_mode && (eps.rows() != n || eps.cols() != cfg.latent_dim)) {
        throw ShapeError("noise batch " + eps.shape_str() + " does not match (" + std::to_string(n) +
                         " x " + std::to_string(cfg.latent_dim) + ")");
    }
    run_encoder(x, params, t);
    t.z = t.mu;
    if (!cfg.deterministic_mode) {
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t i = 0; i < cfg.latent_dim; ++i) {
                t.z(r, i) = t.mu(r, i) + std::exp(0.5 * t.lv(r, i)) * eps(r, i);
            }
        }
    }
    run_decoder(t.z, feedback, params, t);

    const LossParts parts = batch_loss(x, t, cfg);
    if (!std::isfinite(parts.total)) throw NumericError("elbo: non-finite loss");
    return parts;
}

}  // namespace

LossParts elbo_batch(const Matrix& x, const Matrix& feedback, const Matrix& eps, VaeParams& params,
                     bool accumulate_grads) {
    const VaeConfig& cfg = params.config();
    Trace t;
    const LossParts parts = forward_loss(x, feedback, eps, params, t);
    if (!accumulate_grads) return parts;
    const std::size_t n = x.rows();
    const double inv_n = 1.0 / static_cast<double>(n);

    // d(mean loss)/d xhat
    Matrix dxhat(n, cfg.input_dim);
    for (std::size_t k = 0; k < dxhat.size(); ++k) {
        const double xv = x.data()[k];
        const double yv = t.xhat.data()[k];
        double g;
        if (cfg.recon_loss == ReconLoss::Bernoulli) {
            g = (yv > kProbClamp && yv < 1.0 - kProbClamp) ? (-xv / yv + (1.0 - xv) / (1.0 - yv)) : 0.0;
        } else {
            g = yv - xv;
        }
        dxhat.data()[k] = g * inv_n;
    }
    Matrix grad = affine_backward(dxhat, t.out_cache, params.output.w, params.output.b);
    grad = backprop_stack(std::move(grad), params.decoder, t.dec);

    const double beta = cfg.effective_kl_weight();
    Matrix dmu(n, cfg.latent_dim);
    Matrix dlv(n, cfg.latent_dim);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < cfg.latent_dim; ++i) {
            const double dz = grad(r, i);
            const double mu = t.mu(r, i);
            const double lv = t.lv(r, i);
            double gmu = dz;
            double glv = 0.0;
            if (!cfg.deterministic_mode) {
                glv = dz * 0.5 * std::exp(0.5 * lv) * eps(r, i);
                gmu += beta * inv_n * mu;
                glv += beta * inv_n * 0.5 * (std::exp(lv) - 1.0);
            }
            const double raw = t.lv_raw(r, i);
            dmu(r, i) = gmu;
            dlv(r, i) = (raw >= kLogVarMin && raw <= kLogVarMax) ? glv : 0.0;
        }
    }
    Matrix dh = affine_backward(dmu, t.mu_cache, params.mu_head.w, params.mu_head.b);
    Matrix dh_lv = affine_backward(dlv, t.lv_cache, params.logvar_head.w, params.logvar_head.b);
    for (std::size_t k = 0; k < dh.size(); ++k) dh.data()[k] += dh_lv.data()[k];
    backprop_stack(std::move(dh), params.encoder, t.enc);
    return parts;
}

LossParts eval_loss_batch(const Matrix& x, const Matrix& feedback, const VaeParams& params) {
    const VaeConfig& cfg = params.config();
    check_batch(x, feedback, cfg);
    if (x.rows() == 0) throw ShapeError("eval_loss_batch: empty batch");
    Trace t;
    run_encoder(x, params, t);
    run_decoder(t.mu, feedback, params, t);
    return batch_loss(x, t, cfg);
}

std::pair<Matrix, Matrix> encode_batch(const Matrix& x, const VaeParams& params) {
    if (x.cols() != params.config().input_dim) {
        throw ShapeError("encode: input has " + std::to_string(x.cols()) + " features, model expects " +
                         std::to_string(params.config().input_dim));
    }
    Trace t;
    run_encoder(x, params, t);
    return {std::move(t.mu), std::move(t.lv)};
}

Matrix decode_batch(const Matrix& z, const Matrix& feedback, const VaeParams& params) {
    const VaeConfig& cfg = params.config();
    if (z.cols() != cfg.latent_dim) {
        throw ShapeError("decode: latent has " + std::to_string(z.cols()) + " entries, model expects " +
                         std::to_string(cfg.latent_dim));
    }
    if (cfg.feedback_enabled && (feedback.cols() != cfg.feedback_dim || feedback.rows() != z.rows())) {
        throw ShapeError("decode: feedback batch " + feedback.shape_str() + " does not match latent batch " +
                         z.shape_str());
    }
    Trace t;
    run_decoder(z, feedback, params, t);
    return std::move(t.xhat);
}

Matrix reconstruct_batch(const Matrix& x, const Matrix& feedback, const VaeParams& params) {
    check_batch(x, feedback, params.config());
    Trace t;
    run_encoder(x, params, t);
    run_decoder(t.mu, feedback, params, t);
    return std::move(t.xhat);
}

GaussianLatent encode(std::span<const double> x, const VaeParams& params) {
    auto [mu, lv] = encode_batch(Matrix::row_vector(x), params);
    return {{mu.data().begin(), mu.data().end()}, {lv.data().begin(), lv.data().end()}};
}

std::vector<double> reparameterize(const GaussianLatent& lat, std::span<const double> eps) {
    if (eps.size() != lat.mu.size() || lat.log_var.size() != lat.mu.size()) {
        throw ShapeError("reparameterize: noise length " + std::to_string(eps.size()) +
                         " does not match latent length " + std::to_string(lat.mu.size()));
    }
    std::vector<double> z(lat.mu.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] = lat.mu[i] + std::exp(0.5 * lat.log_var[i]) * eps[i];
    }
    return z;
}

namespace {
Matrix feedback_row(const FeedbackVector& f) {
    const auto v = f.values();
    return Matrix::row_vector(v);
}
}  // namespace

std::vector<double> decode(std::span<const double> z, const FeedbackVector& f, const VaeParams& params) {
    Matrix out = decode_batch(Matrix::row_vector(z), feedback_row(f), params);
    return {out.data().begin(), out.data().end()};
}

double kl_divergence(const GaussianLatent& lat) {
    if (lat.mu.size() != lat.log_var.size()) throw ShapeError("kl_divergence: mu/log_var length mismatch");
    return kl_row(lat.mu, lat.log_var);
}

double recon_loss(std::span<const double> x, std::span<const double> xhat, ReconLoss kind) {
    if (x.size() != xhat.size()) {
        throw ShapeError("recon_loss: lengths " + std::to_string(x.size()) + " and " +
                         std::to_string(xhat.size()) + " differ");
    }
    return recon_row(x, xhat, kind);
}

LossParts elbo_loss(std::span<const double> x, const FeedbackVector& f, std::span<const double> eps,
                    const VaeParams& params) {
    Trace t;
    return forward_loss(Matrix::row_vector(x), feedback_row(f), Matrix::row_vector(eps), params, t);
}

std::vector<double> reconstruct(std::span<const double> x, const FeedbackVector& f, const VaeParams& params) {
    Matrix out = reconstruct_batch(Matrix::row_vector(x), feedback_row(f), params);
    return {out.data().begin(), out.data().end()};
}

FeedbackVector feedback_from_layout(const GridTensor& g) {
    const GridSpec& spec = g.spec();
    FeedbackVector f;
    const std::size_t classes = std::min(spec.channels, kNumClasses);
    for (std::size_t c = 0; c < classes; ++c) f.class_weights[c] = g.channel_mass(c);

    for (std::size_t c = 0; c < spec.channels; ++c) {
        for (std::size_t i = 0; i < spec.rows; ++i) {
            const bool bottom = (static_cast<double>(i) + 0.5) / static_cast<double>(spec.rows) >= 0.5;
            for (std::size_t j = 0; j < spec.cols; ++j) {
                const bool right = (static_cast<double>(j) + 0.5) / static_cast<double>(spec.cols) >= 0.5;
                f.quadrant_weights[(bottom ? 2 : 0) + (right ? 1 : 0)] += g.at(c, i, j);
            }
        }
    }
    auto normalize = [](auto& arr) {
        const double top = *std::max_element(arr.begin(), arr.end());
        for (double& v : arr) v = top > 0.0 ? v / top : 0.0;
    };
    normalize(f.class_weights);
    normalize(f.quadrant_weights);
    return f;
}

Matrix sample_latents(std::size_t n, std::size_t latent_dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix z(n, latent_dim);
    for (double& v : z.data()) v = normal(rng);
    return z;
}

std::vector<GridTensor> generate(std::size_t n, const FeedbackVector& f, std::uint64_t seed,
                                 const VaeParams& params, const GridSpec& spec) {
    const VaeConfig& cfg = params.config();
    if (spec.dim() != cfg.input_dim) {
        throw ShapeError("generate: grid spec holds " + std::to_string(spec.dim()) +
                         " cells, model outputs " + std::to_string(cfg.input_dim));
    }
    std::vector<GridTensor> out;
    if (n == 0) return out;
    const Matrix z = sample_latents(n, cfg.latent_dim, seed);
    Matrix fb(n, cfg.feedback_dim);
    const auto fv = f.values();
    for (std::size_t r = 0; r < n; ++r) std::copy(fv.begin(), fv.end(), fb.row(r).begin());
    const Matrix xhat = decode_batch(z, fb, params);
    out.reserve(n);
    for (std::size_t r = 0; r < n; ++r) out.push_back(unflatten(xhat.row(r), spec));
    return out;
}

}  // namespace layoutvae
