#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <utility>

#include "layoutvae/errors.hpp"
#include "layoutvae/vae.hpp"

// Layout (little-endian):
//   "VAEW" | u32 version=1 | u32 flags (bit0 feedback, bit1 deterministic)
//   | u32 D | u32 L | u32 F | u32 n_hidden | n_hidden x u32 width
//   | every ParamTensor value in VaeParams::tensors() order as f64, row-major.

namespace layoutvae {

namespace {

constexpr char kMagic[4] = {'V', 'A', 'E', 'W'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagFeedback = 1u << 0;
constexpr std::uint32_t kFlagDeterministic = 1u << 1;
// Guards against absurd allocations from corrupted headers.
constexpr std::uint32_t kMaxDim = 1u << 24;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>(v >> (8 * k)));
}

void put_f64(std::vector<unsigned char>& out, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<unsigned char>(bits >> (8 * k)));
}

class Reader {
public:
    explicit Reader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(std::string("weight file truncated while reading ") + what);
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes_[pos_ + k]) << (8 * k);
        pos_ += 4;
        return v;
    }
    double f64(const char* what) {
        need(8, what);
        std::uint64_t bits = 0;
        for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes_[pos_ + k]) << (8 * k);
        pos_ += 8;
        return std::bit_cast<double>(bits);
    }
    std::span<const unsigned char> take(std::size_t n, const char* what) {
        need(n, what);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    std::span<const unsigned char> bytes_;
    std::size_t pos_ = 0;
};

std::uint32_t dim_field(Reader& r, const char* what) {
    const std::uint32_t v = r.u32(what);
    if (v == 0 || v > kMaxDim) throw FormatError(std::string("weight file has invalid ") + what);
    return v;
}

}  // namespace

std::vector<unsigned char> serialize_params(const VaeParams& params) {
    const VaeConfig& cfg = params.config();
    std::vector<unsigned char> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, kVersion);
    std::uint32_t flags = 0;
    if (cfg.feedback_enabled) flags |= kFlagFeedback;
    if (cfg.deterministic_mode) flags |= kFlagDeterministic;
    put_u32(out, flags);
    put_u32(out, static_cast<std::uint32_t>(cfg.input_dim));
    put_u32(out, static_cast<std::uint32_t>(cfg.latent_dim));
    put_u32(out, static_cast<std::uint32_t>(cfg.feedback_dim));
    put_u32(out, static_cast<std::uint32_t>(cfg.hidden.size()));
    for (auto h : cfg.hidden) put_u32(out, static_cast<std::uint32_t>(h));
    for (const ParamTensor* t : params.tensors()) {
        for (double v : t->value.data()) put_f64(out, v);
    }
    return out;
}

VaeParams deserialize_params(std::span<const unsigned char> bytes) {
    Reader r(bytes);
    const auto magic = r.take(4, "magic");
    if (std::memcmp(magic.data(), kMagic, 4) != 0) {
        std::string seen;
        for (unsigned char c : magic) {
            seen += (c >= 0x20 && c < 0x7f) ? static_cast<char>(c) : '?';
        }
        throw FormatError("weight file has bad magic '" + seen + "', expected 'VAEW'");
    }
    const std::uint32_t version = r.u32("version");
    if (version != kVersion) {
        throw FormatError("unsupported weight file version " + std::to_string(version));
    }
    const std::uint32_t flags = r.u32("flags");
    if (flags & ~(kFlagFeedback | kFlagDeterministic)) throw FormatError("weight file has unknown flags");

    VaeConfig cfg;
    cfg.feedback_enabled = (flags & kFlagFeedback) != 0;
    cfg.deterministic_mode = (flags & kFlagDeterministic) != 0;
    cfg.input_dim = dim_field(r, "input dim");
    cfg.latent_dim = dim_field(r, "latent dim");
    cfg.feedback_dim = dim_field(r, "feedback dim");
    const std::uint32_t n_hidden = dim_field(r, "hidden layer count");
    if (n_hidden > 64) throw FormatError("weight file has too many hidden layers");
    cfg.hidden.clear();
    for (std::uint32_t k = 0; k < n_hidden; ++k) cfg.hidden.push_back(dim_field(r, "hidden width"));
    if (cfg.feedback_dim != FeedbackVector::kSize) {
        throw FormatError("weight file feedback dim " + std::to_string(cfg.feedback_dim) +
                          " is not " + std::to_string(FeedbackVector::kSize));
    }

    VaeParams params = VaeParams::zeros(cfg);
    std::size_t expected = 0;
    for (const ParamTensor* t : std::as_const(params).tensors()) expected += t->value.size();
    if (r.remaining() != expected * 8) {
        throw FormatError("weight file payload is " + std::to_string(r.remaining()) +
                          " bytes, header implies " + std::to_string(expected * 8));
    }
    for (ParamTensor* t : params.tensors()) {
        for (double& v : t->value.data()) v = r.f64("parameters");
    }
    if (!params.all_finite()) throw FormatError("weight file contains non-finite parameters");
    return params;
}

void save_params(const VaeParams& params, const std::filesystem::path& path) {
    const auto bytes = serialize_params(params);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

VaeParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weight file '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
    return deserialize_params(bytes);
}

}  // namespace layoutvae
