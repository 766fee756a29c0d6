#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "layoutvae/layout.hpp"
#include "layoutvae/vae.hpp"

namespace layoutvae {

/// {"spec": {"c", "h", "w"}, "cells": [flat, channel-major]}
nlohmann::json grid_to_json(const GridTensor& g);
/// Throws ValidationError when the spec differs from `expected` or a cell is out of range.
GridTensor grid_from_json(const nlohmann::json& j, const GridSpec& expected);

nlohmann::json feedback_to_json(const FeedbackVector& f);
/// Missing fields fall back to neutral; entries must lie in [0, 1].
FeedbackVector feedback_from_json(const nlohmann::json& j);

enum class EventKind { Click, Dwell };

struct FeedbackEvent {
    EventKind kind = EventKind::Click;
    ElementClass cls = ElementClass::Text;  // clicks
    std::size_t quadrant = 0;               // dwell: 0 TL, 1 TR, 2 BL, 3 BR
    double seconds = 1.0;                   // dwell duration
};

/// Interaction events reduced into a feedback vector: each click adds 0.2
/// to its class, each dwell-second adds 0.1 to its quadrant, and results are
/// clamped to [0, 1]. With decay on, an event k places from the newest is
/// scaled by 0.9^k.
struct SessionFeedback {
    static constexpr double kClickDelta = 0.2;
    static constexpr double kDwellDelta = 0.1;
    static constexpr double kDecay = 0.9;

    std::vector<FeedbackEvent> events;
    bool decay = false;

    FeedbackVector reduce(const FeedbackVector& start = FeedbackVector::neutral()) const;
};

FeedbackEvent event_from_json(const nlohmann::json& j);

struct ServiceResponse {
    int status = 200;
    std::string body;
};

/// Request handlers over a frozen model. Every method is const and safe to
/// call concurrently; seeded requests are reproducible.
class InferenceService {
public:
    static constexpr std::size_t kMaxCount = 256;
    static constexpr std::size_t kMaxSteps = 256;

    InferenceService(VaeParams params, GridSpec spec);

    const VaeParams& params() const noexcept { return params_; }
    const GridSpec& spec() const noexcept { return spec_; }

    ServiceResponse model_info() const;
    ServiceResponse generate(const std::string& body) const;
    ServiceResponse encode(const std::string& body) const;
    ServiceResponse interpolate(const std::string& body) const;
    ServiceResponse reduce_feedback(const std::string& body) const;

private:
    nlohmann::json decode_rows(const Matrix& z, const FeedbackVector& f) const;

    VaeParams params_;
    GridSpec spec_;
};

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path studio_dir;
};

/// Runs the HTTP API until `stop` becomes true. `on_ready` fires once the
/// socket is bound, with the bound port. Returns false if the address
/// cannot be bound.
bool run_server(const InferenceService& service, const ServeOptions& options,
                const std::atomic<bool>& stop, std::ostream& log,
                const std::function<void(int)>& on_ready = {});

}  // namespace layoutvae
