#include "layoutvae/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "layoutvae/errors.hpp"

namespace layoutvae {

namespace {

using nlohmann::json;

constexpr std::array<std::string_view, 4> kQuadrantNames = {"TL", "TR", "BL", "BR"};

ServiceResponse ok(const json& j) { return {200, j.dump()}; }
ServiceResponse bad_request(const std::string& msg) { return {400, json{{"error", msg}}.dump()}; }

json parse_body(const std::string& body) {
    if (body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("request body is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("request body must be a JSON object");
    return j;
}

std::vector<double> number_array(const json& j, const char* field) {
    if (!j.is_array()) throw ValidationError(std::string(field) + " must be an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number()) throw ValidationError(std::string(field) + " must contain only numbers");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ValidationError(std::string(field) + " must be finite");
        out.push_back(d);
    }
    return out;
}

std::vector<double> latent_field(const json& j, const char* field, std::size_t latent_dim) {
    if (!j.contains(field)) throw ValidationError(std::string("missing field ") + field);
    std::vector<double> z = number_array(j.at(field), field);
    if (z.size() != latent_dim) {
        throw ValidationError(std::string(field) + " has length " + std::to_string(z.size()) +
                              ", expected " + std::to_string(latent_dim));
    }
    return z;
}

std::size_t count_field(const json& j, const char* field, std::size_t fallback) {
    if (!j.contains(field)) return fallback;
    const json& v = j.at(field);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ValidationError(std::string(field) + " must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

template <typename F>
ServiceResponse guarded(F&& body) {
    try {
        return body();
    } catch (const ValidationError& e) {
        return bad_request(e.what());
    } catch (const ShapeError& e) {
        return bad_request(e.what());
    } catch (const FormatError& e) {
        return bad_request(e.what());
    } catch (const json::exception& e) {
        return bad_request(std::string("malformed request: ") + e.what());
    } catch (const std::exception& e) {
        return {500, json{{"error", e.what()}}.dump()};
    }
}

}  // namespace

json grid_to_json(const GridTensor& g) {
    const GridSpec& s = g.spec();
    return {{"spec", {{"c", s.channels}, {"h", s.rows}, {"w", s.cols}}},
            {"cells", std::vector<double>(g.cells().begin(), g.cells().end())}};
}

GridTensor grid_from_json(const json& j, const GridSpec& expected) {
    if (!j.is_object() || !j.contains("cells")) throw ValidationError("grid must be an object with cells");
    if (j.contains("spec")) {
        const json& s = j.at("spec");
        const GridSpec got{s.at("c").get<std::size_t>(), s.at("h").get<std::size_t>(),
                           s.at("w").get<std::size_t>()};
        if (got != expected) throw ValidationError("grid spec does not match the model");
    }
    const std::vector<double> cells = number_array(j.at("cells"), "cells");
    if (cells.size() != expected.dim()) {
        throw ValidationError("grid has " + std::to_string(cells.size()) + " cells, expected " +
                              std::to_string(expected.dim()));
    }
    for (double v : cells) {
        if (v < 0.0 || v > 1.0) throw ValidationError("grid cells must lie in [0, 1]");
    }
    return unflatten(cells, expected);
}

json feedback_to_json(const FeedbackVector& f) {
    return {{"class_weights", f.class_weights}, {"quadrant_weights", f.quadrant_weights}};
}

FeedbackVector feedback_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("feedback must be an object");
    FeedbackVector f = FeedbackVector::neutral();
    auto fill = [&](const char* field, auto& dest) {
        if (!j.contains(field)) return;
        const auto v = number_array(j.at(field), field);
        if (v.size() != dest.size()) {
            throw ValidationError(std::string(field) + " must have " + std::to_string(dest.size()) + " entries");
        }
        std::copy(v.begin(), v.end(), dest.begin());
    };
    fill("class_weights", f.class_weights);
    fill("quadrant_weights", f.quadrant_weights);
    f.validate();
    return f;
}

FeedbackEvent event_from_json(const json& j) {
    if (!j.is_object() || !j.contains("type")) throw ValidationError("event must be an object with a type");
    const auto type = j.at("type").get<std::string>();
    FeedbackEvent e;
    if (type == "click") {
        e.kind = EventKind::Click;
        const auto name = j.at("class").get<std::string>();
        const auto cls = parse_class(name);
        if (!cls) throw ValidationError("unknown element class '" + name + "'");
        e.cls = *cls;
    } else if (type == "dwell") {
        e.kind = EventKind::Dwell;
        const json& q = j.at("quadrant");
        if (q.is_string()) {
            const auto name = q.get<std::string>();
            const auto it = std::find(kQuadrantNames.begin(), kQuadrantNames.end(), name);
            if (it == kQuadrantNames.end()) throw ValidationError("unknown quadrant '" + name + "'");
            e.quadrant = static_cast<std::size_t>(it - kQuadrantNames.begin());
        } else {
            const auto idx = q.get<long long>();
            if (idx < 0 || idx > 3) throw ValidationError("quadrant index must be 0..3");
            e.quadrant = static_cast<std::size_t>(idx);
        }
        e.seconds = j.value("seconds", 1.0);
        if (!(e.seconds >= 0.0) || !std::isfinite(e.seconds)) {
            throw ValidationError("dwell seconds must be non-negative");
        }
    } else {
        throw ValidationError("unknown event type '" + type + "'");
    }
    return e;
}

FeedbackVector SessionFeedback::reduce(const FeedbackVector& start) const {
    FeedbackVector f = start;
    const std::size_t n = events.size();
    for (std::size_t k = 0; k < n; ++k) {
        const double scale = decay ? std::pow(kDecay, static_cast<double>(n - 1 - k)) : 1.0;
        const FeedbackEvent& e = events[k];
        if (e.kind == EventKind::Click) {
            f.class_weights[static_cast<std::size_t>(e.cls)] += kClickDelta * scale;
        } else {
            f.quadrant_weights[e.quadrant] += kDwellDelta * e.seconds * scale;
        }
    }
    for (double& v : f.class_weights) v = std::clamp(v, 0.0, 1.0);
    for (double& v : f.quadrant_weights) v = std::clamp(v, 0.0, 1.0);
    return f;
}

InferenceService::InferenceService(VaeParams params, GridSpec spec)
    : params_(std::move(params)), spec_(spec) {
    spec_.validate();
    if (spec_.dim() != params_.config().input_dim) {
        throw ShapeError("grid spec holds " + std::to_string(spec_.dim()) + " cells, model expects " +
                         std::to_string(params_.config().input_dim));
    }
}

json InferenceService::decode_rows(const Matrix& z, const FeedbackVector& f) const {
    Matrix fb(z.rows(), FeedbackVector::kSize);
    const auto fv = f.values();
    for (std::size_t r = 0; r < z.rows(); ++r) std::copy(fv.begin(), fv.end(), fb.row(r).begin());
    const Matrix xhat = z.rows() == 0 ? Matrix() : decode_batch(z, fb, params_);
    json grids = json::array(), svgs = json::array(), zs = json::array();
    for (std::size_t r = 0; r < z.rows(); ++r) {
        const GridTensor g = unflatten(xhat.row(r), spec_);
        grids.push_back(grid_to_json(g));
        svgs.push_back(render_svg(g));
        zs.push_back(std::vector<double>(z.row(r).begin(), z.row(r).end()));
    }
    return {{"z", std::move(zs)}, {"grids", std::move(grids)}, {"svgs", std::move(svgs)},
            {"feedback", feedback_to_json(f)}};
}

ServiceResponse InferenceService::model_info() const {
    const VaeConfig& c = params_.config();
    json classes = json::array();
    for (ElementClass k : kAllClasses) classes.push_back(class_name(k));
    return ok({{"latent_dim", c.latent_dim},
               {"input_dim", c.input_dim},
               {"feedback_dim", c.feedback_dim},
               {"hidden", c.hidden},
               {"grid", {{"c", spec_.channels}, {"h", spec_.rows}, {"w", spec_.cols}}},
               {"recon_loss", c.recon_loss == ReconLoss::Bernoulli ? "bernoulli" : "gaussian"},
               {"deterministic_mode", c.deterministic_mode},
               {"feedback_enabled", c.feedback_enabled},
               {"parameter_count", params_.parameter_count()},
               {"classes", std::move(classes)},
               {"quadrants", kQuadrantNames}});
}

ServiceResponse InferenceService::generate(const std::string& body) const {
    return guarded([&] {
        const json req = parse_body(body);
        const FeedbackVector f =
            req.contains("feedback") ? feedback_from_json(req.at("feedback")) : FeedbackVector::neutral();
        const std::uint64_t seed = req.contains("seed") ? req.at("seed").get<std::uint64_t>() : 0;
        Matrix z;
        if (req.contains("z")) {
            z = Matrix::row_vector(latent_field(req, "z", params_.config().latent_dim));
        } else {
            const std::size_t count = count_field(req, "count", 1);
            if (count > kMaxCount) {
                throw ValidationError("count exceeds the limit of " + std::to_string(kMaxCount));
            }
            z = sample_latents(count, params_.config().latent_dim, seed);
        }
        json out = decode_rows(z, f);
        out["seed"] = seed;
        return ok(out);
    });
}

ServiceResponse InferenceService::encode(const std::string& body) const {
    return guarded([&] {
        const json req = parse_body(body);
        if (!req.contains("grid")) throw ValidationError("missing field grid");
        const GridTensor g = grid_from_json(req.at("grid"), spec_);
        const GaussianLatent lat = layoutvae::encode(g.cells(), params_);
        return ok({{"mu", lat.mu}, {"log_var", lat.log_var}});
    });
}

ServiceResponse InferenceService::interpolate(const std::string& body) const {
    return guarded([&] {
        const json req = parse_body(body);
        const std::size_t l = params_.config().latent_dim;
        const auto za = latent_field(req, "z_a", l);
        const auto zb = latent_field(req, "z_b", l);
        const std::size_t steps = count_field(req, "steps", 2);
        if (steps < 2 || steps > kMaxSteps) {
            throw ValidationError("steps must be between 2 and " + std::to_string(kMaxSteps));
        }
        const FeedbackVector f =
            req.contains("feedback") ? feedback_from_json(req.at("feedback")) : FeedbackVector::neutral();
        Matrix z(steps, l);
        for (std::size_t k = 0; k < steps; ++k) {
            const double t = static_cast<double>(k) / static_cast<double>(steps - 1);
            // The last frame is z_b itself; a + (b - a) * 1 can round away from b.
            for (std::size_t i = 0; i < l; ++i) {
                z(k, i) = k + 1 == steps ? zb[i] : za[i] + (zb[i] - za[i]) * t;
            }
        }
        return ok(decode_rows(z, f));
    });
}

ServiceResponse InferenceService::reduce_feedback(const std::string& body) const {
    return guarded([&] {
        const json req = parse_body(body);
        SessionFeedback session;
        session.decay = req.value("decay", false);
        if (req.contains("events")) {
            const json& ev = req.at("events");
            if (!ev.is_array()) throw ValidationError("events must be an array");
            for (const auto& e : ev) session.events.push_back(event_from_json(e));
        }
        const FeedbackVector start =
            req.contains("base") ? feedback_from_json(req.at("base")) : FeedbackVector::neutral();
        return ok(feedback_to_json(session.reduce(start)));
    });
}

bool run_server(const InferenceService& service, const ServeOptions& options,
                const std::atomic<bool>& stop, std::ostream& log,
                const std::function<void(int)>& on_ready) {
    httplib::Server server;
    // The library default sets SO_REUSEPORT, which would let a second
    // instance share the port instead of failing to bind.
    server.set_socket_options([](int sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
    });
    auto reply = [](httplib::Response& res, const ServiceResponse& r) {
        res.status = r.status;
        res.set_content(r.body, "application/json; charset=utf-8");
    };
    server.Get("/api/model", [&](const httplib::Request&, httplib::Response& res) {
        reply(res, service.model_info());
    });
    server.Post("/api/generate", [&](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.generate(req.body));
    });
    server.Post("/api/encode", [&](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.encode(req.body));
    });
    server.Post("/api/interpolate", [&](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.interpolate(req.body));
    });
    server.Post("/api/feedback/reduce", [&](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.reduce_feedback(req.body));
    });
    if (!options.studio_dir.empty() && !server.set_mount_point("/", options.studio_dir.string())) {
        log << "warning: studio directory '" << options.studio_dir.string() << "' not found\n";
    }

    int port = options.port;
    if (port == 0) {
        port = server.bind_to_any_port(options.host);
        if (port < 0) return false;
    } else if (!server.bind_to_port(options.host, port)) {
        return false;
    }
    if (on_ready) on_ready(port);

    std::atomic<bool> finished{false};
    std::thread watcher([&] {
        while (!stop.load() && !finished.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        server.stop();
    });
    server.listen_after_bind();
    finished = true;
    watcher.join();
    return true;
}

}  // namespace layoutvae
