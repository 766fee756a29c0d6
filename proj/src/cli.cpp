#include "layoutvae/cli.hpp"

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <CLI11.hpp>

#include "layoutvae/errors.hpp"
#include "layoutvae/metrics.hpp"
#include "layoutvae/service.hpp"

namespace layoutvae {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::atomic<bool> g_stop{false};

extern "C" void handle_interrupt(int) { g_stop = true; }

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

struct GridFlags {
    std::size_t channels = kNumClasses;
    std::size_t rows = 20;
    std::size_t cols = 12;

    void add(CLI::App* app) {
        app->add_option("--channels", channels, "Grid channels")->capture_default_str();
        app->add_option("--rows", rows, "Grid rows")->capture_default_str();
        app->add_option("--cols", cols, "Grid columns")->capture_default_str();
    }
    GridSpec spec() const {
        GridSpec s{channels, rows, cols};
        s.validate();
        return s;
    }
};

/// Corpus source shared by train, evaluate and sweep.
struct DataFlags {
    std::string data;
    std::size_t synth = 0;
    std::string rico_map;

    void add(CLI::App* app) {
        auto* d = app->add_option("--data", data, "JSONL corpus, or a directory of RICO annotations");
        auto* s = app->add_option("--synth", synth, "Use N procedurally generated layouts");
        d->excludes(s);
        app->add_option("--rico-map", rico_map, "JSON file mapping RICO labels to classes");
    }

    std::vector<LayoutDoc> load(std::uint64_t seed, const GridSpec& spec, std::ostream& log) const {
        if (synth > 0) return synth_corpus(seed, synth, spec);
        if (data.empty()) throw ValidationError("one of --data or --synth is required");
        const fs::path p(data);
        if (!fs::exists(p)) throw IoError("data path '" + data + "' does not exist");
        if (fs::is_directory(p)) {
            const RicoMapping mapping = rico_map.empty() ? default_rico_mapping() : load_rico_mapping(rico_map);
            IngestStats stats;
            auto docs = ingest_rico(p, mapping, &stats);
            log << "ingested " << docs.size() << " screens (" << stats.files_skipped << " files skipped, "
                << stats.unmapped_labels << " unmapped labels)\n";
            return docs;
        }
        return read_jsonl(p);
    }
};

fs::path model_path(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("LAYOUTVAE_MODEL"); env && *env) return env;
    throw ValidationError("no model given: pass --model or set LAYOUTVAE_MODEL");
}

VaeParams load_model(const std::string& flag, const GridSpec& spec) {
    VaeParams params = load_params(model_path(flag));
    if (params.config().input_dim != spec.dim()) {
        throw ValidationError("model input_dim " + std::to_string(params.config().input_dim) +
                              " does not match grid " + std::to_string(spec.channels) + "x" +
                              std::to_string(spec.rows) + "x" + std::to_string(spec.cols));
    }
    return params;
}

struct TrainFlags {
    std::size_t epochs = 200;
    std::size_t batch = 64;
    double lr = 0.001;
    std::string optim = "AdamW";
    double momentum = 0.0;
    double weight_decay = 0.01;
    std::string ablation = "none";
    std::string loss = "bernoulli";
    double beta = 1.0;
    bool no_feedback = false;

    void add(CLI::App* app) {
        app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
        app->add_option("--batch", batch, "Minibatch size")->capture_default_str();
        app->add_option("--lr", lr, "Initial learning rate")->capture_default_str();
        app->add_option("--optim", optim, "SGD, RMSprop, Adam or AdamW")->capture_default_str();
        app->add_option("--momentum", momentum, "SGD momentum")->capture_default_str();
        app->add_option("--weight-decay", weight_decay, "AdamW decoupled decay")->capture_default_str();
        app->add_option("--ablation", ablation, "none, or ae for the deterministic autoencoder")
            ->check(CLI::IsMember({"none", "ae"}))
            ->capture_default_str();
        app->add_option("--loss", loss, "Reconstruction likelihood")
            ->check(CLI::IsMember({"bernoulli", "gaussian"}))
            ->capture_default_str();
        app->add_option("--beta", beta, "KL weight")->capture_default_str();
        app->add_flag("--no-feedback", no_feedback, "Train an unconditioned decoder");
    }

    VaeConfig model(const GridSpec& spec) const {
        VaeConfig m;
        m.input_dim = spec.dim();
        m.deterministic_mode = ablation == "ae";
        m.recon_loss = loss == "gaussian" ? ReconLoss::Gaussian : ReconLoss::Bernoulli;
        m.kl_weight = beta;
        m.feedback_enabled = !no_feedback;
        m.validate();
        return m;
    }

    TrainConfig train(std::uint64_t seed) const {
        TrainConfig c;
        c.epochs = epochs;
        c.batch_size = batch;
        c.optim.lr = lr;
        const auto kind = parse_optim(optim);
        if (!kind) throw ValidationError("unknown optimizer '" + optim + "'");
        c.optim.kind = *kind;
        c.optim.momentum = momentum;
        c.optim.weight_decay = weight_decay;
        c = c.with_seed(seed);
        c.validate();
        return c;
    }
};

CorpusSplits split_corpus(const std::vector<LayoutDoc>& docs, std::uint64_t seed) {
    if (docs.size() < 3) throw ValidationError("corpus needs at least 3 layouts to split 16:1:1");
    return split(docs, {16.0, 1.0, 1.0}, seed);
}

// ---- subcommands -----------------------------------------------------------

struct TrainCmd {
    DataFlags data;
    GridFlags grid;
    TrainFlags flags;
    std::string out_path;
    std::string report_path;
    std::string curve_path;
    std::uint64_t seed = 1;
    bool quiet = false;

    void add(CLI::App* app) {
        data.add(app);
        grid.add(app);
        flags.add(app);
        app->add_option("--out", out_path, "Weight file to write (best-validation snapshot)")->required();
        app->add_option("--report", report_path, "Report JSON (default: <out>.report.json)");
        app->add_option("--curve", curve_path, "Also write the loss curve as SVG");
        app->add_option("--seed", seed, "Seed for synthesis, split, init, shuffle and noise")->capture_default_str();
        app->add_flag("--quiet", quiet, "Suppress per-epoch progress");
    }

    int run(std::ostream& out) const {
        const GridSpec spec = grid.spec();
        const TrainConfig cfg = flags.train(seed);
        const VaeConfig model = flags.model(spec);
        out << config_echo(cfg) << '\n';
        const auto docs = data.load(seed, spec, out);
        const CorpusSplits splits = split_corpus(docs, seed);
        out << "split train=" << splits.train.size() << " val=" << splits.val.size()
            << " test=" << splits.test.size() << '\n';
        EpochCallback progress;
        if (!quiet) {
            progress = [&](std::size_t e, const TrainReport& r) {
                char line[160];
                std::snprintf(line, sizeof line, "epoch %zu/%zu train=%.4f val=%.4f lr=%g\n", e + 1,
                              cfg.epochs, r.train_loss.back().total, r.val_loss.back().total, r.lr.back());
                out << line << std::flush;
            };
        }
        const TrainReport report = train(model, splits, cfg, spec, progress);
        save_params(report.best_params, out_path);
        const fs::path rpath = report_path.empty() ? fs::path(out_path + ".report.json") : fs::path(report_path);
        write_text(rpath, report.to_json().dump(2) + "\n");
        if (!curve_path.empty()) write_text(curve_path, loss_curve_svg(report));
        out << "best epoch " << report.best_epoch + 1 << " val=" << report.best_val() << "; wrote "
            << out_path << " and " << rpath.string() << '\n';
        return kExitOk;
    }
};

struct GenerateCmd {
    GridFlags grid;
    std::string model;
    std::size_t count = 1;
    std::uint64_t seed = 0;
    std::string feedback;
    std::string z;
    std::string out_dir;

    void add(CLI::App* app) {
        grid.add(app);
        app->add_option("--model", model, "Weight file (default: $LAYOUTVAE_MODEL)");
        app->add_option("--count", count, "Number of layouts")->capture_default_str();
        app->add_option("--seed", seed, "Latent sampling seed")->capture_default_str();
        app->add_option("--feedback", feedback, "Feedback JSON {\"class_weights\":[6],\"quadrant_weights\":[4]}");
        app->add_option("--z", z, "Explicit latent as a JSON array; --count is ignored");
        app->add_option("--out", out_dir, "Output directory")->required();
    }

    int run(std::ostream& out) const {
        const GridSpec spec = grid.spec();
        const InferenceService service(load_model(model, spec), spec);
        json req = {{"seed", seed}, {"count", count}};
        try {
            if (!feedback.empty()) req["feedback"] = json::parse(feedback);
            if (!z.empty()) req["z"] = json::parse(z);
        } catch (const json::exception& e) {
            throw ValidationError(std::string("--feedback/--z is not valid JSON: ") + e.what());
        }
        const ServiceResponse res = service.generate(req.dump());
        const json body = json::parse(res.body);
        if (res.status != 200) throw ValidationError(body.at("error").get<std::string>());
        const auto& svgs = body.at("svgs");
        if (svgs.empty()) {
            out << "generated 0 layouts\n";
            return kExitOk;
        }
        fs::create_directories(out_dir);
        for (std::size_t k = 0; k < svgs.size(); ++k) {
            char name[32];
            std::snprintf(name, sizeof name, "layout_%04zu.svg", k);
            write_text(fs::path(out_dir) / name, svgs[k].get<std::string>());
        }
        ordered_json meta;
        meta["seed"] = seed;
        meta["count"] = svgs.size();
        meta["feedback"] = body.at("feedback");
        meta["z"] = body.at("z");
        meta["grids"] = body.at("grids");
        write_text(fs::path(out_dir) / "grids.json", meta.dump() + "\n");
        out << "generated " << svgs.size() << " layouts in " << out_dir << '\n';
        return kExitOk;
    }
};

struct EvaluateCmd {
    DataFlags data;
    GridFlags grid;
    std::string model;
    std::string which = "test";
    std::string ablation = "none";
    std::string out_path;
    std::uint64_t seed = 1;

    void add(CLI::App* app) {
        data.add(app);
        grid.add(app);
        app->add_option("--model", model, "Weight file (default: $LAYOUTVAE_MODEL)");
        app->add_option("--split", which, "Which split to score")
            ->check(CLI::IsMember({"train", "val", "test", "all"}))
            ->capture_default_str();
        app->add_option("--ablation", ablation, "ae: require a deterministic-mode model (Table 1 AE row)")
            ->check(CLI::IsMember({"none", "ae"}))
            ->capture_default_str();
        app->add_option("--out", out_path, "Write the full MetricsReport JSON here");
        app->add_option("--seed", seed, "Seed used for synthesis and the 16:1:1 split")->capture_default_str();
    }

    int run(std::ostream& out) const {
        const GridSpec spec = grid.spec();
        const VaeParams params = load_model(model, spec);
        if (ablation == "ae" && !params.config().deterministic_mode) {
            throw ValidationError("--ablation ae needs a model trained with --ablation ae");
        }
        const auto docs = data.load(seed, spec, out);
        std::vector<LayoutDoc> subset;
        if (which == "all") {
            subset = docs;
        } else {
            CorpusSplits s = split_corpus(docs, seed);
            subset = which == "train" ? s.train : which == "val" ? s.val : s.test;
        }
        if (subset.empty()) throw ValidationError("the " + which + " split is empty");
        const MetricsReport report = evaluate(params, subset, spec);
        ordered_json summary;
        summary["model"] = params.config().deterministic_mode ? "AE" : "VAE";
        summary["split"] = which;
        summary["ssim"] = report.mean_ssim;
        summary["mae"] = report.mean_mae;
        summary["n"] = report.n;
        out << summary.dump() << '\n';
        if (!out_path.empty()) {
            ordered_json full = report.to_json();
            full["model"] = summary["model"];
            full["split"] = which;
            write_text(out_path, full.dump(2) + "\n");
        }
        return kExitOk;
    }
};

struct SweepCmd {
    DataFlags data;
    GridFlags grid;
    TrainFlags flags;
    std::string mode;
    std::size_t seeds = 3;
    std::vector<double> lrs = {0.005, 0.003, 0.002, 0.001};
    std::vector<std::string> kinds = {"RMSprop", "Adam", "SGD", "AdamW"};
    std::string out_path;
    std::string table_path;
    std::uint64_t seed = 1;

    void add(CLI::App* app) {
        data.add(app);
        grid.add(app);
        flags.add(app);
        app->add_option("--mode", mode, "lr or optim")->required()->check(CLI::IsMember({"lr", "optim"}));
        app->add_option("--seeds", seeds, "Runs per setting (seeds 1..k)")->capture_default_str();
        app->add_option("--lrs", lrs, "Learning-rate grid for --mode lr")->capture_default_str();
        app->add_option("--kinds", kinds, "Optimizers for --mode optim")->capture_default_str();
        app->add_option("--out", out_path, "Write the sweep table as JSON");
        app->add_option("--table", table_path, "Write the aligned text table");
        app->add_option("--seed", seed, "Seed for synthesis and the split")->capture_default_str();
    }

    int run(std::ostream& out) const {
        if (seeds == 0) throw ValidationError("--seeds must be >= 1");
        const GridSpec spec = grid.spec();
        const TrainConfig base = flags.train(seed);
        const VaeConfig model = flags.model(spec);
        out << config_echo(base) << '\n';
        const CorpusSplits splits = split_corpus(data.load(seed, spec, out), seed);
        std::vector<std::uint64_t> run_seeds(seeds);
        for (std::size_t k = 0; k < seeds; ++k) run_seeds[k] = k + 1;
        const SweepCallback progress = [&](const std::string& label, std::uint64_t s) {
            out << "run " << label << " seed " << s << '\n' << std::flush;
        };
        SweepTable table;
        if (mode == "lr") {
            table = sweep_lr(model, splits, base, lrs, run_seeds, spec, progress);
        } else {
            std::vector<OptimKind> parsed;
            for (const auto& k : kinds) {
                const auto kind = parse_optim(k);
                if (!kind) throw ValidationError("unknown optimizer '" + k + "'");
                parsed.push_back(*kind);
            }
            table = sweep_optimizers(model, splits, base, parsed, run_seeds, spec, progress);
        }
        const std::string text = table.to_text();
        out << text;
        if (!out_path.empty()) write_text(out_path, table.to_json().dump(2) + "\n");
        if (!table_path.empty()) write_text(table_path, text);
        return kExitOk;
    }
};

struct SynthCmd {
    GridFlags grid;
    std::size_t n = 512;
    std::uint64_t seed = 1;
    std::string out_path;

    void add(CLI::App* app) {
        grid.add(app);
        app->add_option("--n", n, "Number of layouts")->capture_default_str();
        app->add_option("--seed", seed, "Generator seed")->capture_default_str();
        app->add_option("--out", out_path, "JSONL file to write")->required();
    }

    int run(std::ostream& out) const {
        const auto docs = synth_corpus(seed, n, grid.spec());
        write_jsonl(out_path, docs);
        out << "wrote " << docs.size() << " layouts to " << out_path << '\n';
        return kExitOk;
    }
};

struct RenderCmd {
    GridFlags grid;
    std::string data;
    std::string grids_path;
    std::string out_dir;
    std::size_t limit = 0;

    void add(CLI::App* app) {
        grid.add(app);
        auto* d = app->add_option("--data", data, "JSONL corpus to draw");
        auto* g = app->add_option("--grids", grids_path, "grids.json written by generate");
        d->excludes(g);
        app->add_option("--out", out_dir, "Output directory")->required();
        app->add_option("--limit", limit, "Draw at most this many (0 = all)");
    }

    int run(std::ostream& out) const {
        const GridSpec spec = grid.spec();
        std::vector<std::pair<std::string, std::string>> files;
        if (!data.empty()) {
            for (const LayoutDoc& doc : read_jsonl(data)) {
                files.emplace_back(doc.id, render_svg(doc, spec));
            }
        } else if (!grids_path.empty()) {
            std::ifstream in(grids_path);
            if (!in) throw IoError("cannot open '" + grids_path + "'");
            json j;
            try {
                j = json::parse(in);
            } catch (const json::exception& e) {
                throw FormatError(grids_path + ": " + e.what());
            }
            const json& arr = j.contains("grids") ? j.at("grids") : j;
            if (!arr.is_array()) throw FormatError(grids_path + ": expected an array of grids");
            for (std::size_t k = 0; k < arr.size(); ++k) {
                files.emplace_back("grid_" + std::to_string(k), render_svg(grid_from_json(arr[k], spec)));
            }
        } else {
            throw ValidationError("one of --data or --grids is required");
        }
        if (limit > 0 && files.size() > limit) files.resize(limit);
        fs::create_directories(out_dir);
        for (const auto& [name, svg] : files) {
            std::string safe = name;
            std::replace_if(safe.begin(), safe.end(), [](char c) { return c == '/' || c == '\\'; }, '_');
            write_text(fs::path(out_dir) / (safe + ".svg"), svg);
        }
        out << "rendered " << files.size() << " SVG files to " << out_dir << '\n';
        return kExitOk;
    }
};

struct ServeCmd {
    GridFlags grid;
    std::string model;
    std::string addr = "127.0.0.1:8080";
    std::string studio_dir;

    void add(CLI::App* app) {
        grid.add(app);
        app->add_option("--model", model, "Weight file (default: $LAYOUTVAE_MODEL)");
        app->add_option("--addr", addr, "host:port to listen on")->capture_default_str();
        app->add_option("--studio-dir", studio_dir, "Serve built studio assets from this directory");
    }

    int run(std::ostream& out, std::ostream& err) const {
        const GridSpec spec = grid.spec();
        const InferenceService service(load_model(model, spec), spec);
        ServeOptions opts;
        const auto colon = addr.rfind(':');
        if (colon == std::string::npos) throw ValidationError("--addr must be host:port");
        opts.host = addr.substr(0, colon);
        try {
            opts.port = std::stoi(addr.substr(colon + 1));
        } catch (const std::exception&) {
            throw ValidationError("--addr has an invalid port");
        }
        if (opts.port < 0 || opts.port > 65535) throw ValidationError("--addr has an invalid port");
        opts.studio_dir = studio_dir;

        g_stop = false;
        auto prev_int = std::signal(SIGINT, handle_interrupt);
        auto prev_term = std::signal(SIGTERM, handle_interrupt);
        const bool bound = run_server(service, opts, g_stop, err, [&](int port) {
            out << "listening on http://" << opts.host << ":" << port << '\n' << std::flush;
        });
        std::signal(SIGINT, prev_int);
        std::signal(SIGTERM, prev_term);
        if (!bound) {
            err << "error: cannot listen on " << addr << " (address in use?)\n";
            return kExitUsage;
        }
        out << "shut down\n";
        return kExitOk;
    }
};

}  // namespace

std::string config_echo(const TrainConfig& cfg) {
    return "batch=" + std::to_string(cfg.batch_size) + " epochs=" + std::to_string(cfg.epochs) +
           " lr=" + fmt_double(cfg.optim.lr) + " optim=" + std::string(optim_name(cfg.optim.kind));
}

std::string loss_curve_svg(const TrainReport& report) {
    constexpr double kW = 640, kH = 360, kPad = 40;
    const std::size_t n = report.train_loss.size();
    double lo = 1e300, hi = -1e300;
    for (std::size_t e = 0; e < n; ++e) {
        for (double v : {report.train_loss[e].total, report.val_loss[e].total}) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    if (n == 0) lo = 0, hi = 1;
    if (hi <= lo) hi = lo + 1.0;
    auto polyline = [&](const std::vector<LossParts>& v, const char* color) {
        std::string pts;
        char buf[64];
        for (std::size_t e = 0; e < v.size(); ++e) {
            const double x = kPad + (n > 1 ? (kW - 2 * kPad) * static_cast<double>(e) / static_cast<double>(n - 1) : 0.0);
            const double y = kH - kPad - (kH - 2 * kPad) * (v[e].total - lo) / (hi - lo);
            std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", e ? " " : "", x, y);
            pts += buf;
        }
        return "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    };
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n"
      << "<text x=\"" << kPad << "\" y=\"24\" font-size=\"14\">loss per epoch (train blue, val orange); range "
      << fmt_double(lo) << " to " << fmt_double(hi) << "</text>\n"
      << polyline(report.train_loss, "#4e79a7") << polyline(report.val_loss, "#f28e2b") << "</svg>\n";
    return s.str();
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Layout VAE: train, evaluate and sample UI-layout generators", "layoutvae"};
    app.require_subcommand(1);
    TrainCmd train_cmd;
    GenerateCmd generate_cmd;
    EvaluateCmd evaluate_cmd;
    SweepCmd sweep_cmd;
    SynthCmd synth_cmd;
    RenderCmd render_cmd;
    ServeCmd serve_cmd;
    auto* train_app = app.add_subcommand("train", "Split a corpus 16:1:1 and train a model");
    auto* generate_app = app.add_subcommand("generate", "Sample layouts from a trained model");
    auto* evaluate_app = app.add_subcommand("evaluate", "Mean SSIM/MAE of deterministic reconstructions");
    auto* sweep_app = app.add_subcommand("sweep", "Learning-rate or optimizer sweep");
    auto* synth_app = app.add_subcommand("synth", "Write a synthetic layout corpus");
    auto* render_app = app.add_subcommand("render", "Draw layouts or grids as SVG");
    auto* serve_app = app.add_subcommand("serve", "HTTP inference API");
    train_cmd.add(train_app);
    generate_cmd.add(generate_app);
    evaluate_cmd.add(evaluate_app);
    sweep_cmd.add(sweep_app);
    synth_cmd.add(synth_app);
    render_cmd.add(render_app);
    serve_cmd.add(serve_app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        const auto subs = app.get_subcommands();
        out << (subs.empty() ? app.help() : subs.front()->help());
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    try {
        if (train_app->parsed()) return train_cmd.run(out);
        if (generate_app->parsed()) return generate_cmd.run(out);
        if (evaluate_app->parsed()) return evaluate_cmd.run(out);
        if (sweep_app->parsed()) return sweep_cmd.run(out);
        if (synth_app->parsed()) return synth_cmd.run(out);
        if (render_app->parsed()) return render_cmd.run(out);
        if (serve_app->parsed()) return serve_cmd.run(out, err);
    } catch (const NumericError& e) {
        err << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace layoutvae
