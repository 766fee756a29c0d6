#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "layoutvae/errors.hpp"
#include "layoutvae/layout.hpp"

namespace layoutvae {

RicoMapping default_rico_mapping() {
    using E = ElementClass;
    return {
        {"Text", E::Text},
        {"Input", E::Text},
        {"Image", E::Image},
        {"Background Image", E::Image},
        {"Map View", E::Image},
        {"Advertisement", E::Image},
        {"Text Button", E::Button},
        {"Radio Button", E::Button},
        {"Checkbox", E::Button},
        {"On/Off Switch", E::Button},
        {"Number Stepper", E::Button},
        {"Icon", E::Icon},
        {"Pager Indicator", E::Icon},
        {"Toolbar", E::Toolbar},
        {"Bottom Navigation", E::Toolbar},
        {"Multi-Tab", E::Toolbar},
        {"Button Bar", E::Toolbar},
        {"List Item", E::ListItem},
        {"Card", E::ListItem},
    };
}

RicoMapping load_rico_mapping(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mapping file '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("mapping file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw FormatError("mapping file must hold a JSON object");
    RicoMapping mapping;
    for (const auto& [label, value] : j.items()) {
        if (!value.is_string()) throw FormatError("mapping for '" + label + "' must be a class name");
        const auto cls = parse_class(value.get<std::string>());
        if (!cls) throw FormatError("mapping for '" + label + "' names unknown class");
        mapping.emplace(label, *cls);
    }
    return mapping;
}

namespace {

std::array<double, 4> read_bounds(const nlohmann::json& node) {
    const auto& b = node.at("bounds");
    if (!b.is_array() || b.size() != 4) throw FormatError("bounds must be a 4-element array");
    return {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
}

struct Walker {
    const RicoMapping& mapping;
    IngestStats& stats;
    double ox, oy, sw, sh;
    std::vector<Element>& out;

    void visit(const nlohmann::json& node) {
        if (!node.is_object()) return;
        if (auto it = node.find("componentLabel"); it != node.end() && it->is_string()) {
            const auto label = it->get<std::string>();
            if (auto m = mapping.find(label); m != mapping.end()) {
                const auto b = read_bounds(node);
                const double x0 = std::clamp((b[0] - ox) / sw, 0.0, 1.0);
                const double y0 = std::clamp((b[1] - oy) / sh, 0.0, 1.0);
                const double x1 = std::clamp((b[2] - ox) / sw, 0.0, 1.0);
                const double y1 = std::clamp((b[3] - oy) / sh, 0.0, 1.0);
                if (x1 > x0 && y1 > y0) {
                    out.push_back({m->second, {x0, y0, x1, y1}});
                    ++stats.elements_kept;
                } else {
                    ++stats.degenerate_boxes;
                }
            } else {
                ++stats.unmapped_labels;
            }
        }
        if (auto it = node.find("children"); it != node.end() && it->is_array()) {
            for (const auto& child : *it) visit(child);
        }
    }
};

}  // namespace

LayoutDoc parse_rico_document(std::string_view json_text, std::string id,
                              const RicoMapping& mapping, IngestStats& stats) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("not valid JSON: ") + e.what());
    }
    try {
        if (!root.is_object()) throw FormatError("annotation root must be an object");
        const auto screen = read_bounds(root);
        const double sw = screen[2] - screen[0];
        const double sh = screen[3] - screen[1];
        if (!(sw > 0.0) || !(sh > 0.0)) throw FormatError("root bounds have no area");

        LayoutDoc doc;
        doc.id = std::move(id);
        doc.screen_w = static_cast<int>(sw);
        doc.screen_h = static_cast<int>(sh);
        if (doc.screen_w <= 0 || doc.screen_h <= 0) throw FormatError("screen smaller than a pixel");
        // Counters only land in `stats` once the whole document parsed.
        IngestStats local;
        Walker walker{mapping, local, screen[0], screen[1], sw, sh, doc.elements};
        walker.visit(root);
        stats.elements_kept += local.elements_kept;
        stats.unmapped_labels += local.unmapped_labels;
        stats.degenerate_boxes += local.degenerate_boxes;
        return doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed annotation: ") + e.what());
    }
}

IngestStats ingest_rico(const std::filesystem::path& dir, const RicoMapping& mapping,
                        const std::function<void(LayoutDoc&&)>& sink) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw IngestError("'" + dir.string() + "' is not a readable directory");
    }
    std::vector<std::filesystem::path> files;
    for (auto it = std::filesystem::recursive_directory_iterator(dir, ec);
         !ec && it != std::filesystem::recursive_directory_iterator(); it.increment(ec)) {
        if (it->is_regular_file() && it->path().extension() == ".json") files.push_back(it->path());
    }
    std::sort(files.begin(), files.end());

    IngestStats stats;
    for (const auto& file : files) {
        std::ifstream in(file, std::ios::binary);
        std::stringstream buf;
        if (in) buf << in.rdbuf();
        if (!in) {
            ++stats.files_skipped;
            stats.warnings.push_back(file.string() + ": unreadable");
            continue;
        }
        try {
            LayoutDoc doc = parse_rico_document(buf.str(), file.stem().string(), mapping, stats);
            ++stats.files_read;
            sink(std::move(doc));
        } catch (const FormatError& e) {
            ++stats.files_skipped;
            stats.warnings.push_back(file.string() + ": " + e.what());
        }
    }
    if (stats.files_read == 0) {
        throw IngestError("no parsable annotation files under '" + dir.string() + "'");
    }
    return stats;
}

std::vector<LayoutDoc> ingest_rico(const std::filesystem::path& dir, const RicoMapping& mapping,
                                   IngestStats* stats) {
    std::vector<LayoutDoc> docs;
    IngestStats s = ingest_rico(dir, mapping, [&](LayoutDoc&& d) { docs.push_back(std::move(d)); });
    if (stats) *stats = std::move(s);
    return docs;
}

}  // namespace layoutvae
