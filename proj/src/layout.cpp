#include "layoutvae/layout.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "layoutvae/errors.hpp"

namespace layoutvae {

namespace {
constexpr std::array<std::string_view, kNumClasses> kClassNames = {
    "TEXT", "IMAGE", "BUTTON", "ICON", "TOOLBAR", "LIST_ITEM"};
}

std::string_view class_name(ElementClass c) noexcept {
    return kClassNames[static_cast<std::size_t>(c)];
}

std::optional<ElementClass> parse_class(std::string_view name) noexcept {
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        if (kClassNames[i] == name) return static_cast<ElementClass>(i);
    }
    return std::nullopt;
}

void LayoutDoc::validate() const {
    if (screen_w <= 0 || screen_h <= 0) {
        throw ValidationError("layout '" + id + "': screen size must be positive");
    }
    for (std::size_t k = 0; k < elements.size(); ++k) {
        const BBox& b = elements[k].bbox;
        const bool ok = std::isfinite(b.x0) && std::isfinite(b.y0) && std::isfinite(b.x1) &&
                        std::isfinite(b.y1) && b.x0 >= 0.0 && b.x0 < b.x1 && b.x1 <= 1.0 &&
                        b.y0 >= 0.0 && b.y0 < b.y1 && b.y1 <= 1.0;
        if (!ok) {
            throw ValidationError("layout '" + id + "': element " + std::to_string(k) +
                                  " has invalid bbox");
        }
    }
}

void GridSpec::validate() const {
    if (channels < 1 || rows < 1 || cols < 1) {
        throw ValidationError("grid spec dimensions must all be >= 1");
    }
}

GridTensor::GridTensor(GridSpec spec) : spec_(spec), cells_(spec.dim(), 0.0) {}

double GridTensor::channel_mass(std::size_t c) const noexcept {
    const auto begin = cells_.begin() + static_cast<std::ptrdiff_t>(c * spec_.plane());
    return std::accumulate(begin, begin + static_cast<std::ptrdiff_t>(spec_.plane()), 0.0);
}

GridTensor rasterize(const LayoutDoc& doc, const GridSpec& spec) {
    spec.validate();
    doc.validate();
    GridTensor grid(spec);
    const auto rows = static_cast<double>(spec.rows);
    const auto cols = static_cast<double>(spec.cols);
    for (const Element& e : doc.elements) {
        const auto c = static_cast<std::size_t>(e.cls);
        if (c >= spec.channels) continue;
        // Box edges in cell units; a cell's coverage is the product of its
        // row and column overlaps.
        const double top = e.bbox.y0 * rows, bottom = e.bbox.y1 * rows;
        const double left = e.bbox.x0 * cols, right = e.bbox.x1 * cols;
        const auto i0 = static_cast<std::size_t>(std::floor(top));
        const auto i1 = std::min(spec.rows, static_cast<std::size_t>(std::ceil(bottom)));
        const auto j0 = static_cast<std::size_t>(std::floor(left));
        const auto j1 = std::min(spec.cols, static_cast<std::size_t>(std::ceil(right)));
        for (std::size_t i = i0; i < i1; ++i) {
            const double oy = std::min(bottom, i + 1.0) - std::max(top, static_cast<double>(i));
            if (oy <= 0.0) continue;
            for (std::size_t j = j0; j < j1; ++j) {
                const double ox = std::min(right, j + 1.0) - std::max(left, static_cast<double>(j));
                if (ox <= 0.0) continue;
                grid.at(c, i, j) += oy * ox;
            }
        }
    }
    for (double& v : grid.cells()) v = std::min(1.0, v);
    return grid;
}

std::vector<double> flatten(const GridTensor& g) {
    return {g.cells().begin(), g.cells().end()};
}

GridTensor unflatten(std::span<const double> v, const GridSpec& spec) {
    if (v.size() != spec.dim()) {
        throw ShapeError("unflatten: got " + std::to_string(v.size()) + " values, grid needs " +
                         std::to_string(spec.dim()));
    }
    GridTensor g(spec);
    std::copy(v.begin(), v.end(), g.cells().begin());
    return g;
}

SplitIndices split_indices(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed) {
    if (n == 0) throw ValidationError("split: corpus is empty");
    for (double r : ratios) {
        if (!(r > 0.0) || !std::isfinite(r)) throw ValidationError("split: ratios must be positive");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    // Largest-remainder apportionment; ties go to the earlier partition.
    const double total = ratios[0] + ratios[1] + ratios[2];
    std::array<std::size_t, 3> counts{};
    std::array<double, 3> remainders{};
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double quota = static_cast<double>(n) * ratios[k] / total;
        counts[k] = static_cast<std::size_t>(std::floor(quota));
        remainders[k] = quota - std::floor(quota);
        assigned += counts[k];
    }
    std::array<std::size_t, 3> by_remainder = {0, 1, 2};
    std::stable_sort(by_remainder.begin(), by_remainder.end(),
                     [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[by_remainder[k % 3]];

    SplitIndices out;
    auto it = order.begin();
    out.train.assign(it, it + static_cast<std::ptrdiff_t>(counts[0]));
    it += static_cast<std::ptrdiff_t>(counts[0]);
    out.val.assign(it, it + static_cast<std::ptrdiff_t>(counts[1]));
    it += static_cast<std::ptrdiff_t>(counts[1]);
    out.test.assign(it, order.end());
    return out;
}

CorpusSplits split(const std::vector<LayoutDoc>& corpus, std::array<double, 3> ratios,
                   std::uint64_t seed) {
    const SplitIndices idx = split_indices(corpus.size(), ratios, seed);
    CorpusSplits out;
    for (auto i : idx.train) out.train.push_back(corpus[i]);
    for (auto i : idx.val) out.val.push_back(corpus[i]);
    for (auto i : idx.test) out.test.push_back(corpus[i]);
    return out;
}

std::string doc_to_json_line(const LayoutDoc& doc) {
    nlohmann::ordered_json j;
    j["id"] = doc.id;
    j["w"] = doc.screen_w;
    j["h"] = doc.screen_h;
    j["elements"] = nlohmann::ordered_json::array();
    for (const Element& e : doc.elements) {
        nlohmann::ordered_json je;
        je["class"] = class_name(e.cls);
        je["bbox"] = {e.bbox.x0, e.bbox.y0, e.bbox.x1, e.bbox.y1};
        j["elements"].push_back(std::move(je));
    }
    return j.dump();
}

LayoutDoc doc_from_json_line(std::string_view line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("layout line is not valid JSON: ") + e.what());
    }
    try {
        LayoutDoc doc;
        doc.id = j.at("id").get<std::string>();
        doc.screen_w = j.at("w").get<int>();
        doc.screen_h = j.at("h").get<int>();
        for (const auto& je : j.at("elements")) {
            const auto name = je.at("class").get<std::string>();
            const auto cls = parse_class(name);
            if (!cls) throw FormatError("unknown element class '" + name + "'");
            const auto& b = je.at("bbox");
            if (!b.is_array() || b.size() != 4) throw FormatError("bbox must have 4 numbers");
            doc.elements.push_back(
                {*cls, {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()}});
        }
        doc.validate();
        return doc;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("layout line has wrong structure: ") + e.what());
    }
}

void write_jsonl(const std::filesystem::path& path, std::span<const LayoutDoc> docs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    for (const LayoutDoc& d : docs) out << doc_to_json_line(d) << '\n';
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<LayoutDoc> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    std::vector<LayoutDoc> docs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            docs.push_back(doc_from_json_line(line));
        } catch (const Error& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return docs;
}

}  // namespace layoutvae
