#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace layoutvae {

/// Coarse UI element classes. Ordinals index grid channels and are stable;
/// files always carry the name.
enum class ElementClass : std::uint8_t { Text = 0, Image, Button, Icon, Toolbar, ListItem };

inline constexpr std::size_t kNumClasses = 6;
inline constexpr std::array<ElementClass, kNumClasses> kAllClasses = {
    ElementClass::Text, ElementClass::Image,   ElementClass::Button,
    ElementClass::Icon, ElementClass::Toolbar, ElementClass::ListItem};

std::string_view class_name(ElementClass c) noexcept;
std::optional<ElementClass> parse_class(std::string_view name) noexcept;

/// Normalized [x0, y0, x1, y1] box, origin top-left.
struct BBox {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    friend bool operator==(const BBox&, const BBox&) = default;
};

struct Element {
    ElementClass cls = ElementClass::Text;
    BBox bbox;
    friend bool operator==(const Element&, const Element&) = default;
};

struct LayoutDoc {
    std::string id;
    int screen_w = 1440;
    int screen_h = 2560;
    std::vector<Element> elements;

    /// Throws ValidationError naming the first offending element index.
    void validate() const;
    friend bool operator==(const LayoutDoc&, const LayoutDoc&) = default;
};

struct GridSpec {
    std::size_t channels = kNumClasses;
    std::size_t rows = 20;
    std::size_t cols = 12;

    std::size_t dim() const noexcept { return channels * rows * cols; }
    std::size_t plane() const noexcept { return rows * cols; }
    void validate() const;
    friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// C x H x W occupancy grid with every cell in [0, 1].
class GridTensor {
public:
    explicit GridTensor(GridSpec spec = {});

    const GridSpec& spec() const noexcept { return spec_; }
    double& at(std::size_t c, std::size_t i, std::size_t j) noexcept {
        return cells_[index(c, i, j)];
    }
    double at(std::size_t c, std::size_t i, std::size_t j) const noexcept {
        return cells_[index(c, i, j)];
    }
    /// Flat position of cell (c, i, j): channel-major, then row-major.
    std::size_t index(std::size_t c, std::size_t i, std::size_t j) const noexcept {
        return (c * spec_.rows + i) * spec_.cols + j;
    }
    std::span<const double> cells() const noexcept { return cells_; }
    std::span<double> cells() noexcept { return cells_; }

    /// Sum of all cells in channel c.
    double channel_mass(std::size_t c) const noexcept;

    friend bool operator==(const GridTensor&, const GridTensor&) = default;

private:
    GridSpec spec_;
    std::vector<double> cells_;
};

GridTensor rasterize(const LayoutDoc& doc, const GridSpec& spec = {});
std::vector<double> flatten(const GridTensor& g);
GridTensor unflatten(std::span<const double> v, const GridSpec& spec = {});

/// Procedural desk-scale corpus; identical output for identical seed.
std::vector<LayoutDoc> synth_corpus(std::uint64_t seed, std::size_t n, const GridSpec& spec = {});

/// Index partition used by split(); exposed so other containers can reuse it.
struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};
SplitIndices split_indices(std::size_t n, std::array<double, 3> ratios, std::uint64_t seed);

struct CorpusSplits {
    std::vector<LayoutDoc> train, val, test;
};
CorpusSplits split(const std::vector<LayoutDoc>& corpus,
                   std::array<double, 3> ratios = {16.0, 1.0, 1.0}, std::uint64_t seed = 0);

// JSON Lines corpus interchange.
std::string doc_to_json_line(const LayoutDoc& doc);
LayoutDoc doc_from_json_line(std::string_view line);
void write_jsonl(const std::filesystem::path& path, std::span<const LayoutDoc> docs);
std::vector<LayoutDoc> read_jsonl(const std::filesystem::path& path);

// RICO semantic-annotation ingestion.
using RicoMapping = std::map<std::string, ElementClass, std::less<>>;

RicoMapping default_rico_mapping();
/// Reads a {ricoLabel: className} JSON object.
RicoMapping load_rico_mapping(const std::filesystem::path& path);

struct IngestStats {
    std::size_t files_read = 0;
    std::size_t files_skipped = 0;
    std::size_t elements_kept = 0;
    std::size_t unmapped_labels = 0;
    std::size_t degenerate_boxes = 0;
    std::vector<std::string> warnings;
};

/// Parses one annotation document. Throws FormatError when malformed.
LayoutDoc parse_rico_document(std::string_view json_text, std::string id,
                              const RicoMapping& mapping, IngestStats& stats);

/// Streams every *.json file under `dir` (sorted by path) into `sink`.
/// Bad files are skipped with a warning; IngestError if nothing parsed.
IngestStats ingest_rico(const std::filesystem::path& dir, const RicoMapping& mapping,
                        const std::function<void(LayoutDoc&&)>& sink);
std::vector<LayoutDoc> ingest_rico(const std::filesystem::path& dir, const RicoMapping& mapping,
                                   IngestStats* stats = nullptr);

// SVG rendering.
std::string_view class_color(ElementClass c) noexcept;
std::string render_svg(const LayoutDoc& doc, const GridSpec& spec = {});
std::string render_svg(const GridTensor& grid);

}  // namespace layoutvae
