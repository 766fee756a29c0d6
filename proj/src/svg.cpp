#include <cstdio>
#include <string>

#include "layoutvae/layout.hpp"

namespace layoutvae {

namespace {

constexpr double kUnit = 10.0;  // SVG units per grid cell

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

std::string header(std::size_t rows, std::size_t cols) {
    const std::string w = num(static_cast<double>(cols) * kUnit);
    const std::string h = num(static_cast<double>(rows) * kUnit);
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + w + " " + h +
           "\" width=\"" + w + "\" height=\"" + h + "\">\n" +
           "<rect class=\"bg\" x=\"0\" y=\"0\" width=\"" + w + "\" height=\"" + h +
           "\" fill=\"#ffffff\"/>\n";
}

void rect(std::string& out, ElementClass cls, double x, double y, double w, double h,
          double opacity) {
    out += "<rect class=\"el ";
    out += class_name(cls);
    out += "\" x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) + "\" height=\"" +
           num(h) + "\" fill=\"";
    out += class_color(cls);
    out += "\" fill-opacity=\"" + num(opacity) + "\"/>\n";
}

}  // namespace

std::string_view class_color(ElementClass c) noexcept {
    switch (c) {
        case ElementClass::Text: return "#4e79a7";
        case ElementClass::Image: return "#59a14f";
        case ElementClass::Button: return "#e15759";
        case ElementClass::Icon: return "#f28e2b";
        case ElementClass::Toolbar: return "#76b7b2";
        case ElementClass::ListItem: return "#b07aa1";
    }
    return "#000000";
}

std::string render_svg(const LayoutDoc& doc, const GridSpec& spec) {
    const double sw = static_cast<double>(spec.cols) * kUnit;
    const double sh = static_cast<double>(spec.rows) * kUnit;
    std::string out = header(spec.rows, spec.cols);
    for (const Element& e : doc.elements) {
        rect(out, e.cls, e.bbox.x0 * sw, e.bbox.y0 * sh, (e.bbox.x1 - e.bbox.x0) * sw,
             (e.bbox.y1 - e.bbox.y0) * sh, 0.6);
    }
    out += "</svg>\n";
    return out;
}

std::string render_svg(const GridTensor& grid) {
    const GridSpec& spec = grid.spec();
    std::string out = header(spec.rows, spec.cols);
    for (std::size_t c = 0; c < spec.channels; ++c) {
        // Channels past the known classes (custom specs) reuse colors cyclically.
        const auto cls = static_cast<ElementClass>(c % kNumClasses);
        for (std::size_t i = 0; i < spec.rows; ++i) {
            for (std::size_t j = 0; j < spec.cols; ++j) {
                const double v = grid.at(c, i, j);
                if (v > 0.5) {
                    rect(out, cls, static_cast<double>(j) * kUnit, static_cast<double>(i) * kUnit,
                         kUnit, kUnit, v * 0.6);
                }
            }
        }
    }
    out += "</svg>\n";
    return out;
}

}  // namespace layoutvae
