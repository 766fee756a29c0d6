#include <algorithm>
#include <random>

#include "layoutvae/layout.hpp"

namespace layoutvae {

namespace {

class DocBuilder {
public:
    explicit DocBuilder(std::mt19937_64& rng) : rng_(rng) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    int pick(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }

    void add(std::vector<Element>& out, ElementClass cls, double x0, double y0, double x1, double y1) {
        x0 = std::clamp(x0, 0.0, 1.0);
        x1 = std::clamp(x1, 0.0, 1.0);
        y0 = std::clamp(y0, 0.0, 1.0);
        y1 = std::clamp(y1, 0.0, 1.0);
        if (x1 - x0 > 1e-6 && y1 - y0 > 1e-6) out.push_back({cls, {x0, y0, x1, y1}});
    }

private:
    std::mt19937_64& rng_;
};

constexpr double kContentBottom = 0.76;
constexpr double kActionTop = 0.80;
constexpr double kActionBottom = 0.97;

void content_block(DocBuilder& b, std::vector<Element>& els, ElementClass cls, double top,
                   double bottom) {
    const double x0 = b.uniform(0.03, 0.12);
    const double x1 = b.uniform(0.88, 0.97);
    switch (cls) {
        case ElementClass::ListItem: {
            const int items = b.pick(2, 4);
            const double step = (bottom - top) / items;
            for (int k = 0; k < items; ++k) {
                b.add(els, cls, x0, top + k * step, x1, top + (k + 1) * step - 0.01);
            }
            break;
        }
        case ElementClass::Text: {
            const int lines = b.pick(1, 3);
            const double step = (bottom - top) / lines;
            for (int k = 0; k < lines; ++k) {
                const double right = k + 1 == lines ? b.uniform(x0 + 0.3, x1) : x1;
                b.add(els, cls, x0, top + k * step, right, top + (k + 1) * step - 0.01);
            }
            break;
        }
        default:
            b.add(els, cls, x0, top, x1, bottom);
            break;
    }
}

LayoutDoc make_doc(DocBuilder& b, std::size_t index) {
    LayoutDoc doc;
    doc.id = "synth-" + std::to_string(index);
    doc.screen_w = 1440;
    doc.screen_h = 2560;
    auto& els = doc.elements;

    double top = 0.02;
    if (b.chance(0.9)) {
        const double bar = b.uniform(0.06, 0.11);
        b.add(els, ElementClass::Toolbar, 0.0, 0.0, 1.0, bar);
        if (b.chance(0.5)) b.add(els, ElementClass::Icon, 0.02, 0.01, 0.12, bar - 0.01);
        top = bar + 0.02;
    }

    // Content blocks stacked vertically with random share of the region.
    const int blocks = b.pick(1, 4);
    std::vector<double> shares(static_cast<std::size_t>(blocks));
    for (double& s : shares) s = b.uniform(0.5, 1.5);
    double share_sum = 0.0;
    for (double s : shares) share_sum += s;
    const double avail = kContentBottom - top;
    double cursor = top;
    static constexpr std::array<ElementClass, 3> kContent = {
        ElementClass::Text, ElementClass::Image, ElementClass::ListItem};
    for (double s : shares) {
        const double height = avail * s / share_sum;
        const auto cls = kContent[static_cast<std::size_t>(b.pick(0, 2))];
        content_block(b, els, cls, cursor, cursor + height - 0.015);
        cursor += height;
    }

    // Action row: buttons and icons side by side in the lower region.
    const int actions = b.pick(0, 3);
    if (actions > 0) {
        const double h = b.uniform(0.06, 0.1);
        const double y0 = b.uniform(kActionTop, kActionBottom - h);
        const double slot = 0.94 / actions;
        for (int k = 0; k < actions; ++k) {
            const auto cls = b.chance(0.6) ? ElementClass::Button : ElementClass::Icon;
            const double left = 0.03 + k * slot;
            const double width = cls == ElementClass::Button ? b.uniform(0.6, 0.95) * slot
                                                             : b.uniform(0.2, 0.4) * slot;
            b.add(els, cls, left, y0, left + width, y0 + h);
        }
    }
    return doc;
}

}  // namespace

std::vector<LayoutDoc> synth_corpus(std::uint64_t seed, std::size_t n, const GridSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(seed);
    DocBuilder builder(rng);
    std::vector<LayoutDoc> docs;
    docs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) docs.push_back(make_doc(builder, i));
    return docs;
}

}  // namespace layoutvae
