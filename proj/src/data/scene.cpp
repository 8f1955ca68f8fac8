#include "data/scene.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace sfd {

namespace {

constexpr const char* kShapeWords[kNumShapes] = {"circle", "square", "triangle", "cross"};

constexpr PaletteColor kPalette[kNumColors] = {
    {"red", 220, 40, 40},   {"green", 40, 180, 70},   {"blue", 50, 90, 220},
    {"yellow", 230, 210, 50}, {"purple", 160, 60, 200}, {"orange", 240, 140, 40},
};

constexpr Background kBackgrounds[kNumBackgrounds] = {
    {"dark", 32}, {"gray", 96}, {"pale", 160}, {"light", 224}};

bool shape_covers(Shape s, int dx, int dy, int e) {
    switch (s) {
        case Shape::square:
            return std::abs(dx) <= e && std::abs(dy) <= e;
        case Shape::circle:
            return dx * dx + dy * dy <= e * e;
        case Shape::triangle: {
            // apex up: row 0 at the top, base of half-width e at row 2e
            const int row = dy + e;
            return row >= 0 && row <= 2 * e && std::abs(dx) <= row / 2;
        }
        case Shape::cross: {
            const int t = std::max(1, e / 3);
            return (std::abs(dx) <= t && std::abs(dy) <= e) ||
                   (std::abs(dy) <= t && std::abs(dx) <= e);
        }
    }
    throw ContractError("unknown shape");
}

struct Placement {
    Shape shape;
    int color = 0;
    int half_extent = 0;
    int cx = 0, cy = 0;
    std::string size_word;
    bool color_in_caption = false;
};

// own-shape footprint mask, ignoring occlusion by later entities
std::vector<uint8_t> footprint(const Placement& p, int h, int w) {
    std::vector<uint8_t> m(static_cast<size_t>(h) * w, 0);
    for (int y = p.cy - p.half_extent; y <= p.cy + p.half_extent; ++y)
        for (int x = p.cx - p.half_extent; x <= p.cx + p.half_extent; ++x)
            if (y >= 0 && y < h && x >= 0 && x < w &&
                shape_covers(p.shape, x - p.cx, y - p.cy, p.half_extent))
                m[static_cast<size_t>(y) * w + x] = 1;
    return m;
}

struct PixelBox {
    int x0, y0, x1, y1;  // half-open
};

PixelBox mask_bounds(const std::vector<uint8_t>& m, int h, int w) {
    int minx = w, miny = h, maxx = -1, maxy = -1;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (m[static_cast<size_t>(y) * w + x]) {
                minx = std::min(minx, x);
                maxx = std::max(maxx, x);
                miny = std::min(miny, y);
                maxy = std::max(maxy, y);
            }
    if (maxx < 0) throw GenError("entity footprint is empty");
    return {minx, miny, maxx + 1, maxy + 1};
}

double box_iou(const PixelBox& a, const PixelBox& b) {
    const int ix = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
    const int iy = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
    const double inter = static_cast<double>(ix) * iy;
    const double area_a = static_cast<double>(a.x1 - a.x0) * (a.y1 - a.y0);
    const double area_b = static_cast<double>(b.x1 - b.x0) * (b.y1 - b.y0);
    return inter / (area_a + area_b - inter);
}

int pick(const std::vector<int>& pool, Rng& rng, const char* what) {
    if (pool.empty()) throw GenError(cat("no candidates left for ", what));
    return pool[rng.randint(static_cast<int>(pool.size()))];
}

std::vector<int> without(std::vector<int> pool, int v) {
    pool.erase(std::remove(pool.begin(), pool.end(), v), pool.end());
    return pool;
}

void validate_spec(const SceneSpec& spec) {
    if (spec.num_entities < 1 || spec.num_entities > 2)
        throw GenError(cat("num_entities must be 1 or 2, got ", spec.num_entities));
    if (spec.height < 16 || spec.width < 16)
        throw GenError("scene size must be at least 16x16");
    if (spec.shapes.empty() || spec.colors.empty() || spec.backgrounds.empty())
        throw GenError("allowed shape/color/background sets must be non-empty");
    for (int s : spec.shapes)
        if (s < 0 || s >= kNumShapes) throw GenError(cat("shape index out of range: ", s));
    for (int c : spec.colors)
        if (c < 0 || c >= kNumColors) throw GenError(cat("color index out of range: ", c));
    for (int b : spec.backgrounds)
        if (b < 0 || b >= kNumBackgrounds)
            throw GenError(cat("background index out of range: ", b));
    if (spec.caption_color_prob < 0.0 || spec.caption_color_prob > 1.0)
        throw GenError("caption_color_prob must lie in [0,1]");
}

}  // namespace

const char* shape_word(Shape s) { return kShapeWords[static_cast<int>(s)]; }

Shape shape_from_word(const std::string& word) {
    for (int i = 0; i < kNumShapes; ++i) {
        if (word == shape_word(static_cast<Shape>(i))) return static_cast<Shape>(i);
    }
    throw ContractError(cat("not a shape word: '", word, "'"));
}

const PaletteColor& palette_color(int index) {
    if (index < 0 || index >= kNumColors)
        throw ContractError(cat("palette color index out of range: ", index));
    return kPalette[index];
}

const Background& background(int index) {
    if (index < 0 || index >= kNumBackgrounds)
        throw ContractError(cat("background index out of range: ", index));
    return kBackgrounds[index];
}

SceneRecord generate_scene(uint64_t seed, const SceneSpec& spec) {
    validate_spec(spec);
    Rng rng(Rng::mix(seed, 0x5ce2e5u));
    const int h = spec.height, w = spec.width;
    const int n = spec.num_entities;

    // draw identities first so retries only move shapes around
    std::vector<Placement> placed(n);
    for (int k = 0; k < n; ++k) {
        auto shapes = spec.shapes;
        auto colors = spec.colors;
        if (k == 1) {
            // two subjects stay distinguishable: distinct shape and color
            shapes = without(shapes, static_cast<int>(placed[0].shape));
            colors = without(colors, placed[0].color);
        }
        placed[k].shape = static_cast<Shape>(pick(shapes, rng, "shape"));
        placed[k].color = pick(colors, rng, "color");
        const bool small = rng.coin(0.5);
        placed[k].size_word = small ? "small" : "big";
        placed[k].half_extent = (small ? 4 : 6) + static_cast<int>(rng.randint(2));
        placed[k].color_in_caption = rng.coin(spec.caption_color_prob);
    }
    const int bg = pick(spec.backgrounds, rng, "background");

    std::vector<std::vector<uint8_t>> foot(n);
    std::vector<PixelBox> box(n);
    bool ok = false;
    for (int attempt = 0; attempt < spec.max_placement_attempts && !ok; ++attempt) {
        for (int k = 0; k < n; ++k) {
            const int e = placed[k].half_extent;
            placed[k].cx = e + static_cast<int>(rng.randint(w - 2 * e));
            placed[k].cy = e + static_cast<int>(rng.randint(h - 2 * e));
            foot[k] = footprint(placed[k], h, w);
            box[k] = mask_bounds(foot[k], h, w);
        }
        ok = n == 1 || box_iou(box[0], box[1]) < spec.two_entity_max_iou;
    }
    if (!ok)
        throw GenError(cat("could not place ", n, " entities after ",
                           spec.max_placement_attempts, " attempts (seed ", seed, ")"));

    // render in entity order; later entities occlude earlier ones
    Image img(h, w, 3);
    const uint8_t lvl = kBackgrounds[bg].level;
    std::fill(img.px.begin(), img.px.end(), lvl);
    for (int k = 0; k < n; ++k) {
        const PaletteColor& pc = kPalette[placed[k].color];
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (foot[k][static_cast<size_t>(y) * w + x]) {
                    img.at(y, x, 0) = pc.r;
                    img.at(y, x, 1) = pc.g;
                    img.at(y, x, 2) = pc.b;
                }
    }

    SceneRecord rec;
    rec.image = std::move(img);
    rec.background_index = bg;
    rec.seed = seed;
    rec.entities.resize(n);
    for (int k = 0; k < n; ++k) {
        EntityAnnotation& ent = rec.entities[k];
        ent.label = shape_word(placed[k].shape);
        ent.color_word = kPalette[placed[k].color].word;
        ent.size_word = placed[k].size_word;
        ent.color_index = placed[k].color;
        ent.color_in_caption = placed[k].color_in_caption;
        // box from the pre-occlusion footprint; mask keeps only visible pixels,
        // derived geometrically (footprint minus later occluders) so that
        // re-segmenting the rendered image by color is an independent oracle
        ent.box = {static_cast<double>(box[k].x0) / w, static_cast<double>(box[k].y0) / h,
                   static_cast<double>(box[k].x1) / w, static_cast<double>(box[k].y1) / h};
        ent.mask = foot[k];
        for (int j = k + 1; j < n; ++j)
            for (size_t i = 0; i < ent.mask.size(); ++i)
                if (foot[j][i]) ent.mask[i] = 0;
        bool any = false;
        for (uint8_t m : ent.mask) any = any || m;
        if (!any) throw GenError(cat("entity ", k, " fully occluded (seed ", seed, ")"));
    }

    // caption: "a [color] shape [rel a [color] shape] on a {bg} background"
    std::vector<std::string> words;
    auto push_entity = [&](int k) {
        words.emplace_back("a");
        if (placed[k].color_in_caption) words.emplace_back(kPalette[placed[k].color].word);
        words.emplace_back(shape_word(placed[k].shape));
    };
    push_entity(0);
    if (n == 2) {
        const int c0x = box[0].x0 + box[0].x1, c0y = box[0].y0 + box[0].y1;
        const int c1x = box[1].x0 + box[1].x1, c1y = box[1].y0 + box[1].y1;
        if (std::abs(c0x - c1x) >= std::abs(c0y - c1y)) {
            words.emplace_back(c0x < c1x ? "left" : "right");
            words.emplace_back("of");
        } else {
            words.emplace_back(c0y < c1y ? "above" : "below");
        }
        push_entity(1);
    }
    words.emplace_back("on");
    words.emplace_back("a");
    words.emplace_back(kBackgrounds[bg].word);
    words.emplace_back("background");
    std::string caption;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) caption += ' ';
        caption += words[i];
    }
    rec.caption = std::move(caption);
    return rec;
}

SubjectCrop crop_subject(const SceneRecord& record, int k, int resolution) {
    if (k < 0 || k >= static_cast<int>(record.entities.size()))
        throw ContractError(cat("entity index out of range: ", k));
    if (resolution <= 0) throw ContractError("crop resolution must be positive");
    const Image& src = record.image;
    const EntityAnnotation& ent = record.entities[k];
    if (ent.mask.size() != static_cast<size_t>(src.h) * src.w)
        throw ContractError("entity mask does not match image size");
    bool any = false;
    for (uint8_t m : ent.mask) any = any || m;
    if (!any) throw ContractError(cat("entity ", k, " has an empty mask"));

    // normalized box coordinates are exact pixel fractions, so this is exact
    const int x0 = static_cast<int>(std::llround(ent.box[0] * src.w));
    const int y0 = static_cast<int>(std::llround(ent.box[1] * src.h));
    const int x1 = static_cast<int>(std::llround(ent.box[2] * src.w));
    const int y1 = static_cast<int>(std::llround(ent.box[3] * src.h));
    const int sh = y1 - y0, sw = x1 - x0;
    if (sh <= 0 || sw <= 0) throw ContractError("degenerate entity box");

    SubjectCrop crop;
    crop.entity_index = k;
    crop.image = Image(resolution, resolution, 3);
    for (int y = 0; y < resolution; ++y) {
        // center-sampled nearest neighbor
        const int sy = y0 + (2 * y + 1) * sh / (2 * resolution);
        for (int x = 0; x < resolution; ++x) {
            const int sx = x0 + (2 * x + 1) * sw / (2 * resolution);
            const bool on = ent.mask[static_cast<size_t>(sy) * src.w + sx] != 0;
            for (int c = 0; c < 3; ++c)
                crop.image.at(y, x, c) = on ? src.at(sy, sx, c) : uint8_t(0);
        }
    }
    return crop;
}

std::vector<uint8_t> overlay_masks(const std::vector<std::vector<uint8_t>>& masks) {
    if (masks.empty()) throw ContractError("overlay_masks needs at least one mask");
    std::vector<uint8_t> out(masks[0].size(), 0);
    for (const auto& m : masks) {
        if (m.size() != out.size())
            throw DimError(cat("mask size mismatch: ", m.size(), " vs ", out.size()));
        for (size_t i = 0; i < m.size(); ++i) out[i] = out[i] || m[i];
    }
    return out;
}

BoundPrompt build_prompt(const SceneRecord& record, const Vocab& vocab, int seq_len) {
    const int n = static_cast<int>(record.entities.size());
    if (n > Vocab::kMaxEntities)
        throw ContractError(cat("too many entities for placeholders: ", n));
    BoundPrompt p;
    p.text = record.caption;
    for (int k = 0; k < n; ++k)
        p.text += cat(" , the ", record.entities[k].label, " is [PH_", k, "]");
    p.token_ids = tokenize(vocab, p.text, seq_len);
    for (int k = 0; k < n; ++k) {
        const int ph = Vocab::placeholder_id(k);
        const int lab = vocab.id(record.entities[k].label);
        int ph_pos = -1, lab_pos = -1;
        for (int i = 0; i < seq_len; ++i) {
            if (ph_pos < 0 && p.token_ids[i] == ph) ph_pos = i;
            if (lab_pos < 0 && p.token_ids[i] == lab) lab_pos = i;
        }
        if (ph_pos < 0 || lab_pos < 0)
            throw ContractError(cat("placeholder or label missing from prompt for entity ", k));
        p.placeholder_pos.push_back(ph_pos);
        p.label_pos.push_back(lab_pos);
    }
    return p;
}

BoundPrompt build_text_prompt(const std::string& caption, const Vocab& vocab, int seq_len) {
    BoundPrompt p;
    p.text = caption;
    p.token_ids = tokenize(vocab, p.text, seq_len);
    return p;
}

std::vector<uint8_t> segment_by_color(const Image& image, int color_index) {
    const PaletteColor& pc = palette_color(color_index);
    if (image.ch != 3) throw ContractError("segment_by_color expects an RGB image");
    std::vector<uint8_t> m(static_cast<size_t>(image.h) * image.w, 0);
    for (int y = 0; y < image.h; ++y)
        for (int x = 0; x < image.w; ++x)
            if (image.at(y, x, 0) == pc.r && image.at(y, x, 1) == pc.g &&
                image.at(y, x, 2) == pc.b)
                m[static_cast<size_t>(y) * image.w + x] = 1;
    return m;
}

}  // namespace sfd
