#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "data/image.hpp"
#include "encoders/vocab.hpp"

namespace sfd {

// ---- fixed render tables ----

enum class Shape { circle = 0, square, triangle, cross };
constexpr int kNumShapes = 4;
const char* shape_word(Shape s);
Shape shape_from_word(const std::string& word);  // ContractError on unknown word

struct PaletteColor {
    const char* word;
    uint8_t r, g, b;
};
// Entity colors are never pure gray, so color-equality segmentation can
// always separate subjects from the background.
constexpr int kNumColors = 6;
const PaletteColor& palette_color(int index);

struct Background {
    const char* word;
    uint8_t level;  // pure gray
};
constexpr int kNumBackgrounds = 4;
const Background& background(int index);

// ---- records ----

struct EntityAnnotation {
    std::string label;       // shape word
    std::string color_word;  // palette word
    std::string size_word;   // "small" | "big"
    int color_index = 0;
    std::array<double, 4> box{};      // normalized x0,y0,x1,y1
    std::vector<uint8_t> mask;        // H*W, 0/1, visible pixels of this entity
    bool color_in_caption = false;    // whether the caption names the color

    bool operator==(const EntityAnnotation&) const = default;
};

struct SceneRecord {
    Image image;  // RGB
    std::string caption;
    std::vector<EntityAnnotation> entities;
    int background_index = 0;
    uint64_t seed = 0;

    bool operator==(const SceneRecord&) const = default;
};

struct SubjectCrop {
    Image image;  // RGB at encoder resolution, background exactly zero
    int entity_index = 0;
};

// generation recipe; the allowed index sets must be non-empty
struct SceneSpec {
    int num_entities = 1;  // 1 or 2
    int height = 32, width = 32;
    std::vector<int> shapes = {0, 1, 2, 3};
    std::vector<int> colors = {0, 1, 2, 3, 4, 5};
    std::vector<int> backgrounds = {0, 1, 2, 3};
    double caption_color_prob = 0.5;  // chance the caption names an entity's color
    double two_entity_max_iou = 0.15;
    int max_placement_attempts = 200;
};

// ---- operations ----

// Pure function of (seed, spec): solid shapes, no anti-aliasing, exact masks.
SceneRecord generate_scene(uint64_t seed, const SceneSpec& spec);

// Zeroes the background via the visible-pixel mask, tight-crops to the box,
// then nearest-neighbor-resizes to resolution x resolution.
SubjectCrop crop_subject(const SceneRecord& record, int k, int resolution);

// elementwise OR over same-shaped binary masks
std::vector<uint8_t> overlay_masks(const std::vector<std::vector<uint8_t>>& masks);

// A templated prompt with placeholder bookkeeping. Token positions index into
// the tokenized ([BOS]-prefixed) sequence; label positions point at the first
// caption occurrence of each entity's label.
struct BoundPrompt {
    std::string text;
    std::vector<int> token_ids;        // length seq_len
    std::vector<int> placeholder_pos;  // per entity
    std::vector<int> label_pos;        // per entity

    bool operator==(const BoundPrompt&) const = default;
};

// caption + " , the {label_i} is [PH_i]" clauses in entity order
BoundPrompt build_prompt(const SceneRecord& record, const Vocab& vocab, int seq_len);

// prompt for a caption with no entity clauses (pure-text conditioning)
BoundPrompt build_text_prompt(const std::string& caption, const Vocab& vocab, int seq_len);

// re-derives entity k's visible mask from pixels (test oracle and data checks)
std::vector<uint8_t> segment_by_color(const Image& image, int color_index);

}  // namespace sfd
