#pragma once

#include <string>
#include <vector>

#include "data/scene.hpp"

namespace sfd {

// On-disk layout under dir/:
//   index.jsonl            one JSON object per record
//   images/{seed}.png      RGB scene
//   masks/{seed}_{k}.png   8-bit gray, 0 or 255, one per entity
// write/read round-trip exactly: pixels, masks, boxes, captions, seeds.
void write_dataset(const std::vector<SceneRecord>& records, const std::string& dir);
std::vector<SceneRecord> read_dataset(const std::string& dir);

// binary 0/1 mask <-> 0/255 gray image
Image mask_to_image(const std::vector<uint8_t>& mask, int h, int w);
std::vector<uint8_t> image_to_mask(const Image& img, const std::string& origin);

}  // namespace sfd
