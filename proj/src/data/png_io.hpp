#pragma once

#include <string>
#include <vector>

#include "data/image.hpp"

namespace sfd {

// Minimal PNG codec for our own files: 8-bit gray or RGB, non-interlaced,
// filter type 0, fixed zlib level — so identical pixels always produce
// identical bytes on disk.
std::vector<uint8_t> png_encode(const Image& img);
Image png_decode(const std::vector<uint8_t>& bytes, const std::string& origin);

void png_write(const std::string& path, const Image& img);
Image png_read(const std::string& path);

}  // namespace sfd
