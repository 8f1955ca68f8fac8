#pragma once

#include "core/tensor.hpp"
#include "data/image.hpp"

namespace sfd {

// Lossless latent codec: RGB pixels scaled to [-1, 1] and rearranged
// space-to-depth by a factor of 2, so a 3 x H x W image becomes a
// 12 x H/2 x W/2 latent. Channel order: out[c*4 + dy*2 + dx][y][x] =
// in[c][2y+dy][2x+dx].
template <class T>
Tensor<T> image_to_latent(const Image& img);

// exact inverse; values are clamped to [-1, 1] before quantization
template <class T>
Image latent_to_image(const Tensor<T>& z);

}  // namespace sfd
