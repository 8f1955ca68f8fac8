#pragma once

#include <array>

#include "core/tensor.hpp"

namespace sfd {

// Fourier features of a normalized box: per coordinate c in (x0,y0,x1,y1),
// [sin(2pi*2^j*c), cos(2pi*2^j*c)] for j = 0..K-1, concatenated -> 1 x 8K.
// Constant data (no gradient path to coordinates).
template <class T>
Tensor<T> fourier_box_features(const std::array<double, 4>& box, int k_freqs);

}  // namespace sfd
