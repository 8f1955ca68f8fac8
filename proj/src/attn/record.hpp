#pragma once

#include <vector>

#include "core/tensor.hpp"

namespace sfd {

// One cross-attention layer's head-averaged map over spatial queries:
// map has shape (h*w) x seq_len and stays on the tape so attention losses
// backpropagate into the attention weights.
template <class T>
struct AttnLayerMap {
    Tensor<T> map;
    int h = 0, w = 0;
};

template <class T>
using AttentionRecord = std::vector<AttnLayerMap<T>>;

}  // namespace sfd
