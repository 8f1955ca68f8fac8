#pragma once

#include <cstdint>
#include <vector>

#include "attn/record.hpp"
#include "core/tensor.hpp"
#include "encoders/text_encoder.hpp"

namespace sfd {

// Token position whose cross-attention map should concentrate on an entity's
// region. Both the caption label token and the subject placeholder bind.
struct TokenMaskBinding {
    int token_pos = 0;
    int entity = 0;
};

// Area-average downsampling of a binary pixel mask to a layer grid: each cell
// is the mean of its source block, so values live in [0,1]. Requires integer
// ratios in both axes.
template <class T>
Tensor<T> resize_mask(const std::vector<std::uint8_t>& mask, int src_h, int src_w, int dst_h, int dst_w);

// Hard variant used for the stem-conv location channel: a cell switches on
// when at least a quarter of its source block is masked.
template <class T>
Tensor<T> binary_location_mask(const std::vector<std::uint8_t>& mask, int src_h, int src_w, int side);

// expands per-entity roles into bindings (label first, then placeholder)
std::vector<TokenMaskBinding> bindings_from_roles(const TokenRoles& roles);

// Mean absolute deviation between each bound token's attention column and the
// entity's resized mask: elementwise mean per layer, summed over layers,
// averaged over bindings. Differentiable through the maps.
template <class T>
Tensor<T> attention_loss(const AttentionRecord<T>& rec,
                         const std::vector<TokenMaskBinding>& bindings,
                         const std::vector<std::vector<std::uint8_t>>& entity_masks,
                         int src_h, int src_w,
                         const std::vector<int>& tokens);

}  // namespace sfd
