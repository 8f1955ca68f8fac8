#include "attn/attn_control.hpp"

#include "core/error.hpp"
#include "core/ops.hpp"
#include "encoders/vocab.hpp"

namespace sfd {

template <class T>
Tensor<T> resize_mask(const std::vector<std::uint8_t>& mask, int src_h, int src_w, int dst_h,
                      int dst_w) {
    if (src_h <= 0 || src_w <= 0 || dst_h <= 0 || dst_w <= 0) {
        throw ContractError("resize_mask: extents must be positive");
    }
    if (static_cast<int>(mask.size()) != src_h * src_w) {
        throw ContractError(cat("resize_mask: mask holds ", mask.size(), " values for ", src_h, "x", src_w));
    }
    if (src_h % dst_h != 0 || src_w % dst_w != 0) {
        throw ContractError(cat("resize_mask: ", src_h, "x", src_w, " -> ", dst_h, "x", dst_w,
                                " is not an integer reduction"));
    }
    for (std::uint8_t v : mask) {
        if (v > 1) throw ContractError("resize_mask: mask values must be 0 or 1");
    }
    const int by = src_h / dst_h, bx = src_w / dst_w;
    auto out = Tensor<T>::zeros({dst_h, dst_w});
    auto& o = out.values();
    for (int y = 0; y < dst_h; ++y) {
        for (int x = 0; x < dst_w; ++x) {
            long acc = 0;
            for (int dy = 0; dy < by; ++dy) {
                for (int dx = 0; dx < bx; ++dx) {
                    acc += mask[static_cast<std::size_t>(y * by + dy) * src_w + (x * bx + dx)];
                }
            }
            o[static_cast<std::size_t>(y) * dst_w + x] = T(double(acc) / double(by * bx));
        }
    }
    return out;
}

template <class T>
Tensor<T> binary_location_mask(const std::vector<std::uint8_t>& mask, int src_h, int src_w,
                               int side) {
    auto soft = resize_mask<T>(mask, src_h, src_w, side, side);
    auto out = Tensor<T>::zeros({1, side, side});
    auto& o = out.values();
    const auto& s = soft.values();
    for (std::size_t i = 0; i < s.size(); ++i) o[i] = s[i] >= T(0.25) ? T(1) : T(0);
    return out;
}

std::vector<TokenMaskBinding> bindings_from_roles(const TokenRoles& roles) {
    if (roles.label_pos.size() != roles.placeholder_pos.size()) {
        throw ContractError("bindings_from_roles: role position lists disagree");
    }
    std::vector<TokenMaskBinding> out;
    for (std::size_t k = 0; k < roles.label_pos.size(); ++k) {
        out.push_back({roles.label_pos[k], static_cast<int>(k)});
        out.push_back({roles.placeholder_pos[k], static_cast<int>(k)});
    }
    return out;
}

template <class T>
Tensor<T> attention_loss(const AttentionRecord<T>& rec,
                         const std::vector<TokenMaskBinding>& bindings,
                         const std::vector<std::vector<std::uint8_t>>& entity_masks, int src_h,
                         int src_w, const std::vector<int>& tokens) {
    if (rec.empty()) throw ContractError("attention_loss: no recorded layers");
    if (bindings.empty()) throw ContractError("attention_loss: no bound tokens");
    const int seq_len = rec[0].map.dim(1);
    if (static_cast<int>(tokens.size()) != seq_len) {
        throw ContractError(cat("attention_loss: ", tokens.size(), " tokens for maps over ", seq_len));
    }
    for (const auto& b : bindings) {
        if (b.token_pos < 0 || b.token_pos >= seq_len) {
            throw ContractError(cat("attention_loss: token position ", b.token_pos, " out of range"));
        }
        if (tokens[static_cast<std::size_t>(b.token_pos)] == Vocab::kPad) {
            throw ContractError(cat("attention_loss: position ", b.token_pos, " is padding"));
        }
        if (b.entity < 0 || b.entity >= static_cast<int>(entity_masks.size())) {
            throw ContractError(cat("attention_loss: entity ", b.entity, " has no mask"));
        }
    }
    // resized targets are fixed data; cache per (entity, layer)
    std::vector<std::vector<Tensor<T>>> target(entity_masks.size());
    for (std::size_t e = 0; e < entity_masks.size(); ++e) {
        for (const auto& layer : rec) {
            auto r = resize_mask<T>(entity_masks[e], src_h, src_w, layer.h, layer.w);
            target[e].push_back(ops::reshape(r, {layer.h * layer.w, 1}));
        }
    }
    std::vector<Tensor<T>> per_binding;
    for (const auto& b : bindings) {
        std::vector<Tensor<T>> layer_terms;
        for (std::size_t li = 0; li < rec.size(); ++li) {
            auto col = ops::slice_cols(rec[li].map, b.token_pos, b.token_pos + 1);
            layer_terms.push_back(ops::l1_mean(col, target[static_cast<std::size_t>(b.entity)][li]));
        }
        per_binding.push_back(ops::add_n(layer_terms));
    }
    return ops::average(per_binding);
}

template Tensor<float> resize_mask<float>(const std::vector<std::uint8_t>&, int, int, int, int);
template Tensor<double> resize_mask<double>(const std::vector<std::uint8_t>&, int, int, int, int);
template Tensor<float> binary_location_mask<float>(const std::vector<std::uint8_t>&, int, int, int);
template Tensor<double> binary_location_mask<double>(const std::vector<std::uint8_t>&, int, int, int);
template Tensor<float> attention_loss<float>(const AttentionRecord<float>&,
                                             const std::vector<TokenMaskBinding>&,
                                             const std::vector<std::vector<std::uint8_t>>&, int,
                                             int, const std::vector<int>&);
template Tensor<double> attention_loss<double>(const AttentionRecord<double>&,
                                               const std::vector<TokenMaskBinding>&,
                                               const std::vector<std::vector<std::uint8_t>>&, int,
                                               int, const std::vector<int>&);

}  // namespace sfd
