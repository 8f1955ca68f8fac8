#pragma once

#include <vector>

#include "nn/layers.hpp"

namespace sfd {

struct TextEncoderConfig {
    int vocab_size = 0;
    int seq_len = 24;
    int d_cond = 64;
    int heads = 4;
    int layers = 2;
    int d_ff = 128;
    int d_img = 48;
};

// Which prompt positions are bound to entities (indices into the tokenized,
// [BOS]-prefixed sequence), in entity order.
struct TokenRoles {
    std::vector<int> placeholder_pos;
    std::vector<int> label_pos;
};

// Causal-mask-free transformer over fused token embeddings. Subject identity
// enters at the embedding layer: each placeholder token's row is replaced by a
// learned projection of that subject's global image embedding.
template <class T>
struct TextEncoder {
    TextEncoderConfig cfg;
    Tensor<T> embed;  // vocab_size x d_cond
    Tensor<T> pos;    // seq_len x d_cond
    Linear<T> proj;   // d_img -> d_cond, registered under "proj"
    std::vector<EncoderBlock<T>> blocks;
    LayerNorm<T> ln_f;

    TextEncoder() = default;
    TextEncoder(ParamMap<T>& pm, const TextEncoderConfig& cfg, Rng& rng);

    // Word-embedding lookup with placeholder rows swapped for proj(v_g_i).
    // Rows at non-placeholder positions are bit-identical to the plain lookup.
    Tensor<T> embed_and_fuse(const std::vector<int>& tokens,
                             const std::vector<Tensor<T>>& v_g,
                             const TokenRoles& roles) const;

    // fused layer-0 sequence -> condition matrix C (seq_len x d_cond)
    Tensor<T> encode(Tensor<T> fused) const;
};

}  // namespace sfd
