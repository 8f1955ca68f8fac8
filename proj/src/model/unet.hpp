#pragma once

#include <array>

#include "attn/record.hpp"
#include "model/adapter.hpp"
#include "nn/layers.hpp"

namespace sfd {

struct UNetConfig {
    int latent_ch = 12;  // space-to-depth RGB latent
    int base = 16;       // latent spatial side
    std::array<int, 3> widths = {64, 96, 128};
    int heads = 4;
    int d_cond = 64;
    int d_img = 48;
    int fourier_k = 4;
    int time_dim = 128;
    int gn_groups = 8;
    double beta_adapter = 1.0;  // constant balance factor on the adapter gate
    bool zero_init_out = true;  // predicted noise starts at exactly 0
};

// GroupNorm -> SiLU -> conv, timestep scale/shift injection, second conv, skip.
template <class T>
struct ResBlock {
    GroupNorm<T> gn1, gn2;
    Conv<T> conv1, conv2, skip;
    Linear<T> time_proj;  // time_dim -> 2*c_out
    int c_in = 0, c_out = 0;

    ResBlock() = default;
    ResBlock(ParamMap<T>& pm, const std::string& prefix, int c_in, int c_out, int time_dim,
             int gn_groups, Rng& rng);
    Tensor<T> forward(Tensor<T> x, Tensor<T> t_emb) const;
};

// Spatial transformer block: tokens run self-attention, the grounding adapter,
// then cross-attention against the condition matrix (whose head-averaged map
// is recorded for attention control).
template <class T>
struct XBlock {
    GroupNorm<T> gn;
    Conv<T> proj_in, proj_out;  // 1x1
    LayerNorm<T> ln1, ln2;
    Mha<T> sa, ca;
    AdapterParams<T> adapter;
    int ch = 0;

    XBlock() = default;
    XBlock(ParamMap<T>& pm, const std::string& prefix, int ch, int heads, int d_cond,
           int d_img, int fourier_k, int gn_groups, Rng& rng);
    Tensor<T> forward(Tensor<T> x, Tensor<T> cond, const AdapterInput<T>& ad, T beta,
                      AttnLayerMap<T>* rec) const;
};

template <class T>
struct UNetOutput {
    Tensor<T> eps;             // latent-shaped noise prediction
    AttentionRecord<T> attn;   // cross-attention maps at {16, 8, 4}
};

// Three-level denoiser over the 12-channel latent plus a 1-channel location
// mask: 16 -> 8 -> 4 with one ResBlock+XBlock per level down, an attention
// bottleneck, and a skip-connected decoder.
template <class T>
struct UNet {
    UNetConfig cfg;
    Linear<T> time1, time2;
    Conv<T> conv_in;  // latent_ch + 1 (mask) -> widths[0]
    ResBlock<T> d16_res;
    XBlock<T> d16_attn;
    Conv<T> down16;
    ResBlock<T> d8_res;
    XBlock<T> d8_attn;
    Conv<T> down8;
    ResBlock<T> mid_res1, mid_res2;
    XBlock<T> mid_attn;
    Conv<T> up4, up8;  // 1x1 channel maps after 2x upsampling
    ResBlock<T> u8_res;
    Conv<T> u16_conv;
    GroupNorm<T> out_gn;
    Conv<T> out_conv;

    UNet() = default;
    UNet(ParamMap<T>& pm, const UNetConfig& cfg, Rng& rng);

    // channel-concat of latent and location mask through the stem conv
    Tensor<T> conv_in_concat(Tensor<T> z_t, Tensor<T> l_m) const;
    // timestep embedding MLP over the sinusoidal encoding of t
    Tensor<T> time_embedding(int t) const;

    UNetOutput<T> forward(Tensor<T> z_t, Tensor<T> l_m, int t, Tensor<T> cond,
                          const AdapterInput<T>& ad) const;
};

}  // namespace sfd
