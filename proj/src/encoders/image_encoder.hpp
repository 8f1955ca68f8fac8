#pragma once

#include "data/image.hpp"
#include "nn/layers.hpp"

namespace sfd {

struct ImageEncoderConfig {
    int resolution = 16;
    int patch = 4;
    int d_img = 48;
    int heads = 4;
    int layers = 2;
    int d_ff = 96;

    int patches_per_side() const { return resolution / patch; }
    int num_patches() const { return patches_per_side() * patches_per_side(); }
    int patch_dim() const { return patch * patch * 3; }
};

// RGB pixels in [0,255] -> rows of flattened patches scaled to [-1,1],
// row-major over patches, (y, x, channel) within a patch. Plain data.
template <class T>
Tensor<T> image_to_patches(const Image& img, int patch);

// ViT-style encoder over subject crops: patch embed + learned CLS token +
// learned positions + transformer. v_g is the CLS output (1 x d_img), v the
// patch outputs (P x d_img).
template <class T>
struct ImageEncoder {
    ImageEncoderConfig cfg;
    Linear<T> embed;  // patch_dim -> d_img
    Tensor<T> cls;    // 1 x d_img
    Tensor<T> pos;    // (P+1) x d_img
    std::vector<EncoderBlock<T>> blocks;
    LayerNorm<T> ln_f;

    ImageEncoder() = default;
    ImageEncoder(ParamMap<T>& pm, const ImageEncoderConfig& cfg, Rng& rng);

    struct Output {
        Tensor<T> v_g;  // 1 x d_img
        Tensor<T> v;    // P x d_img
    };
    Output encode(const Image& crop) const;  // throws DimError on wrong resolution
};

}  // namespace sfd
