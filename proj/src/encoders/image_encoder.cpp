#include "encoders/image_encoder.hpp"

#include "core/error.hpp"

namespace sfd {

template <class T>
Tensor<T> image_to_patches(const Image& img, int patch) {
    if (img.ch != 3) throw DimError("patchify expects an RGB image");
    if (patch <= 0 || img.h % patch != 0 || img.w % patch != 0 || img.h != img.w)
        throw DimError(cat("image ", img.h, "x", img.w, " not divisible into ", patch,
                           "-pixel square patches"));
    const int side = img.h / patch;
    Tensor<T> out = Tensor<T>::zeros({side * side, patch * patch * 3});
    T* o = out.data();
    for (int py = 0; py < side; ++py)
        for (int px = 0; px < side; ++px) {
            T* row = o + static_cast<int64_t>(py * side + px) * patch * patch * 3;
            int i = 0;
            for (int y = 0; y < patch; ++y)
                for (int x = 0; x < patch; ++x)
                    for (int c = 0; c < 3; ++c)
                        row[i++] = static_cast<T>(
                            img.at(py * patch + y, px * patch + x, c) / 127.5 - 1.0);
        }
    return out;
}

template <class T>
ImageEncoder<T>::ImageEncoder(ParamMap<T>& pm, const ImageEncoderConfig& c, Rng& rng)
    : cfg(c) {
    if (cfg.resolution % cfg.patch != 0)
        throw DimError(cat("resolution ", cfg.resolution, " not divisible by patch ", cfg.patch));
    embed = Linear<T>(pm, "image.embed", cfg.patch_dim(), cfg.d_img, rng);
    cls = pm.add("image.cls", init_normal<T>({1, cfg.d_img}, 0.02, rng));
    pos = pm.add("image.pos", init_normal<T>({cfg.num_patches() + 1, cfg.d_img}, 0.02, rng));
    for (int i = 0; i < cfg.layers; ++i)
        blocks.emplace_back(pm, cat("image.b", i), cfg.d_img, cfg.heads, cfg.d_ff, rng);
    ln_f = LayerNorm<T>(pm, "image.lnf", cfg.d_img);
}

template <class T>
typename ImageEncoder<T>::Output ImageEncoder<T>::encode(const Image& crop) const {
    if (crop.h != cfg.resolution || crop.w != cfg.resolution)
        throw DimError(cat("subject crop is ", crop.h, "x", crop.w, ", encoder expects ",
                           cfg.resolution, "x", cfg.resolution));
    Tensor<T> x = embed.forward(image_to_patches<T>(crop, cfg.patch));
    x = ops::concat_rows<T>({cls, x});
    x = ops::add(x, pos);
    for (const auto& b : blocks) x = b.forward(x);
    x = ln_f.forward(x);
    const int p = cfg.num_patches();
    return {ops::slice_rows(x, 0, 1), ops::slice_rows(x, 1, p + 1)};
}

template Tensor<float> image_to_patches<float>(const Image&, int);
template Tensor<double> image_to_patches<double>(const Image&, int);
template struct ImageEncoder<float>;
template struct ImageEncoder<double>;

}  // namespace sfd
