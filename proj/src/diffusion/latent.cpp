#include "diffusion/latent.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"

namespace sfd {

template <class T>
Tensor<T> image_to_latent(const Image& img) {
    if (img.ch != 3) throw DimError(cat("latent codec needs RGB, got ", img.ch, " channels"));
    if (img.h % 2 != 0 || img.w % 2 != 0) {
        throw DimError(cat("latent codec needs even extents, got ", img.h, "x", img.w));
    }
    const int hh = img.h / 2, hw = img.w / 2;
    auto z = Tensor<T>::zeros({12, hh, hw});
    auto& v = z.values();
    for (int c = 0; c < 3; ++c) {
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
                const int oc = c * 4 + dy * 2 + dx;
                for (int y = 0; y < hh; ++y) {
                    for (int x = 0; x < hw; ++x) {
                        const double px = img.at(2 * y + dy, 2 * x + dx, c);
                        v[(static_cast<std::size_t>(oc) * hh + y) * hw + x] =
                            T(px / 127.5 - 1.0);
                    }
                }
            }
        }
    }
    return z;
}

template <class T>
Image latent_to_image(const Tensor<T>& z) {
    if (z.rank() != 3 || z.dim(0) != 12) {
        throw DimError("latent codec expects a 12-channel rank-3 tensor");
    }
    const int hh = z.dim(1), hw = z.dim(2);
    Image img(hh * 2, hw * 2, 3);
    const auto& v = z.values();
    for (int c = 0; c < 3; ++c) {
        for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
                const int oc = c * 4 + dy * 2 + dx;
                for (int y = 0; y < hh; ++y) {
                    for (int x = 0; x < hw; ++x) {
                        double u = double(v[(static_cast<std::size_t>(oc) * hh + y) * hw + x]);
                        u = std::clamp(u, -1.0, 1.0);
                        long p = std::lround((u + 1.0) * 127.5);
                        img.at(2 * y + dy, 2 * x + dx, c) =
                            static_cast<std::uint8_t>(std::clamp(p, 0l, 255l));
                    }
                }
            }
        }
    }
    return img;
}

template Tensor<float> image_to_latent<float>(const Image&);
template Tensor<double> image_to_latent<double>(const Image&);
template Image latent_to_image<float>(const Tensor<float>&);
template Image latent_to_image<double>(const Tensor<double>&);

}  // namespace sfd
