#include "model/unet.hpp"

#include "core/error.hpp"

namespace sfd {

// ---- ResBlock ----

template <class T>
ResBlock<T>::ResBlock(ParamMap<T>& pm, const std::string& prefix, int ci, int co,
                      int time_dim, int gn_groups, Rng& rng)
    : c_in(ci), c_out(co) {
    gn1 = GroupNorm<T>(pm, prefix + ".gn1", ci, gn_groups);
    conv1 = Conv<T>(pm, prefix + ".conv1", ci, co, 3, 1, 1, rng);
    time_proj = Linear<T>(pm, prefix + ".time", time_dim, 2 * co, rng);
    gn2 = GroupNorm<T>(pm, prefix + ".gn2", co, gn_groups);
    conv2 = Conv<T>(pm, prefix + ".conv2", co, co, 3, 1, 1, rng);
    if (ci != co) skip = Conv<T>(pm, prefix + ".skip", ci, co, 1, 1, 0, rng);
}

template <class T>
Tensor<T> ResBlock<T>::forward(Tensor<T> x, Tensor<T> t_emb) const {
    Tensor<T> h = conv1.forward(ops::silu(gn1.forward(x)));
    const Tensor<T> tv = time_proj.forward(t_emb);  // 1 x 2c
    const Tensor<T> scale = ops::reshape(ops::slice_cols(tv, 0, c_out), {c_out});
    const Tensor<T> shift = ops::reshape(ops::slice_cols(tv, c_out, 2 * c_out), {c_out});
    h = ops::channel_affine(h, scale, shift);
    h = conv2.forward(ops::silu(gn2.forward(h)));
    const Tensor<T> res = skip.w.defined() ? skip.forward(x) : x;
    return ops::add(h, res);
}

// ---- XBlock ----

template <class T>
XBlock<T>::XBlock(ParamMap<T>& pm, const std::string& prefix, int ch_, int heads, int d_cond,
                  int d_img, int fourier_k, int gn_groups, Rng& rng)
    : ch(ch_) {
    gn = GroupNorm<T>(pm, prefix + ".gn", ch, gn_groups);
    proj_in = Conv<T>(pm, prefix + ".pin", ch, ch, 1, 1, 0, rng);
    ln1 = LayerNorm<T>(pm, prefix + ".ln1", ch);
    sa = Mha<T>(pm, prefix + ".sa", ch, heads, rng);
    adapter = AdapterParams<T>(pm, prefix + ".ad", ch, d_img, fourier_k, heads, rng);
    ln2 = LayerNorm<T>(pm, prefix + ".ln2", ch);
    ca = Mha<T>(pm, prefix + ".ca", ch, heads, rng, /*kv_dim=*/d_cond);
    proj_out = Conv<T>(pm, prefix + ".pout", ch, ch, 1, 1, 0, rng);
}

template <class T>
Tensor<T> XBlock<T>::forward(Tensor<T> x, Tensor<T> cond, const AdapterInput<T>& ad, T beta,
                             AttnLayerMap<T>* rec) const {
    const int h = x.dim(1), w = x.dim(2);
    Tensor<T> t = proj_in.forward(gn.forward(x));
    Tensor<T> tok = ops::transpose2d(ops::reshape(t, {ch, h * w}));  // hw x ch
    const Tensor<T> n1 = ln1.forward(tok);
    tok = ops::add(tok, sa.forward(n1, n1));
    tok = adapter_forward(tok, ad, adapter, beta);
    Tensor<T> map;
    tok = ops::add(tok, ca.forward(ln2.forward(tok), cond, &map));
    if (rec) {
        rec->map = map;
        rec->h = h;
        rec->w = w;
    }
    Tensor<T> y = ops::reshape(ops::transpose2d(tok), {ch, h, w});
    return ops::add(x, proj_out.forward(y));
}

// ---- UNet ----

template <class T>
UNet<T>::UNet(ParamMap<T>& pm, const UNetConfig& c, Rng& rng) : cfg(c) {
    const int w0 = cfg.widths[0], w1 = cfg.widths[1], w2 = cfg.widths[2];
    time1 = Linear<T>(pm, "unet.time1", cfg.time_dim, cfg.time_dim, rng);
    time2 = Linear<T>(pm, "unet.time2", cfg.time_dim, cfg.time_dim, rng);
    conv_in = Conv<T>(pm, "unet.conv_in", cfg.latent_ch + 1, w0, 3, 1, 1, rng);
    d16_res = ResBlock<T>(pm, "unet.d16.res", w0, w0, cfg.time_dim, cfg.gn_groups, rng);
    d16_attn = XBlock<T>(pm, "unet.d16.x", w0, cfg.heads, cfg.d_cond, cfg.d_img,
                         cfg.fourier_k, cfg.gn_groups, rng);
    down16 = Conv<T>(pm, "unet.down16", w0, w1, 3, 2, 1, rng);
    d8_res = ResBlock<T>(pm, "unet.d8.res", w1, w1, cfg.time_dim, cfg.gn_groups, rng);
    d8_attn = XBlock<T>(pm, "unet.d8.x", w1, cfg.heads, cfg.d_cond, cfg.d_img, cfg.fourier_k,
                        cfg.gn_groups, rng);
    down8 = Conv<T>(pm, "unet.down8", w1, w2, 3, 2, 1, rng);
    mid_res1 = ResBlock<T>(pm, "unet.mid.res1", w2, w2, cfg.time_dim, cfg.gn_groups, rng);
    mid_attn = XBlock<T>(pm, "unet.mid.x", w2, cfg.heads, cfg.d_cond, cfg.d_img,
                         cfg.fourier_k, cfg.gn_groups, rng);
    mid_res2 = ResBlock<T>(pm, "unet.mid.res2", w2, w2, cfg.time_dim, cfg.gn_groups, rng);
    up4 = Conv<T>(pm, "unet.up4", w2, w1, 1, 1, 0, rng);
    u8_res = ResBlock<T>(pm, "unet.u8.res", w1, w1, cfg.time_dim, cfg.gn_groups, rng);
    up8 = Conv<T>(pm, "unet.up8", w1, w0, 1, 1, 0, rng);
    u16_conv = Conv<T>(pm, "unet.u16.conv", w0, w0, 3, 1, 1, rng);
    out_gn = GroupNorm<T>(pm, "unet.out.gn", w0, cfg.gn_groups);
    out_conv = Conv<T>(pm, "unet.out.conv", w0, cfg.latent_ch, 3, 1, 1, rng,
                       /*zero_init=*/cfg.zero_init_out);
}

template <class T>
Tensor<T> UNet<T>::conv_in_concat(Tensor<T> z_t, Tensor<T> l_m) const {
    if (z_t.rank() != 3 || z_t.dim(0) != cfg.latent_ch || z_t.dim(1) != cfg.base ||
        z_t.dim(2) != cfg.base)
        throw DimError(cat("latent must be ", cfg.latent_ch, "x", cfg.base, "x", cfg.base));
    if (l_m.rank() != 3 || l_m.dim(0) != 1 || l_m.dim(1) != cfg.base || l_m.dim(2) != cfg.base)
        throw DimError(cat("location mask must be 1x", cfg.base, "x", cfg.base));
    return conv_in.forward(ops::concat_channels(z_t, l_m));
}

template <class T>
Tensor<T> UNet<T>::time_embedding(int t) const {
    if (t < 0) throw ContractError(cat("negative timestep ", t));
    const Tensor<T> enc = sinusoidal_embedding<T>(double(t), cfg.time_dim);
    return time2.forward(ops::silu(time1.forward(enc)));
}

template <class T>
UNetOutput<T> UNet<T>::forward(Tensor<T> z_t, Tensor<T> l_m, int t, Tensor<T> cond,
                               const AdapterInput<T>& ad) const {
    if (!cond.defined() || cond.rank() != 2 || cond.dim(1) != cfg.d_cond)
        throw DimError("condition matrix must be seq_len x d_cond");
    const T beta = static_cast<T>(cfg.beta_adapter);
    const Tensor<T> t_emb = time_embedding(t);

    UNetOutput<T> out;
    out.attn.resize(3);
    Tensor<T> x = conv_in_concat(z_t, l_m);
    x = d16_res.forward(x, t_emb);
    x = d16_attn.forward(x, cond, ad, beta, &out.attn[0]);
    const Tensor<T> skip16 = x;
    x = down16.forward(x);
    x = d8_res.forward(x, t_emb);
    x = d8_attn.forward(x, cond, ad, beta, &out.attn[1]);
    const Tensor<T> skip8 = x;
    x = down8.forward(x);
    x = mid_res1.forward(x, t_emb);
    x = mid_attn.forward(x, cond, ad, beta, &out.attn[2]);
    x = mid_res2.forward(x, t_emb);
    x = up4.forward(ops::upsample2x(x));
    x = ops::add(x, skip8);
    x = u8_res.forward(x, t_emb);
    x = up8.forward(ops::upsample2x(x));
    x = ops::add(x, skip16);
    x = ops::add(x, u16_conv.forward(ops::silu(x)));
    out.eps = out_conv.forward(ops::silu(out_gn.forward(x)));
    return out;
}

#define SFD_INSTANTIATE_UNET(T)  \
    template struct ResBlock<T>; \
    template struct XBlock<T>;   \
    template struct UNet<T>;

SFD_INSTANTIATE_UNET(float)
SFD_INSTANTIATE_UNET(double)

}  // namespace sfd
