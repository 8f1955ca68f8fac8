#include "encoders/text_encoder.hpp"

#include "core/error.hpp"

namespace sfd {

template <class T>
TextEncoder<T>::TextEncoder(ParamMap<T>& pm, const TextEncoderConfig& c, Rng& rng) : cfg(c) {
    if (cfg.vocab_size <= 0) throw ContractError("text encoder needs a vocabulary size");
    embed = pm.add("text.embed", init_normal<T>({cfg.vocab_size, cfg.d_cond}, 0.02, rng));
    pos = pm.add("text.pos", init_normal<T>({cfg.seq_len, cfg.d_cond}, 0.02, rng));
    proj = Linear<T>(pm, "proj", cfg.d_img, cfg.d_cond, rng);
    for (int i = 0; i < cfg.layers; ++i)
        blocks.emplace_back(pm, cat("text.b", i), cfg.d_cond, cfg.heads, cfg.d_ff, rng);
    ln_f = LayerNorm<T>(pm, "text.lnf", cfg.d_cond);
}

template <class T>
Tensor<T> TextEncoder<T>::embed_and_fuse(const std::vector<int>& tokens,
                                         const std::vector<Tensor<T>>& v_g,
                                         const TokenRoles& roles) const {
    if (static_cast<int>(tokens.size()) != cfg.seq_len)
        throw DimError(cat("token sequence length ", tokens.size(), ", expected ", cfg.seq_len));
    if (roles.placeholder_pos.size() != v_g.size())
        throw ContractError(cat("placeholder count ", roles.placeholder_pos.size(),
                                " does not match subject embedding count ", v_g.size()));
    Tensor<T> base = ops::rows_gather(embed, tokens);
    if (v_g.empty()) return base;

    int prev = -1;
    for (int p : roles.placeholder_pos) {
        if (p <= prev || p >= cfg.seq_len)
            throw ContractError(cat("placeholder positions must be ascending and < seq_len",
                                    ", got ", p));
        prev = p;
    }
    // stitch: base rows up to each placeholder, then the projected subject row
    std::vector<Tensor<T>> parts;
    int cursor = 0;
    for (size_t i = 0; i < v_g.size(); ++i) {
        const int p = roles.placeholder_pos[i];
        if (p > cursor) parts.push_back(ops::slice_rows(base, cursor, p));
        parts.push_back(proj.forward(v_g[i]));
        cursor = p + 1;
    }
    if (cursor < cfg.seq_len) parts.push_back(ops::slice_rows(base, cursor, cfg.seq_len));
    return ops::concat_rows(parts);
}

template <class T>
Tensor<T> TextEncoder<T>::encode(Tensor<T> fused) const {
    if (fused.rank() != 2 || fused.dim(0) != cfg.seq_len || fused.dim(1) != cfg.d_cond)
        throw DimError("fused sequence has the wrong shape for the text encoder");
    Tensor<T> x = ops::add(fused, pos);
    for (const auto& b : blocks) x = b.forward(x);
    return ln_f.forward(x);
}

template struct TextEncoder<float>;
template struct TextEncoder<double>;

}  // namespace sfd
