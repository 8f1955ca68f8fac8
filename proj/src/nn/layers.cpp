#include "nn/layers.hpp"

#include <cmath>

#include "core/error.hpp"

namespace sfd {

template <class T>
Tensor<T> init_normal(std::vector<int> shape, double sd, Rng& rng) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    T* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(rng.normal(0.0, sd));
    return t;
}

// ---- Linear ----

template <class T>
Linear<T>::Linear(ParamMap<T>& pm, const std::string& prefix, int in, int out, Rng& rng,
                  bool bias) {
    if (in <= 0 || out <= 0) throw DimError(cat("linear dims must be positive: ", in, "x", out));
    w = pm.add(prefix + ".w", init_normal<T>({out, in}, 1.0 / std::sqrt(double(in)), rng));
    if (bias) b = pm.add(prefix + ".b", Tensor<T>::zeros({out}));
}

template <class T>
Tensor<T> Linear<T>::forward(Tensor<T> x) const {
    Tensor<T> y = ops::matmul_nt(x, w);
    if (b.defined()) y = ops::add_rowvec(y, b);
    return y;
}

// ---- LayerNorm ----

template <class T>
LayerNorm<T>::LayerNorm(ParamMap<T>& pm, const std::string& prefix, int dim) {
    gamma = pm.add(prefix + ".g", Tensor<T>::full({dim}, T(1)));
    beta = pm.add(prefix + ".b", Tensor<T>::zeros({dim}));
}

template <class T>
Tensor<T> LayerNorm<T>::forward(Tensor<T> x) const {
    return ops::layer_norm(x, gamma, beta, T(1e-5));
}

// ---- GroupNorm ----

template <class T>
GroupNorm<T>::GroupNorm(ParamMap<T>& pm, const std::string& prefix, int channels, int g)
    : groups(g) {
    if (channels % g != 0)
        throw DimError(cat("channels ", channels, " not divisible by ", g, " groups"));
    gamma = pm.add(prefix + ".g", Tensor<T>::full({channels}, T(1)));
    beta = pm.add(prefix + ".b", Tensor<T>::zeros({channels}));
}

template <class T>
Tensor<T> GroupNorm<T>::forward(Tensor<T> x) const {
    return ops::group_norm(x, gamma, beta, groups, T(1e-5));
}

// ---- Conv ----

template <class T>
Conv<T>::Conv(ParamMap<T>& pm, const std::string& prefix, int ci, int co, int k, int stride_,
              int pad_, Rng& rng, bool zero_init)
    : stride(stride_), pad(pad_) {
    const double sd = zero_init ? 0.0 : 1.0 / std::sqrt(double(ci) * k * k);
    w = pm.add(prefix + ".w", zero_init ? Tensor<T>::zeros({co, ci, k, k})
                                        : init_normal<T>({co, ci, k, k}, sd, rng));
    b = pm.add(prefix + ".b", Tensor<T>::zeros({co}));
}

template <class T>
Tensor<T> Conv<T>::forward(Tensor<T> x) const {
    return ops::conv2d(x, w, b, stride, pad);
}

// ---- Mha ----

template <class T>
Mha<T>::Mha(ParamMap<T>& pm, const std::string& prefix, int dim_, int heads_, Rng& rng,
            int kv_dim)
    : dim(dim_), heads(heads_) {
    if (dim % heads != 0)
        throw DimError(cat("attention dim ", dim, " not divisible by ", heads, " heads"));
    if (kv_dim < 0) kv_dim = dim;
    wq = Linear<T>(pm, prefix + ".q", dim, dim, rng);
    wk = Linear<T>(pm, prefix + ".k", kv_dim, dim, rng);
    wv = Linear<T>(pm, prefix + ".v", kv_dim, dim, rng);
    wo = Linear<T>(pm, prefix + ".o", dim, dim, rng);
}

template <class T>
Tensor<T> Mha<T>::forward(Tensor<T> q_in, Tensor<T> kv_in, Tensor<T>* avg_map) const {
    const Tensor<T> q = wq.forward(q_in);
    const Tensor<T> k = wk.forward(kv_in);
    const Tensor<T> v = wv.forward(kv_in);
    const int dh = dim / heads;
    const T scale = static_cast<T>(1.0 / std::sqrt(double(dh)));
    std::vector<Tensor<T>> outs, maps;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        const Tensor<T> qh = ops::slice_cols(q, h * dh, (h + 1) * dh);
        const Tensor<T> kh = ops::slice_cols(k, h * dh, (h + 1) * dh);
        const Tensor<T> vh = ops::slice_cols(v, h * dh, (h + 1) * dh);
        const Tensor<T> attn =
            ops::softmax(ops::mul_scalar(ops::matmul_nt(qh, kh), scale), 1);
        if (avg_map) maps.push_back(attn);
        outs.push_back(ops::matmul(attn, vh));
    }
    if (avg_map) *avg_map = ops::average(maps);
    return wo.forward(ops::concat_cols(outs));
}

// ---- Ffn ----

template <class T>
Ffn<T>::Ffn(ParamMap<T>& pm, const std::string& prefix, int dim, int hidden, Rng& rng) {
    l1 = Linear<T>(pm, prefix + ".l1", dim, hidden, rng);
    l2 = Linear<T>(pm, prefix + ".l2", hidden, dim, rng);
}

template <class T>
Tensor<T> Ffn<T>::forward(Tensor<T> x) const {
    return l2.forward(ops::gelu(l1.forward(x)));
}

// ---- EncoderBlock ----

template <class T>
EncoderBlock<T>::EncoderBlock(ParamMap<T>& pm, const std::string& prefix, int dim, int heads,
                              int hidden, Rng& rng) {
    ln1 = LayerNorm<T>(pm, prefix + ".ln1", dim);
    attn = Mha<T>(pm, prefix + ".sa", dim, heads, rng);
    ln2 = LayerNorm<T>(pm, prefix + ".ln2", dim);
    ffn = Ffn<T>(pm, prefix + ".ffn", dim, hidden, rng);
}

template <class T>
Tensor<T> EncoderBlock<T>::forward(Tensor<T> x) const {
    const Tensor<T> h = ln1.forward(x);
    x = ops::add(x, attn.forward(h, h));
    x = ops::add(x, ffn.forward(ln2.forward(x)));
    return x;
}

// ---- sinusoidal embedding ----

template <class T>
Tensor<T> sinusoidal_embedding(double pos, int dim) {
    if (dim <= 0 || dim % 2 != 0) throw DimError(cat("embedding dim must be even: ", dim));
    Tensor<T> e = Tensor<T>::zeros({1, dim});
    T* p = e.data();
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * double(i) / double(half));
        p[i] = static_cast<T>(std::sin(pos * freq));
        p[half + i] = static_cast<T>(std::cos(pos * freq));
    }
    return e;
}

#define SFD_INSTANTIATE_LAYERS(T)                 \
    template struct Linear<T>;                    \
    template struct LayerNorm<T>;                 \
    template struct GroupNorm<T>;                 \
    template struct Conv<T>;                      \
    template struct Mha<T>;                       \
    template struct Ffn<T>;                       \
    template struct EncoderBlock<T>;              \
    template Tensor<T> sinusoidal_embedding<T>(double, int); \
    template Tensor<T> init_normal<T>(std::vector<int>, double, Rng&);

SFD_INSTANTIATE_LAYERS(float)
SFD_INSTANTIATE_LAYERS(double)

}  // namespace sfd
