#pragma once

#include <string>
#include <vector>

#include "core/ops.hpp"
#include "core/rng.hpp"
#include "nn/params.hpp"

namespace sfd {

// Small composable layers. Each constructor creates its tensors, registers
// them under "{prefix}.{leaf}" in the ParamMap, and seeds weights from the
// passed Rng, so models are reproducible from a single seed.

template <class T>
struct Linear {
    Tensor<T> w;  // (out x in)
    Tensor<T> b;  // (out), undefined when bias is disabled

    Linear() = default;
    Linear(ParamMap<T>& pm, const std::string& prefix, int in, int out, Rng& rng,
           bool bias = true);
    Tensor<T> forward(Tensor<T> x) const;  // (n x in) -> (n x out)
};

template <class T>
struct LayerNorm {
    Tensor<T> gamma, beta;

    LayerNorm() = default;
    LayerNorm(ParamMap<T>& pm, const std::string& prefix, int dim);
    Tensor<T> forward(Tensor<T> x) const;
};

template <class T>
struct GroupNorm {
    Tensor<T> gamma, beta;
    int groups = 1;

    GroupNorm() = default;
    GroupNorm(ParamMap<T>& pm, const std::string& prefix, int channels, int groups);
    Tensor<T> forward(Tensor<T> x) const;  // (c x h x w)
};

template <class T>
struct Conv {
    Tensor<T> w;  // (co x ci x k x k)
    Tensor<T> b;  // (co)
    int stride = 1, pad = 0;

    Conv() = default;
    // zero_init makes the layer output exactly 0 at construction (output head)
    Conv(ParamMap<T>& pm, const std::string& prefix, int ci, int co, int k, int stride,
         int pad, Rng& rng, bool zero_init = false);
    Tensor<T> forward(Tensor<T> x) const;
};

// Multi-head attention. Self-attention when q_in == kv_in; cross-attention
// reads keys/values from a kv_dim-wide sequence. When avg_map is non-null the
// head-averaged post-softmax attention (n_q x n_kv) is written there, still on
// the tape so losses over attention maps backpropagate.
template <class T>
struct Mha {
    Linear<T> wq, wk, wv, wo;
    int dim = 0, heads = 0;

    Mha() = default;
    Mha(ParamMap<T>& pm, const std::string& prefix, int dim, int heads, Rng& rng,
        int kv_dim = -1);
    Tensor<T> forward(Tensor<T> q_in, Tensor<T> kv_in, Tensor<T>* avg_map = nullptr) const;
};

template <class T>
struct Ffn {
    Linear<T> l1, l2;

    Ffn() = default;
    Ffn(ParamMap<T>& pm, const std::string& prefix, int dim, int hidden, Rng& rng);
    Tensor<T> forward(Tensor<T> x) const;
};

// pre-norm transformer encoder block: x += SA(LN(x)); x += FFN(LN(x))
template <class T>
struct EncoderBlock {
    LayerNorm<T> ln1, ln2;
    Mha<T> attn;
    Ffn<T> ffn;

    EncoderBlock() = default;
    EncoderBlock(ParamMap<T>& pm, const std::string& prefix, int dim, int heads, int hidden,
                 Rng& rng);
    Tensor<T> forward(Tensor<T> x) const;
};

// classic sin/cos embedding of a scalar position, as a constant (1 x dim) row
template <class T>
Tensor<T> sinusoidal_embedding(double pos, int dim);

// fresh tensor with N(0, sd^2) entries drawn from rng
template <class T>
Tensor<T> init_normal(std::vector<int> shape, double sd, Rng& rng);

}  // namespace sfd
