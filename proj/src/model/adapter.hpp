#pragma once

#include <array>
#include <vector>

#include "nn/layers.hpp"

namespace sfd {

// Per-subject grounding inputs to an adapter layer: patch tokens from the
// image encoder and the subject's normalized box.
template <class T>
struct AdapterInput {
    std::vector<Tensor<T>> v;                 // each P x d_img
    std::vector<std::array<double, 4>> l;     // one box per subject

    int subjects() const { return static_cast<int>(v.size()); }
};

// Gated grounding adapter: L_a += beta * tanh(gamma) * S([L_a, h^e]) where
// h^e = MLP([v, Fourier(l)]) contributes extra tokens that S attends over
// jointly with L_a; the output is truncated back to L_a's token count.
// gamma starts at exactly 0, so a fresh adapter is an exact identity.
template <class T>
struct AdapterParams {
    Tensor<T> gamma;       // learned scalar gate, init 0
    Linear<T> mlp1, mlp2;  // (d_img + 8K) -> hidden -> d_block
    Mha<T> s;              // joint self-attention over [L_a, h^e]
    int fourier_k = 4;

    AdapterParams() = default;
    AdapterParams(ParamMap<T>& pm, const std::string& prefix, int d_block, int d_img,
                  int fourier_k, int heads, Rng& rng);
};

template <class T>
Tensor<T> adapter_forward(Tensor<T> l_a, const AdapterInput<T>& in,
                          const AdapterParams<T>& params, T beta);

}  // namespace sfd
