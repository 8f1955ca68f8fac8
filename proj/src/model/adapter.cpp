#include "model/adapter.hpp"

#include "core/error.hpp"
#include "model/fourier.hpp"

namespace sfd {

template <class T>
AdapterParams<T>::AdapterParams(ParamMap<T>& pm, const std::string& prefix, int d_block,
                                int d_img, int k, int heads, Rng& rng)
    : fourier_k(k) {
    gamma = pm.add(prefix + ".gamma", Tensor<T>::zeros({1}));
    const int in_dim = d_img + 8 * k;
    mlp1 = Linear<T>(pm, prefix + ".mlp1", in_dim, d_block, rng);
    mlp2 = Linear<T>(pm, prefix + ".mlp2", d_block, d_block, rng);
    s = Mha<T>(pm, prefix + ".s", d_block, heads, rng);
}

template <class T>
Tensor<T> adapter_forward(Tensor<T> l_a, const AdapterInput<T>& in,
                          const AdapterParams<T>& params, T beta) {
    if (in.v.size() != in.l.size())
        throw ContractError(cat("adapter has ", in.v.size(), " patch-token sets but ",
                                in.l.size(), " boxes"));
    if (in.v.empty()) return l_a;  // no subjects: the adapter is absent

    std::vector<Tensor<T>> tokens = {l_a};
    for (int k = 0; k < in.subjects(); ++k) {
        const Tensor<T>& v = in.v[k];
        if (v.rank() != 2) throw DimError("adapter patch tokens must be rank 2");
        const Tensor<T> four = fourier_box_features<T>(in.l[k], params.fourier_k);
        // every patch row carries the same box features
        Tensor<T> rep = Tensor<T>::zeros({v.dim(0), four.dim(1)});
        for (int r = 0; r < v.dim(0); ++r)
            for (int c = 0; c < four.dim(1); ++c)
                rep.data()[r * four.dim(1) + c] = four.values()[c];
        const Tensor<T> grounded = ops::concat_cols<T>({v, rep});
        tokens.push_back(params.mlp2.forward(ops::gelu(params.mlp1.forward(grounded))));
    }
    const Tensor<T> joint = ops::concat_rows(tokens);
    const Tensor<T> attended = params.s.forward(joint, joint);
    const Tensor<T> trunc = ops::slice_rows(attended, 0, l_a.dim(0));
    const Tensor<T> gated = ops::scale_by(trunc, ops::tanh_op(params.gamma));
    return ops::add(l_a, ops::mul_scalar(gated, beta));
}

template struct AdapterParams<float>;
template struct AdapterParams<double>;
template Tensor<float> adapter_forward<float>(Tensor<float>, const AdapterInput<float>&,
                                              const AdapterParams<float>&, float);
template Tensor<double> adapter_forward<double>(Tensor<double>, const AdapterInput<double>&,
                                                const AdapterParams<double>&, double);

}  // namespace sfd
