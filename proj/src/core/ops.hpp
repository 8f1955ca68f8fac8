#pragma once

#include <vector>

#include "core/tape.hpp"
#include "core/tensor.hpp"

// Differentiable tensor ops. Each op computes its output eagerly, verifies the
// result is finite, and (when a tape is active and an input requires grad)
// records a backward closure. Shapes are validated up front; mismatches throw
// DimError, precondition violations throw ContractError.

namespace sfd::ops {

// throws NumericError if any element is non-finite
template <class T>
void finite_check(const Tensor<T>& t, const char* op);

// ---- elementwise ----
template <class T>
Tensor<T> add(Tensor<T> a, Tensor<T> b);
template <class T>
Tensor<T> sub(Tensor<T> a, Tensor<T> b);
template <class T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b);
template <class T>
Tensor<T> add_scalar(Tensor<T> a, T s);
template <class T>
Tensor<T> mul_scalar(Tensor<T> a, T s);
// y = x * s where s is a scalar tensor on the graph (adapter gate)
template <class T>
Tensor<T> scale_by(Tensor<T> x, Tensor<T> s);
template <class T>
Tensor<T> relu(Tensor<T> x);
template <class T>
Tensor<T> gelu(Tensor<T> x);
template <class T>
Tensor<T> silu(Tensor<T> x);
template <class T>
Tensor<T> tanh_op(Tensor<T> x);
template <class T>
Tensor<T> sigmoid(Tensor<T> x);

// ---- matrix ----
template <class T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b);  // (m x k)(k x n)
template <class T>
Tensor<T> matmul_nt(Tensor<T> a, Tensor<T> b);  // (m x k)(n x k)^T
template <class T>
Tensor<T> transpose2d(Tensor<T> x);
// y = x + v broadcast over rows; x (m x n), v (n)
template <class T>
Tensor<T> add_rowvec(Tensor<T> x, Tensor<T> v);

// ---- shape ----
template <class T>
Tensor<T> reshape(Tensor<T> x, std::vector<int> shape);
template <class T>
Tensor<T> slice_rows(Tensor<T> x, int r0, int r1);
template <class T>
Tensor<T> slice_cols(Tensor<T> x, int c0, int c1);
template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
template <class T>
Tensor<T> concat_channels(Tensor<T> a, Tensor<T> b);  // (c1 x h x w)+(c2 x h x w)
template <class T>
Tensor<T> rows_gather(Tensor<T> table, const std::vector<int>& ids);
template <class T>
Tensor<T> detach(Tensor<T> x);

// ---- normalization / attention pieces ----
template <class T>
Tensor<T> softmax(Tensor<T> x, int axis);
template <class T>
Tensor<T> layer_norm(Tensor<T> x, Tensor<T> gamma, Tensor<T> beta, T eps);
// x (c x h x w); per-group standardization then per-channel affine
template <class T>
Tensor<T> group_norm(Tensor<T> x, Tensor<T> gamma, Tensor<T> beta, int groups, T eps);
// y[c] = x[c] * (1 + scale[c]) + shift[c] over spatial dims
template <class T>
Tensor<T> channel_affine(Tensor<T> x, Tensor<T> scale, Tensor<T> shift);

// ---- conv / spatial ----
// x (ci x h x w), w (co x ci x k x k), bias (co) or undefined
template <class T>
Tensor<T> conv2d(Tensor<T> x, Tensor<T> w, Tensor<T> bias, int stride, int pad);
template <class T>
Tensor<T> upsample2x(Tensor<T> x);
template <class T>
Tensor<T> avg_pool2(Tensor<T> x);

// ---- reductions ----
template <class T>
Tensor<T> sum(Tensor<T> x);
template <class T>
Tensor<T> mean(Tensor<T> x);
template <class T>
Tensor<T> mse(Tensor<T> a, Tensor<T> b);  // mean squared error
template <class T>
Tensor<T> l1_mean(Tensor<T> a, Tensor<T> b);  // mean absolute deviation
template <class T>
// mean softmax cross-entropy of row logits against integer class targets
Tensor<T> cross_entropy(Tensor<T> logits, const std::vector<int>& targets);
template <class T>
Tensor<T> add_n(const std::vector<Tensor<T>>& xs);
template <class T>
Tensor<T> average(const std::vector<Tensor<T>>& xs);

}  // namespace sfd::ops
