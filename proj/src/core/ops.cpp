#include "core/ops.hpp"

#include <cmath>
#include <cstring>
#include <memory>

#include "core/error.hpp"
#include "core/kernels.hpp"

namespace sfd::ops {

namespace {

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        auto fmt = [](const std::vector<int>& s) {
            std::string r = "(";
            for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
            return r + ")";
        };
        throw DimError(cat(op, ": shape mismatch ", fmt(a.shape()), " vs ", fmt(b.shape())));
    }
}

template <class T>
void require_rank(const Tensor<T>& t, int rank, const char* op) {
    if (t.rank() != rank) throw DimError(cat(op, ": expected rank ", rank, ", got ", t.rank()));
}

// Returns the active tape iff any input participates in the graph.
template <class T>
Tape<T>* tape_if_needed(std::initializer_list<const Tensor<T>*> ins) {
    Tape<T>* tp = active_tape<T>();
    if (!tp) return nullptr;
    for (const Tensor<T>* t : ins)
        if (t->defined() && t->requires_grad()) return tp;
    return nullptr;
}

// Generic unary op: y = f(x), dx += g * df(x, y).
template <class T, class F, class DF>
Tensor<T> unary(Tensor<T> x, const char* name, F f, DF df) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    kernels::parallel_for(out.numel(), [=](int64_t i) { po[i] = f(px[i]); });
    finite_check(out, name);
    if (auto* tp = tape_if_needed<T>({&x})) {
        out.set_requires_grad(true);
        tp->record(name, out, [x, out, df]() mutable {
            const T* g = out.grad();
            const T* px2 = x.data();
            const T* py = out.data();
            T* gx = x.grad();
            kernels::parallel_for(x.numel(),
                                  [=](int64_t i) { gx[i] += g[i] * df(px2[i], py[i]); });
        });
    }
    return out;
}

}  // namespace

template <class T>
void finite_check(const Tensor<T>& t, const char* op) {
    // Sum of |x| over eight lanes: finite iff every element is finite (our
    // magnitudes never overflow the sum), and the loop vectorizes.
    const T* p = t.data();
    const int64_t n = t.numel();
    T lane[8] = {T(0), T(0), T(0), T(0), T(0), T(0), T(0), T(0)};
    int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (int l = 0; l < 8; ++l) lane[l] += std::fabs(p[i + l]);
    for (; i < n; ++i) lane[i & 7] += std::fabs(p[i]);
    T s = ((lane[0] + lane[1]) + (lane[2] + lane[3])) + ((lane[4] + lane[5]) + (lane[6] + lane[7]));
    if (!std::isfinite(s)) {
        for (int64_t j = 0; j < n; ++j)
            if (!std::isfinite(p[j]))
                throw NumericError(cat(op, ": non-finite element at flat index ", j));
        throw NumericError(cat(op, ": non-finite accumulation"));
    }
}

// ---- elementwise ----

template <class T>
Tensor<T> add(Tensor<T> a, Tensor<T> b) {
    require_same_shape(a, b, "add");
    Tensor<T> out(a.shape());
    const T *pa = a.data(), *pb = b.data();
    T* po = out.data();
    kernels::parallel_for(out.numel(), [=](int64_t i) { po[i] = pa[i] + pb[i]; });
    finite_check(out, "add");
    if (auto* tp = tape_if_needed<T>({&a, &b})) {
        out.set_requires_grad(true);
        const bool ra = a.requires_grad(), rb = b.requires_grad();
        tp->record("add", out, [a, b, out, ra, rb]() mutable {
            const T* g = out.grad();
            const int64_t n = out.numel();
            if (ra) {
                T* ga = a.grad();
                kernels::parallel_for(n, [=](int64_t i) { ga[i] += g[i]; });
            }
            if (rb) {
                T* gb = b.grad();
                kernels::parallel_for(n, [=](int64_t i) { gb[i] += g[i]; });
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> sub(Tensor<T> a, Tensor<T> b) {
    require_same_shape(a, b, "sub");
    Tensor<T> out(a.shape());
    const T *pa = a.data(), *pb = b.data();
    T* po = out.data();
    kernels::parallel_for(out.numel(), [=](int64_t i) { po[i] = pa[i] - pb[i]; });
    finite_check(out, "sub");
    if (auto* tp = tape_if_needed<T>({&a, &b})) {
        out.set_requires_grad(true);
        const bool ra = a.requires_grad(), rb = b.requires_grad();
        tp->record("sub", out, [a, b, out, ra, rb]() mutable {
            const T* g = out.grad();
            const int64_t n = out.numel();
            if (ra) {
                T* ga = a.grad();
                kernels::parallel_for(n, [=](int64_t i) { ga[i] += g[i]; });
            }
            if (rb) {
                T* gb = b.grad();
                kernels::parallel_for(n, [=](int64_t i) { gb[i] -= g[i]; });
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> mul(Tensor<T> a, Tensor<T> b) {
    require_same_shape(a, b, "mul");
    Tensor<T> out(a.shape());
    const T *pa = a.data(), *pb = b.data();
    T* po = out.data();
    kernels::parallel_for(out.numel(), [=](int64_t i) { po[i] = pa[i] * pb[i]; });
    finite_check(out, "mul");
    if (auto* tp = tape_if_needed<T>({&a, &b})) {
        out.set_requires_grad(true);
        const bool ra = a.requires_grad(), rb = b.requires_grad();
        tp->record("mul", out, [a, b, out, ra, rb]() mutable {
            const T* g = out.grad();
            const T *pa2 = a.data(), *pb2 = b.data();
            const int64_t n = out.numel();
            if (ra) {
                T* ga = a.grad();
                kernels::parallel_for(n, [=](int64_t i) { ga[i] += g[i] * pb2[i]; });
            }
            if (rb) {
                T* gb = b.grad();
                kernels::parallel_for(n, [=](int64_t i) { gb[i] += g[i] * pa2[i]; });
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> add_scalar(Tensor<T> a, T s) {
    return unary(
        a, "add_scalar", [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <class T>
Tensor<T> mul_scalar(Tensor<T> a, T s) {
    return unary(
        a, "mul_scalar", [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <class T>
Tensor<T> scale_by(Tensor<T> x, Tensor<T> s) {
    if (s.numel() != 1) throw DimError(cat("scale_by: scale must be scalar, numel ", s.numel()));
    Tensor<T> out(x.shape());
    const T* px = x.data();
    const T sv = s.data()[0];
    T* po = out.data();
    kernels::parallel_for(out.numel(), [=](int64_t i) { po[i] = px[i] * sv; });
    finite_check(out, "scale_by");
    if (auto* tp = tape_if_needed<T>({&x, &s})) {
        out.set_requires_grad(true);
        const bool rx = x.requires_grad(), rs = s.requires_grad();
        tp->record("scale_by", out, [x, s, out, rx, rs]() mutable {
            const T* g = out.grad();
            const T* px2 = x.data();
            const int64_t n = x.numel();
            if (rx) {
                T* gx = x.grad();
                const T sv2 = s.data()[0];
                kernels::parallel_for(n, [=](int64_t i) { gx[i] += g[i] * sv2; });
            }
            if (rs) {
                double acc = 0.0;
                for (int64_t i = 0; i < n; ++i)
                    acc += static_cast<double>(g[i]) * static_cast<double>(px2[i]);
                s.grad()[0] += static_cast<T>(acc);
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> relu(Tensor<T> x) {
    return unary(
        x, "relu", [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> gelu(Tensor<T> x) {
    // exact form: 0.5 x (1 + erf(x / sqrt 2))
    const T inv_sqrt2 = T(0.70710678118654752440L);
    const T inv_sqrt2pi = T(0.39894228040143267794L);
    return unary(
        x, "gelu",
        [=](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
        [=](T v, T) {
            const T phi = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
            return phi + v * inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        });
}

template <class T>
Tensor<T> silu(Tensor<T> x) {
    return unary(
        x, "silu",
        [](T v) { return v / (T(1) + std::exp(-v)); },
        [](T v, T) {
            const T s = T(1) / (T(1) + std::exp(-v));
            return s * (T(1) + v * (T(1) - s));
        });
}

template <class T>
Tensor<T> tanh_op(Tensor<T> x) {
    return unary(
        x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Tensor<T> sigmoid(Tensor<T> x) {
    return unary(
        x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); },
        [](T, T y) { return y * (T(1) - y); });
}

// ---- matrix ----

template <class T>
Tensor<T> matmul(Tensor<T> a, Tensor<T> b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw DimError(cat("matmul: inner extents ", k, " vs ", b.dim(0)));
    Tensor<T> out({m, n});
    kernels::gemm(m, n, k, a.data(), b.data(), out.data());
    finite_check(out, "matmul");
    if (auto* tp = tape_if_needed<T>({&a, &b})) {
        out.set_requires_grad(true);
        const bool ra = a.requires_grad(), rb = b.requires_grad();
        tp->record("matmul", out, [a, b, out, m, n, k, ra, rb]() mutable {
            const T* g = out.grad();
            // dA += g · Bᵀ, dB += Aᵀ · g
            if (ra) kernels::gemm_nt(m, k, n, g, b.data(), a.grad(), /*acc=*/true);
            if (rb) kernels::gemm_tn(k, n, m, a.data(), g, b.grad(), /*acc=*/true);
        });
    }
    return out;
}

template <class T>
Tensor<T> matmul_nt(Tensor<T> a, Tensor<T> b) {
    require_rank(a, 2, "matmul_nt");
    require_rank(b, 2, "matmul_nt");
    const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k)
        throw DimError(cat("matmul_nt: inner extents ", k, " vs ", b.dim(1)));
    Tensor<T> out({m, n});
    kernels::gemm_nt(m, n, k, a.data(), b.data(), out.data());
    finite_check(out, "matmul_nt");
    if (auto* tp = tape_if_needed<T>({&a, &b})) {
        out.set_requires_grad(true);
        const bool ra = a.requires_grad(), rb = b.requires_grad();
        tp->record("matmul_nt", out, [a, b, out, m, n, k, ra, rb]() mutable {
            const T* g = out.grad();
            // y = a·bᵀ: dA += g·b, dB += gᵀ·a
            if (ra) kernels::gemm(m, k, n, g, b.data(), a.grad(), /*acc=*/true);
            if (rb) kernels::gemm_tn(n, k, m, g, a.data(), b.grad(), /*acc=*/true);
        });
    }
    return out;
}

template <class T>
Tensor<T> transpose2d(Tensor<T> x) {
    require_rank(x, 2, "transpose2d");
    const int m = x.dim(0), n = x.dim(1);
    Tensor<T> out({n, m});
    const T* px = x.data();
    T* po = out.data();
    kernels::parallel_for(static_cast<int64_t>(m) * n, [=](int64_t i) {
        const int64_t r = i / n, c = i % n;
        po[c * m + r] = px[i];
    });
    if (auto* tp = tape_if_needed<T>({&x})) {
        out.set_requires_grad(true);
        tp->record("transpose2d", out, [x, out, m, n]() mutable {
            const T* g = out.grad();
            T* gx = x.grad();
            kernels::parallel_for(static_cast<int64_t>(m) * n, [=](int64_t i) {
                const int64_t r = i / n, c = i % n;
                gx[i] += g[c * m + r];
            });
        });
    }
    return out;
}

template <class T>
Tensor<T> add_rowvec(Tensor<T> x, Tensor<T> v) {
    require_rank(x, 2, "add_rowvec");
    require_rank(v, 1, "add_rowvec");
    const int m = x.dim(0), n = x.dim(1);
    if (v.dim(0) != n) throw DimError(cat("add_rowvec: vector length ", v.dim(0), " vs cols ", n));
    Tensor<T> out({m, n});
    const T *px = x.data(), *pv = v.data();
    T* po = out.data();
    kernels::parallel_for(static_cast<int64_t>(m) * n,
                          [=](int64_t i) { po[i] = px[i] + pv[i % n]; });
    finite_check(out, "add_rowvec");
    if (auto* tp = tape_if_needed<T>({&x, &v})) {
        out.set_requires_grad(true);
        const bool rx = x.requires_grad(), rv = v.requires_grad();
        tp->record("add_rowvec", out, [x, v, out, m, n, rx, rv]() mutable {
            const T* g = out.grad();
            if (rx) {
                T* gx = x.grad();
                kernels::parallel_for(static_cast<int64_t>(m) * n,
                                      [=](int64_t i) { gx[i] += g[i]; });
            }
            if (rv) {
                T* gv = v.grad();
                kernels::parallel_for(n, [=](int64_t j) {
                    double acc = 0.0;
                    for (int i = 0; i < m; ++i) acc += static_cast<double>(g[i * n + j]);
                    gv[j] += static_cast<T>(acc);
                });
            }
        });
    }
    return out;
}

// ---- shape ----

template <class T>
Tensor<T> reshape(Tensor<T> x, std::vector<int> shape) {
    const int64_t n = shape_numel(shape);
    if (n != x.numel())
        throw DimError(cat("reshape: numel ", x.numel(), " cannot become ", n));
    Tensor<T> out = Tensor<T>::from(std::move(shape), x.values());
    if (auto* tp = tape_if_needed<T>({&x})) {
        out.set_requires_grad(true);
        tp->record("reshape", out, [x, out]() mutable {
            const T* g = out.grad();
            T* gx = x.grad();
            kernels::parallel_for(x.numel(), [=](int64_t i) { gx[i] += g[i]; });
        });
    }
    return out;
}

template <class T>
Tensor<T> slice_rows(Tensor<T> x, int r0, int r1) {
    if (x.rank() < 1) throw DimError("slice_rows: rank 0 input");
    const int rows = x.dim(0);
    if (!(0 <= r0 && r0 < r1 && r1 <= rows))
        throw ContractError(cat("slice_rows: range [", r0, ",", r1, ") outside 0..", rows));
    const int64_t stride = x.numel() / rows;
    std::vector<int> shape = x.shape();
    shape[0] = r1 - r0;
    Tensor<T> out(shape);
    std::memcpy(out.data(), x.data() + r0 * stride,
                sizeof(T) * static_cast<size_t>((r1 - r0) * stride));
    if (auto* tp = tape_if_needed<T>({&x})) {
        out.set_requires_grad(true);
        tp->record("slice_rows", out, [x, out, r0, stride]() mutable {
            const T* g = out.grad();
            T* gx = x.grad() + r0 * stride;
            kernels::parallel_for(out.numel(), [=](int64_t i) { gx[i] += g[i]; });
        });
    }
    return out;
}

template <class T>
Tensor<T> slice_cols(Tensor<T> x, int c0, int c1) {
    require_rank(x, 2, "slice_cols");
    const int m = x.dim(0), n = x.dim(1);
    if (!(0 <= c0 && c0 < c1 && c1 <= n))
        throw ContractError(cat("slice_cols: range [", c0, ",", c1, ") outside 0..", n));
    const int w = c1 - c0;
    Tensor<T> out({m, w});
    const T* px = x.data();
    T* po = out.data();
    kernels::parallel_for(static_cast<int64_t>(m) * w, [=](int64_t i) {
        const int64_t r = i / w, c = i % w;
        po[i] = px[r * n + c0 + c];
    });
    if (auto* tp = tape_if_needed<T>({&x})) {
        out.set_requires_grad(true);
        tp->record("slice_cols", out, [x, out, m, n, c0, w]() mutable {
            const T* g = out.grad();
            T* gx = x.grad();
            kernels::parallel_for(static_cast<int64_t>(m) * w, [=](int64_t i) {
                const int64_t r = i / w, c = i % w;
                gx[r * n + c0 + c] += g[i];
            });
        });
    }
    return out;
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: empty list");
    std::vector<int> shape = parts[0].shape();
    if (shape.empty()) throw DimError("concat_rows: rank 0 input");
    int rows = 0;
    for (const auto& p : parts) {
        if (p.rank() != static_cast<int>(shape.size()))
            throw DimError("concat_rows: rank mismatch");
        for (size_t d = 1; d < shape.size(); ++d)
            if (p.dim(static_cast<int>(d)) != shape[d])
                throw DimError("concat_rows: trailing extent mismatch");
        rows += p.dim(0);
    }
    shape[0] = rows;
    Tensor<T> out(shape);
    T* po = out.data();
    int64_t off = 0;
    for (const auto& p : parts) {
        std::memcpy(po + off, p.data(), sizeof(T) * static_cast<size_t>(p.numel()));
        off += p.numel();
    }
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    if (auto* tp = active_tape<T>(); tp && any) {
        out.set_requires_grad(true);
        std::vector<Tensor<T>> held = parts;
        tp->record("concat_rows", out, [held, out]() mutable {
            const T* g = out.grad();
            int64_t off2 = 0;
            for (auto& p : held) {
                if (p.requires_grad()) {
                    T* gp = p.grad();
                    const T* gsrc = g + off2;
                    kernels::parallel_for(p.numel(), [=](int64_t i) { gp[i] += gsrc[i]; });
                }
                off2 += p.numel();
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: empty list");
    const int m = parts[0].dim(0);
    int n = 0;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_cols");
        if (p.dim(0) != m) throw DimError("concat_cols: row count mismatch");
        n += p.dim(1);
    }
    Tensor<T> out({m, n});
    T* po = out.data();
    int col = 0;
    for (const auto& p : parts) {
        const int w = p.dim(1);
        const T* pp = p.data();
        for (int r = 0; r < m; ++r)
            std::memcpy(po + static_cast<int64_t>(r) * n + col, pp + static_cast<int64_t>(r) * w,
                        sizeof(T) * static_cast<size_t>(w));
        col += w;
    }
    bool any = false;
    for (const auto& p : parts) any = any || p.requires_grad();
    if (auto* tp = active_tape<T>(); tp && any) {
        out.set_requires_grad(true);
        std::vector<Tensor<T>> held = parts;
        tp->record("concat_cols", out, [held, out, m, n]() mutable {
            const T* g = out.grad();
            int col2 = 0;
            for (auto& p : held) {
                const int w = p.dim(1);
                if (p.requires_grad()) {
                    T* gp = p.grad();
                    const int c0 = col2;
                    kernels::parallel_for(static_cast<int64_t>(m) * w, [=](int64_t i) {
                        const int64_t r = i / w, c = i % w;
                        gp[i] += g[r * n + c0 + c];
                    });
                }
                col2 += w;
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> concat_channels(Tensor<T> a, Tensor<T> b) {
    require_rank(a, 3, "concat_channels");
    require_rank(b, 3, "concat_channels");
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
        throw DimError(cat("concat_channels: spatial mismatch ", a.dim(1), "x", a.dim(2), " vs ",
                           b.dim(1), "x", b.dim(2)));
    return concat_rows<T>({a, b});
}

template <class T>
Tensor<T> rows_gather(Tensor<T> table, const std::vector<int>& ids) {
    require_rank(table, 2, "rows_gather");
    const int v = table.dim(0), d = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v)
            throw ContractError(cat("rows_gather: id ", id, " outside table of ", v, " rows"));
    const int l = static_cast<int>(ids.size());
    Tensor<T> out({l, d});
    const T* pt = table.data();
    T* po = out.data();
    for (int i = 0; i < l; ++i)
        std::memcpy(po + static_cast<int64_t>(i) * d, pt + static_cast<int64_t>(ids[i]) * d,
                    sizeof(T) * static_cast<size_t>(d));
    if (auto* tp = tape_if_needed<T>({&table})) {
        out.set_requires_grad(true);
        tp->record("rows_gather", out, [table, out, ids, d]() mutable {
            const T* g = out.grad();
            T* gt = table.grad();
            // serial scatter: duplicate ids accumulate in list order
            for (size_t i = 0; i < ids.size(); ++i) {
                T* dst = gt + static_cast<int64_t>(ids[i]) * d;
                const T* src = g + static_cast<int64_t>(i) * d;
                for (int j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> detach(Tensor<T> x) {
    return Tensor<T>::from(x.shape(), x.values());
}

// ---- normalization / attention pieces ----

template <class T>
Tensor<T> softmax(Tensor<T> x, int axis) {
    if (axis < 0 || axis >= x.rank())
        throw DimError(cat("softmax: axis ", axis, " outside rank ", x.rank()));
    const int n = x.dim(axis);
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= x.dim(d);
    for (int d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    kernels::parallel_for(outer * inner, [=](int64_t s) {
        const int64_t o = s / inner, in = s % inner;
        const int64_t base = o * n * inner + in;
        T mx = px[base];
        for (int j = 1; j < n; ++j) mx = std::max(mx, px[base + j * inner]);
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
            const T e = std::exp(px[base + j * inner] - mx);
            po[base + j * inner] = e;
            denom += static_cast<double>(e);
        }
        const T inv = static_cast<T>(1.0 / denom);
        for (int j = 0; j < n; ++j) po[base + j * inner] *= inv;
    });
    finite_check(out, "softmax");
    if (auto* tp = tape_if_needed<T>({&x})) {
        out.set_requires_grad(true);
        tp->record("softmax", out, [x, out, n, outer, inner]() mutable {
            const T* g = out.grad();
            const T* py = out.data();
            T* gx = x.grad();
            kernels::parallel_for(outer * inner, [=](int64_t s) {
                const int64_t o = s / inner, in = s % inner;
                const int64_t base = o * n * inner + in;
                double dot = 0.0;
                for (int j = 0; j < n; ++j)
                    dot += static_cast<double>(g[base + j * inner]) *
                           static_cast<double>(py[base + j * inner]);
                const T dt = static_cast<T>(dot);
                for (int j = 0; j < n; ++j) {
                    const int64_t at = base + j * inner;
                    gx[at] += py[at] * (g[at] - dt);
                }
            });
        });
    }
    return out;
}

template <class T>
Tensor<T> layer_norm(Tensor<T> x, Tensor<T> gamma, Tensor<T> beta, T eps) {
    require_rank(x, 2, "layer_norm");
    require_rank(gamma, 1, "layer_norm");
    require_rank(beta, 1, "layer_norm");
    const int m = x.dim(0), n = x.dim(1);
    if (gamma.dim(0) != n || beta.dim(0) != n)
        throw DimError(cat("layer_norm: affine length ", gamma.dim(0), "/", beta.dim(0),
                           " vs feature size ", n));
    Tensor<T> out({m, n});
    auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(m) * n);
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(m));
    const T *px = x.data(), *pg = gamma.data(), *pb = beta.data();
    T* po = out.data();
    T* ph = xhat->data();
    T* pi = inv_std->data();
    kernels::parallel_for(m, [=](int64_t r) {
        const T* row = px + r * n;
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += static_cast<double>(row[j]);
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = static_cast<double>(row[j]) - mu;
            var += d * d;
        }
        var /= n;
        const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        pi[r] = inv;
        for (int j = 0; j < n; ++j) {
            const T h = static_cast<T>((static_cast<double>(row[j]) - mu)) * inv;
            ph[r * n + j] = h;
            po[r * n + j] = h * pg[j] + pb[j];
        }
    });
    finite_check(out, "layer_norm");
    if (auto* tp = tape_if_needed<T>({&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        const bool rx = x.requires_grad(), rg = gamma.requires_grad(), rb = beta.requires_grad();
        tp->record("layer_norm", out, [x, gamma, beta, out, xhat, inv_std, m, n, rx, rg, rb]() mutable {
            const T* g = out.grad();
            const T* ph2 = xhat->data();
            const T* pi2 = inv_std->data();
            const T* pg2 = gamma.data();
            if (rx) {
                T* gx = x.grad();
                kernels::parallel_for(m, [=](int64_t r) {
                    double s1 = 0.0, s2 = 0.0;
                    for (int j = 0; j < n; ++j) {
                        const double dh = static_cast<double>(g[r * n + j]) *
                                          static_cast<double>(pg2[j]);
                        s1 += dh;
                        s2 += dh * static_cast<double>(ph2[r * n + j]);
                    }
                    const double invn = 1.0 / n;
                    for (int j = 0; j < n; ++j) {
                        const double dh = static_cast<double>(g[r * n + j]) *
                                          static_cast<double>(pg2[j]);
                        gx[r * n + j] += static_cast<T>(
                            static_cast<double>(pi2[r]) *
                            (dh - s1 * invn - static_cast<double>(ph2[r * n + j]) * s2 * invn));
                    }
                });
            }
            if (rg) {
                T* gg = gamma.grad();
                kernels::parallel_for(n, [=](int64_t j) {
                    double acc = 0.0;
                    for (int r = 0; r < m; ++r)
                        acc += static_cast<double>(g[r * n + j]) *
                               static_cast<double>(ph2[r * n + j]);
                    gg[j] += static_cast<T>(acc);
                });
            }
            if (rb) {
                T* gb = beta.grad();
                kernels::parallel_for(n, [=](int64_t j) {
                    double acc = 0.0;
                    for (int r = 0; r < m; ++r) acc += static_cast<double>(g[r * n + j]);
                    gb[j] += static_cast<T>(acc);
                });
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> group_norm(Tensor<T> x, Tensor<T> gamma, Tensor<T> beta, int groups, T eps) {
    require_rank(x, 3, "group_norm");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (groups < 1 || c % groups != 0)
        throw DimError(cat("group_norm: channels ", c, " not divisible by groups ", groups));
    if (gamma.dim(0) != c || beta.dim(0) != c)
        throw DimError(cat("group_norm: affine length vs channels ", c));
    const int cg = c / groups;
    const int64_t hw = static_cast<int64_t>(h) * w;
    const int64_t gsize = cg * hw;
    Tensor<T> out(x.shape());
    auto xhat = std::make_shared<std::vector<T>>(static_cast<size_t>(x.numel()));
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(groups));
    const T *px = x.data(), *pg = gamma.data(), *pb = beta.data();
    T* po = out.data();
    T* ph = xhat->data();
    T* pi = inv_std->data();
    kernels::parallel_for(groups, [=](int64_t grp) {
        const T* block = px + grp * gsize;
        double mu = 0.0;
        for (int64_t i = 0; i < gsize; ++i) mu += static_cast<double>(block[i]);
        mu /= static_cast<double>(gsize);
        double var = 0.0;
        for (int64_t i = 0; i < gsize; ++i) {
            const double d = static_cast<double>(block[i]) - mu;
            var += d * d;
        }
        var /= static_cast<double>(gsize);
        const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        pi[grp] = inv;
        for (int64_t i = 0; i < gsize; ++i) {
            const int64_t at = grp * gsize + i;
            const int ch = static_cast<int>(at / hw);
            const T hval = static_cast<T>(static_cast<double>(block[i]) - mu) * inv;
            ph[at] = hval;
            po[at] = hval * pg[ch] + pb[ch];
        }
    });
    finite_check(out, "group_norm");
    if (auto* tp = tape_if_needed<T>({&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        const bool rx = x.requires_grad(), rg = gamma.requires_grad(), rb = beta.requires_grad();
        tp->record("group_norm", out,
                   [x, gamma, beta, out, xhat, inv_std, groups, gsize, hw, rx, rg, rb]() mutable {
                       const T* g = out.grad();
                       const T* ph2 = xhat->data();
                       const T* pi2 = inv_std->data();
                       const T* pg2 = gamma.data();
                       const int c2 = x.dim(0);
                       if (rx) {
                           T* gx = x.grad();
                           kernels::parallel_for(groups, [=](int64_t grp) {
                               double s1 = 0.0, s2 = 0.0;
                               for (int64_t i = 0; i < gsize; ++i) {
                                   const int64_t at = grp * gsize + i;
                                   const int ch = static_cast<int>(at / hw);
                                   const double dh = static_cast<double>(g[at]) *
                                                     static_cast<double>(pg2[ch]);
                                   s1 += dh;
                                   s2 += dh * static_cast<double>(ph2[at]);
                               }
                               const double invn = 1.0 / static_cast<double>(gsize);
                               for (int64_t i = 0; i < gsize; ++i) {
                                   const int64_t at = grp * gsize + i;
                                   const int ch = static_cast<int>(at / hw);
                                   const double dh = static_cast<double>(g[at]) *
                                                     static_cast<double>(pg2[ch]);
                                   gx[at] += static_cast<T>(
                                       static_cast<double>(pi2[grp]) *
                                       (dh - s1 * invn -
                                        static_cast<double>(ph2[at]) * s2 * invn));
                               }
                           });
                       }
                       if (rg) {
                           T* gg = gamma.grad();
                           kernels::parallel_for(c2, [=](int64_t ch) {
                               double acc = 0.0;
                               for (int64_t i = 0; i < hw; ++i)
                                   acc += static_cast<double>(g[ch * hw + i]) *
                                          static_cast<double>(ph2[ch * hw + i]);
                               gg[ch] += static_cast<T>(acc);
                           });
                       }
                       if (rb) {
                           T* gb = beta.grad();
                           kernels::parallel_for(c2, [=](int64_t ch) {
                               double acc = 0.0;
                               for (int64_t i = 0; i < hw; ++i)
                                   acc += static_cast<double>(g[ch * hw + i]);
                               gb[ch] += static_cast<T>(acc);
                           });
                       }
                   });
    }
    return out;
}

template <class T>
Tensor<T> channel_affine(Tensor<T> x, Tensor<T> scale, Tensor<T> shift) {
    require_rank(x, 3, "channel_affine");
    const int c = x.dim(0);
    const int64_t hw = static_cast<int64_t>(x.dim(1)) * x.dim(2);
    if (scale.dim(0) != c || shift.dim(0) != c)
        throw DimError(cat("channel_affine: affine length vs channels ", c));
    Tensor<T> out(x.shape());
    const T *px = x.data(), *ps = scale.data(), *pt = shift.data();
    T* po = out.data();
    kernels::parallel_for(x.numel(), [=](int64_t i) {
        const int ch = static_cast<int>(i / hw);
        po[i] = px[i] * (T(1) + ps[ch]) + pt[ch];
    });
    finite_check(out, "channel_affine");
    if (auto* tp = tape_if_needed<T>({&x, &scale, &shift})) {
        out.set_requires_grad(true);
        const bool rx = x.requires_grad(), rs = scale.requires_grad(), rt = shift.requires_grad();
        tp->record("channel_affine", out, [x, scale, shift, out, c, hw, rx, rs, rt]() mutable {
            const T* g = out.grad();
            const T* px2 = x.data();
            const T* ps2 = scale.data();
            if (rx) {
                T* gx = x.grad();
                kernels::parallel_for(x.numel(), [=](int64_t i) {
                    const int ch = static_cast<int>(i / hw);
                    gx[i] += g[i] * (T(1) + ps2[ch]);
                });
            }
            if (rs) {
                T* gs = scale.grad();
                kernels::parallel_for(c, [=](int64_t ch) {
                    double acc = 0.0;
                    for (int64_t i = 0; i < hw; ++i)
                        acc += static_cast<double>(g[ch * hw + i]) *
                               static_cast<double>(px2[ch * hw + i]);
                    gs[ch] += static_cast<T>(acc);
                });
            }
            if (rt) {
                T* gt = shift.grad();
                kernels::parallel_for(c, [=](int64_t ch) {
                    double acc = 0.0;
                    for (int64_t i = 0; i < hw; ++i)
                        acc += static_cast<double>(g[ch * hw + i]);
                    gt[ch] += static_cast<T>(acc);
                });
            }
        });
    }
    return out;
}

// ---- conv / spatial ----

namespace {

// Unrolls conv patches into a (H'·W') x (C_in·k·k) matrix; out-of-image taps are zero.
template <class T>
void im2col(const T* x, int ci, int h, int w, int k, int stride, int pad, int ho, int wo, T* col) {
    const int ck = ci * k * k;
    kernels::parallel_for(static_cast<int64_t>(ho) * wo, [=](int64_t p) {
        const int oy = static_cast<int>(p) / wo, ox = static_cast<int>(p) % wo;
        T* crow = col + p * ck;
        int idx = 0;
        for (int c = 0; c < ci; ++c)
            for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride + ky - pad;
                for (int kx = 0; kx < k; ++kx, ++idx) {
                    const int ix = ox * stride + kx - pad;
                    crow[idx] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                    ? x[(static_cast<int64_t>(c) * h + iy) * w + ix]
                                    : T(0);
                }
            }
    });
}

// Scatter-adds patch gradients back to image layout. Serial on purpose:
// patches overlap, so the accumulation order must be fixed.
template <class T>
void col2im_acc(const T* col, int ci, int h, int w, int k, int stride, int pad, int ho, int wo,
                T* gx) {
    const int ck = ci * k * k;
    for (int64_t p = 0; p < static_cast<int64_t>(ho) * wo; ++p) {
        const int oy = static_cast<int>(p) / wo, ox = static_cast<int>(p) % wo;
        const T* crow = col + p * ck;
        int idx = 0;
        for (int c = 0; c < ci; ++c)
            for (int ky = 0; ky < k; ++ky) {
                const int iy = oy * stride + ky - pad;
                for (int kx = 0; kx < k; ++kx, ++idx) {
                    const int ix = ox * stride + kx - pad;
                    if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                        gx[(static_cast<int64_t>(c) * h + iy) * w + ix] += crow[idx];
                }
            }
    }
}

}  // namespace

template <class T>
Tensor<T> conv2d(Tensor<T> x, Tensor<T> w, Tensor<T> bias, int stride, int pad) {
    require_rank(x, 3, "conv2d");
    require_rank(w, 4, "conv2d");
    const int ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int co = w.dim(0), k = w.dim(2);
    if (w.dim(1) != ci)
        throw DimError(cat("conv2d: input channels ", ci, " vs kernel channels ", w.dim(1)));
    if (w.dim(3) != k) throw DimError(cat("conv2d: non-square kernel ", k, "x", w.dim(3)));
    if (stride < 1 || pad < 0) throw ContractError(cat("conv2d: stride ", stride, " pad ", pad));
    const int ho = (h + 2 * pad - k) / stride + 1;
    const int wo = (wd + 2 * pad - k) / stride + 1;
    if (ho < 1 || wo < 1 || h + 2 * pad < k || wd + 2 * pad < k)
        throw DimError(cat("conv2d: empty output for ", h, "x", wd, " k=", k, " stride=", stride,
                           " pad=", pad));
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != co))
        throw DimError(cat("conv2d: bias length vs output channels ", co));

    const int ck = ci * k * k;
    const int64_t np = static_cast<int64_t>(ho) * wo;
    auto col = std::make_shared<std::vector<T>>(static_cast<size_t>(np * ck));
    im2col(x.data(), ci, h, wd, k, stride, pad, ho, wo, col->data());
    Tensor<T> out({co, ho, wo});
    // out(co x P) = W(co x CK) · col(P x CK)ᵀ
    kernels::gemm_nt(co, static_cast<int>(np), ck, w.data(), col->data(), out.data());
    if (bias.defined()) {
        T* po = out.data();
        const T* pb = bias.data();
        kernels::parallel_for(static_cast<int64_t>(co) * np,
                              [=](int64_t i) { po[i] += pb[i / np]; });
    }
    finite_check(out, "conv2d");
    if (auto* tp = tape_if_needed<T>({&x, &w, &bias})) {
        out.set_requires_grad(true);
        const bool rx = x.requires_grad(), rw = w.requires_grad();
        const bool rb = bias.defined() && bias.requires_grad();
        tp->record("conv2d", out,
                   [x, w, bias, out, col, ci, h, wd, co, k, ck, np, ho, wo, stride, pad, rx, rw,
                    rb]() mutable {
                       const T* g = out.grad();
                       if (rw)  // dW += g(co x P) · col(P x CK)
                           kernels::gemm(co, ck, static_cast<int>(np), g, col->data(), w.grad(),
                                         /*acc=*/true);
                       if (rb) {
                           T* gb = bias.grad();
                           kernels::parallel_for(co, [=](int64_t c) {
                               double acc = 0.0;
                               for (int64_t p = 0; p < np; ++p)
                                   acc += static_cast<double>(g[c * np + p]);
                               gb[c] += static_cast<T>(acc);
                           });
                       }
                       if (rx) {
                           // dcol(P x CK) = gᵀ(P x co) · W(co x CK), then fold back
                           std::vector<T> dcol(static_cast<size_t>(np * ck));
                           kernels::gemm_tn(static_cast<int>(np), ck, co, g, w.data(),
                                            dcol.data());
                           col2im_acc(dcol.data(), ci, h, wd, k, stride, pad, ho, wo, x.grad());
                       }
                   });
    }
    return out;
}

template <class T>
Tensor<T> upsample2x(Tensor<T> x) {
    require_rank(x, 3, "upsample2x");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor<T> out({c, 2 * h, 2 * w});
    const T* px = x.data();
    T* po = out.data();
    const int oh = 2 * h, ow = 2 * w;
    kernels::parallel_for(static_cast<int64_t>(c) * oh * ow, [=](int64_t i) {
        const int64_t ch = i / (static_cast<int64_t>(oh) * ow);
        const int64_t rem = i % (static_cast<int64_t>(oh) * ow);
        const int oy = static_cast<int>(rem / ow), ox = static_cast<int>(rem % ow);
        po[i] = px[(ch * h + oy / 2) * w + ox / 2];
    });
    if (auto* tp = tape_if_needed<T>({&x})) {
        out.set_requires_grad(true);
        tp->record("upsample2x", out, [x, out, c, h, w, oh, ow]() mutable {
            const T* g = out.grad();
            T* gx = x.grad();
            kernels::parallel_for(static_cast<int64_t>(c) * h * w, [=](int64_t i) {
                const int64_t ch = i / (static_cast<int64_t>(h) * w);
                const int64_t rem = i % (static_cast<int64_t>(h) * w);
                const int y = static_cast<int>(rem / w), xx = static_cast<int>(rem % w);
                const T* gb = g + (ch * oh + 2 * y) * ow + 2 * xx;
                gx[i] += (gb[0] + gb[1]) + (gb[ow] + gb[ow + 1]);
            });
        });
    }
    return out;
}

template <class T>
Tensor<T> avg_pool2(Tensor<T> x) {
    require_rank(x, 3, "avg_pool2");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % 2 || w % 2) throw DimError(cat("avg_pool2: odd spatial extents ", h, "x", w));
    const int oh = h / 2, ow = w / 2;
    Tensor<T> out({c, oh, ow});
    const T* px = x.data();
    T* po = out.data();
    kernels::parallel_for(static_cast<int64_t>(c) * oh * ow, [=](int64_t i) {
        const int64_t ch = i / (static_cast<int64_t>(oh) * ow);
        const int64_t rem = i % (static_cast<int64_t>(oh) * ow);
        const int oy = static_cast<int>(rem / ow), ox = static_cast<int>(rem % ow);
        const T* base = px + (ch * h + 2 * oy) * w + 2 * ox;
        po[i] = ((base[0] + base[1]) + (base[w] + base[w + 1])) * T(0.25);
    });
    if (auto* tp = tape_if_needed<T>({&x})) {
        out.set_requires_grad(true);
        tp->record("avg_pool2", out, [x, out, c, h, w, oh, ow]() mutable {
            const T* g = out.grad();
            T* gx = x.grad();
            kernels::parallel_for(static_cast<int64_t>(c) * oh * ow, [=](int64_t i) {
                const int64_t ch = i / (static_cast<int64_t>(oh) * ow);
                const int64_t rem = i % (static_cast<int64_t>(oh) * ow);
                const int oy = static_cast<int>(rem / ow), ox = static_cast<int>(rem % ow);
                T* base = gx + (ch * h + 2 * oy) * w + 2 * ox;
                const T q = g[i] * T(0.25);
                base[0] += q;
                base[1] += q;
                base[w] += q;
                base[w + 1] += q;
            });
        });
    }
    return out;
}

// ---- reductions ----

template <class T>
Tensor<T> sum(Tensor<T> x) {
    double acc = 0.0;
    const T* px = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(px[i]);
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
    finite_check(out, "sum");
    if (auto* tp = tape_if_needed<T>({&x})) {
        out.set_requires_grad(true);
        tp->record("sum", out, [x, out]() mutable {
            const T g = out.grad()[0];
            T* gx = x.grad();
            kernels::parallel_for(x.numel(), [=](int64_t i) { gx[i] += g; });
        });
    }
    return out;
}

template <class T>
Tensor<T> mean(Tensor<T> x) {
    const int64_t n = x.numel();
    double acc = 0.0;
    const T* px = x.data();
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(px[i]);
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
    finite_check(out, "mean");
    if (auto* tp = tape_if_needed<T>({&x})) {
        out.set_requires_grad(true);
        tp->record("mean", out, [x, out, n]() mutable {
            const T g = out.grad()[0] / static_cast<T>(n);
            T* gx = x.grad();
            kernels::parallel_for(n, [=](int64_t i) { gx[i] += g; });
        });
    }
    return out;
}

template <class T>
Tensor<T> mse(Tensor<T> a, Tensor<T> b) {
    require_same_shape(a, b, "mse");
    const int64_t n = a.numel();
    const T *pa = a.data(), *pb = b.data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
        acc += d * d;
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
    finite_check(out, "mse");
    if (auto* tp = tape_if_needed<T>({&a, &b})) {
        out.set_requires_grad(true);
        const bool ra = a.requires_grad(), rb = b.requires_grad();
        tp->record("mse", out, [a, b, out, n, ra, rb]() mutable {
            const T g2 = out.grad()[0] * T(2) / static_cast<T>(n);
            const T *pa2 = a.data(), *pb2 = b.data();
            if (ra) {
                T* ga = a.grad();
                kernels::parallel_for(n, [=](int64_t i) { ga[i] += g2 * (pa2[i] - pb2[i]); });
            }
            if (rb) {
                T* gb = b.grad();
                kernels::parallel_for(n, [=](int64_t i) { gb[i] -= g2 * (pa2[i] - pb2[i]); });
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> l1_mean(Tensor<T> a, Tensor<T> b) {
    require_same_shape(a, b, "l1_mean");
    const int64_t n = a.numel();
    const T *pa = a.data(), *pb = b.data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i)
        acc += std::fabs(static_cast<double>(pa[i]) - static_cast<double>(pb[i]));
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
    finite_check(out, "l1_mean");
    if (auto* tp = tape_if_needed<T>({&a, &b})) {
        out.set_requires_grad(true);
        const bool ra = a.requires_grad(), rb = b.requires_grad();
        tp->record("l1_mean", out, [a, b, out, n, ra, rb]() mutable {
            const T g = out.grad()[0] / static_cast<T>(n);
            const T *pa2 = a.data(), *pb2 = b.data();
            // subgradient: sign(a-b), zero at ties
            auto sgn = [](T d) { return d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)); };
            if (ra) {
                T* ga = a.grad();
                kernels::parallel_for(n, [=](int64_t i) { ga[i] += g * sgn(pa2[i] - pb2[i]); });
            }
            if (rb) {
                T* gb = b.grad();
                kernels::parallel_for(n, [=](int64_t i) { gb[i] -= g * sgn(pa2[i] - pb2[i]); });
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> cross_entropy(Tensor<T> logits, const std::vector<int>& targets) {
    if (logits.rank() != 2) throw DimError("cross_entropy: logits must be rank 2");
    const int n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int>(targets.size()) != n) {
        throw DimError(cat("cross_entropy: ", targets.size(), " targets for ", n, " rows"));
    }
    for (int t : targets) {
        if (t < 0 || t >= c) throw ContractError(cat("cross_entropy: class ", t, " out of range"));
    }
    const T* p = logits.data();
    // probs are needed again in backward; keep them alongside the record
    auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n) * c);
    double acc = 0.0;
    for (int r = 0; r < n; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j) mx = std::max(mx, static_cast<double>(p[r * c + j]));
        double den = 0.0;
        for (int j = 0; j < c; ++j) den += std::exp(static_cast<double>(p[r * c + j]) - mx);
        for (int j = 0; j < c; ++j) {
            (*probs)[static_cast<std::size_t>(r) * c + j] =
                static_cast<T>(std::exp(static_cast<double>(p[r * c + j]) - mx) / den);
        }
        const double logit = static_cast<double>(p[r * c + targets[static_cast<std::size_t>(r)]]);
        acc += mx + std::log(den) - logit;
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / n));
    finite_check(out, "cross_entropy");
    if (auto* tp = tape_if_needed<T>({&logits})) {
        out.set_requires_grad(true);
        std::vector<int> tgt = targets;
        tp->record("cross_entropy", out, [logits, out, probs, tgt, n, c]() mutable {
            const T g = out.grad()[0] / static_cast<T>(n);
            T* gl = logits.grad();
            for (int r = 0; r < n; ++r) {
                for (int j = 0; j < c; ++j) {
                    const T onehot = j == tgt[static_cast<std::size_t>(r)] ? T(1) : T(0);
                    gl[r * c + j] += g * ((*probs)[static_cast<std::size_t>(r) * c + j] - onehot);
                }
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> add_n(const std::vector<Tensor<T>>& xs) {
    if (xs.empty()) throw ContractError("add_n: empty list");
    for (const auto& x : xs) require_same_shape(xs[0], x, "add_n");
    Tensor<T> out(xs[0].shape());
    T* po = out.data();
    const int64_t n = out.numel();
    const size_t cnt = xs.size();
    std::vector<const T*> ps(cnt);
    for (size_t j = 0; j < cnt; ++j) ps[j] = xs[j].data();
    const T* const* pp = ps.data();
    kernels::parallel_for(n, [=](int64_t i) {
        T acc = pp[0][i];
        for (size_t j = 1; j < cnt; ++j) acc += pp[j][i];
        po[i] = acc;
    });
    finite_check(out, "add_n");
    bool any = false;
    for (const auto& x : xs) any = any || x.requires_grad();
    if (auto* tp = active_tape<T>(); tp && any) {
        out.set_requires_grad(true);
        std::vector<Tensor<T>> held = xs;
        tp->record("add_n", out, [held, out, n]() mutable {
            const T* g = out.grad();
            for (auto& x : held) {
                if (!x.requires_grad()) continue;
                T* gx = x.grad();
                kernels::parallel_for(n, [=](int64_t i) { gx[i] += g[i]; });
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> average(const std::vector<Tensor<T>>& xs) {
    Tensor<T> s = add_n(xs);
    return mul_scalar(s, T(1) / static_cast<T>(xs.size()));
}

// ---- explicit instantiations ----

#define SFD_INSTANTIATE_OPS(T)                                                              \
    template void finite_check<T>(const Tensor<T>&, const char*);                           \
    template Tensor<T> add<T>(Tensor<T>, Tensor<T>);                                        \
    template Tensor<T> sub<T>(Tensor<T>, Tensor<T>);                                        \
    template Tensor<T> mul<T>(Tensor<T>, Tensor<T>);                                        \
    template Tensor<T> add_scalar<T>(Tensor<T>, T);                                         \
    template Tensor<T> mul_scalar<T>(Tensor<T>, T);                                         \
    template Tensor<T> scale_by<T>(Tensor<T>, Tensor<T>);                                   \
    template Tensor<T> relu<T>(Tensor<T>);                                                  \
    template Tensor<T> gelu<T>(Tensor<T>);                                                  \
    template Tensor<T> silu<T>(Tensor<T>);                                                  \
    template Tensor<T> tanh_op<T>(Tensor<T>);                                               \
    template Tensor<T> sigmoid<T>(Tensor<T>);                                               \
    template Tensor<T> matmul<T>(Tensor<T>, Tensor<T>);                                     \
    template Tensor<T> matmul_nt<T>(Tensor<T>, Tensor<T>);                                  \
    template Tensor<T> transpose2d<T>(Tensor<T>);                                           \
    template Tensor<T> add_rowvec<T>(Tensor<T>, Tensor<T>);                                 \
    template Tensor<T> reshape<T>(Tensor<T>, std::vector<int>);                             \
    template Tensor<T> slice_rows<T>(Tensor<T>, int, int);                                  \
    template Tensor<T> slice_cols<T>(Tensor<T>, int, int);                                  \
    template Tensor<T> concat_rows<T>(const std::vector<Tensor<T>>&);                       \
    template Tensor<T> concat_cols<T>(const std::vector<Tensor<T>>&);                       \
    template Tensor<T> concat_channels<T>(Tensor<T>, Tensor<T>);                            \
    template Tensor<T> rows_gather<T>(Tensor<T>, const std::vector<int>&);                  \
    template Tensor<T> detach<T>(Tensor<T>);                                                \
    template Tensor<T> softmax<T>(Tensor<T>, int);                                          \
    template Tensor<T> layer_norm<T>(Tensor<T>, Tensor<T>, Tensor<T>, T);                   \
    template Tensor<T> group_norm<T>(Tensor<T>, Tensor<T>, Tensor<T>, int, T);              \
    template Tensor<T> channel_affine<T>(Tensor<T>, Tensor<T>, Tensor<T>);                  \
    template Tensor<T> conv2d<T>(Tensor<T>, Tensor<T>, Tensor<T>, int, int);                \
    template Tensor<T> upsample2x<T>(Tensor<T>);                                            \
    template Tensor<T> avg_pool2<T>(Tensor<T>);                                             \
    template Tensor<T> sum<T>(Tensor<T>);                                                   \
    template Tensor<T> mean<T>(Tensor<T>);                                                  \
    template Tensor<T> mse<T>(Tensor<T>, Tensor<T>);                                        \
    template Tensor<T> l1_mean<T>(Tensor<T>, Tensor<T>);                                    \
    template Tensor<T> cross_entropy<T>(Tensor<T>, const std::vector<int>&);                \
    template Tensor<T> add_n<T>(const std::vector<Tensor<T>>&);                             \
    template Tensor<T> average<T>(const std::vector<Tensor<T>>&);

SFD_INSTANTIATE_OPS(float)
SFD_INSTANTIATE_OPS(double)

#undef SFD_INSTANTIATE_OPS

}  // namespace sfd::ops
