#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "core/error.hpp"

namespace sfd {

namespace detail {
template <class T>
struct TensorImpl {
    std::vector<int> shape;
    std::vector<T> v;  // row-major values
    std::vector<T> g;  // gradient, same shape, lazily allocated
    bool requires_grad = false;
};
}  // namespace detail

inline int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int e : shape) {
        if (e <= 0) throw DimError(cat("non-positive extent ", e));
        n *= e;
    }
    return n;
}

// Dense row-major tensor with a lazily allocated gradient buffer. Copying a
// Tensor copies the handle, not the storage; ops produce fresh tensors and
// never mutate inputs (gradient accumulation excepted).
template <class T>
class Tensor {
public:
    using Scalar = T;

    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : impl_(std::make_shared<detail::TensorImpl<T>>()) {
        impl_->shape = std::move(shape);
        impl_->v.assign(static_cast<size_t>(shape_numel(impl_->shape)), T(0));
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, T value) {
        Tensor t(std::move(shape));
        for (auto& x : t.impl_->v) x = value;
        return t;
    }

    static Tensor scalar(T value) { return full({1}, value); }

    static Tensor from(std::vector<int> shape, std::vector<T> values) {
        Tensor t;
        t.impl_ = std::make_shared<detail::TensorImpl<T>>();
        int64_t n = shape_numel(shape);
        if (n != static_cast<int64_t>(values.size()))
            throw DimError(cat("value count ", values.size(), " does not match shape numel ", n));
        t.impl_->shape = std::move(shape);
        t.impl_->v = std::move(values);
        return t;
    }

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(impl_->v.size()); }

    T* data() { return impl_->v.data(); }
    const T* data() const { return impl_->v.data(); }
    std::vector<T>& values() { return impl_->v; }
    const std::vector<T>& values() const { return impl_->v; }

    T item() const {
        if (numel() != 1) throw ContractError(cat("item() on tensor with ", numel(), " elements"));
        return impl_->v[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool on) {
        impl_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return !impl_->g.empty(); }

    // allocates zeros on first touch
    T* grad() {
        if (impl_->g.empty()) impl_->g.assign(impl_->v.size(), T(0));
        return impl_->g.data();
    }
    const std::vector<T>& grad_values() {
        (void)grad();
        return impl_->g;
    }

    void zero_grad() {
        if (!impl_->g.empty()) std::fill(impl_->g.begin(), impl_->g.end(), T(0));
    }

    // identity comparison (same storage)
    bool same_as(const Tensor& o) const { return impl_ == o.impl_; }

private:
    std::shared_ptr<detail::TensorImpl<T>> impl_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace sfd
