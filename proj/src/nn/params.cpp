#include "nn/params.hpp"

#include "core/error.hpp"

namespace sfd {

template <class T>
Tensor<T> ParamMap<T>::add(const std::string& name, Tensor<T> t) {
    if (!t.defined()) throw ContractError(cat("parameter '", name, "' is undefined"));
    if (!index_.emplace(name, items_.size()).second)
        throw ContractError(cat("duplicate parameter name '", name, "'"));
    t.set_requires_grad(true);
    items_.emplace_back(name, t);
    return t;
}

template <class T>
Tensor<T> ParamMap<T>::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError(cat("no parameter named '", name, "'"));
    return items_[it->second].second;
}

template <class T>
int64_t ParamMap<T>::total_size() const {
    int64_t n = 0;
    for (const auto& [name, t] : items_) n += t.numel();
    return n;
}

template <class T>
void ParamMap<T>::zero_grads() const {
    for (const auto& [name, t] : items_) {
        Tensor<T> h = t;  // cheap handle copy; zero_grad mutates the impl
        if (h.has_grad()) h.zero_grad();
    }
}

template class ParamMap<float>;
template class ParamMap<double>;

}  // namespace sfd
