#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace sfd {

// Registry of named parameters. Registration order is construction order and
// defines optimizer iteration order, so checkpoints and training are stable.
template <class T>
class ParamMap {
public:
    Tensor<T> add(const std::string& name, Tensor<T> t);
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    Tensor<T> at(const std::string& name) const;  // throws ContractError on miss
    const std::vector<std::pair<std::string, Tensor<T>>>& items() const { return items_; }
    int64_t total_size() const;
    void zero_grads() const;

private:
    std::vector<std::pair<std::string, Tensor<T>>> items_;
    std::unordered_map<std::string, size_t> index_;
};

using ParamMapF = ParamMap<float>;
using ParamMapD = ParamMap<double>;

}  // namespace sfd
