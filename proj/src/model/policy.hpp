#pragma once

#include <string>
#include <vector>

#include "nn/params.hpp"

namespace sfd {

// Named parameter groups and which of them train. Freezing is expressed
// through requires_grad: frozen tensors record no gradients and the optimizer
// skips them.
struct TrainabilityPolicy {
    std::vector<std::string> groups;

    bool contains(const std::string& g) const;

    // selective fine-tuning: cross-attention K/V, adapters, the mask-aware
    // stem conv, the text encoder, and the subject projection
    static TrainabilityPolicy defaults();
    static TrainabilityPolicy full();   // every group (from-scratch training)
    static TrainabilityPolicy none();
    static const std::vector<std::string>& known_groups();
};

// classifies a registered parameter name into its policy group
std::string param_group_of(const std::string& param_name);

// applies the policy; throws ConfigError on a group name that does not exist
template <class T>
void set_trainable(const ParamMap<T>& pm, const TrainabilityPolicy& policy);

}  // namespace sfd
