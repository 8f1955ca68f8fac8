#include "model/policy.hpp"

#include <algorithm>

#include "core/error.hpp"

namespace sfd {

bool TrainabilityPolicy::contains(const std::string& g) const {
    return std::find(groups.begin(), groups.end(), g) != groups.end();
}

TrainabilityPolicy TrainabilityPolicy::defaults() {
    return {{"cross_attn_k", "cross_attn_v", "adapters", "conv_in", "text_encoder", "proj"}};
}

TrainabilityPolicy TrainabilityPolicy::full() {
    return {known_groups()};
}

TrainabilityPolicy TrainabilityPolicy::none() {
    return {{}};
}

const std::vector<std::string>& TrainabilityPolicy::known_groups() {
    static const std::vector<std::string> k = {
        "text_encoder", "image_encoder", "proj",
        "conv_in",      "time",          "out_head",
        "adapters",     "cross_attn_k",  "cross_attn_v",
        "cross_attn_qo", "self_attn",    "backbone",
    };
    return k;
}

std::string param_group_of(const std::string& n) {
    auto starts = [&](const char* p) { return n.rfind(p, 0) == 0; };
    auto has = [&](const char* p) { return n.find(p) != std::string::npos; };
    if (starts("text.")) return "text_encoder";
    if (starts("proj.")) return "proj";
    if (starts("image.")) return "image_encoder";
    if (starts("unet.conv_in")) return "conv_in";
    if (starts("unet.time")) return "time";
    if (starts("unet.out.")) return "out_head";
    // the adapter owns its attention block, so this must win over .sa/.ca
    if (has(".ad.")) return "adapters";
    if (has(".ca.k.")) return "cross_attn_k";
    if (has(".ca.v.")) return "cross_attn_v";
    if (has(".ca.q.") || has(".ca.o.")) return "cross_attn_qo";
    if (has(".sa.")) return "self_attn";
    return "backbone";
}

template <class T>
void set_trainable(const ParamMap<T>& pm, const TrainabilityPolicy& policy) {
    const auto& known = TrainabilityPolicy::known_groups();
    for (const auto& g : policy.groups) {
        if (std::find(known.begin(), known.end(), g) == known.end()) {
            throw ConfigError(cat("unknown trainable group '", g, "'"));
        }
    }
    for (const auto& [name, t] : pm.items()) {
        Tensor<T> h = t;
        h.set_requires_grad(policy.contains(param_group_of(name)));
    }
}

template void set_trainable<float>(const ParamMap<float>&, const TrainabilityPolicy&);
template void set_trainable<double>(const ParamMap<double>&, const TrainabilityPolicy&);

}  // namespace sfd
