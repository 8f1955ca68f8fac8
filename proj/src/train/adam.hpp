#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "nn/params.hpp"

namespace sfd {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip = 1.0;  // global grad-norm ceiling; <=0 disables clipping
};

// Adam over a parameter map. Only tensors with requires_grad participate;
// moment slots follow registration order so behaviour is deterministic.
template <class T>
class Adam {
   public:
    Adam(const ParamMap<T>& pm, AdamConfig cfg = {}) : pm_(pm), cfg_(cfg) {
        for (const auto& [name, t] : pm_.items()) {
            (void)name;
            m_.emplace_back(t.numel(), T(0));
            v_.emplace_back(t.numel(), T(0));
        }
    }

    // applies one update from the accumulated grads, then leaves grads intact
    // (callers zero them at the start of the next step)
    void step() {
        ++t_;
        double scale = 1.0;
        if (cfg_.clip > 0) {
            double sq = 0;
            for (const auto& [name, t] : pm_.items()) {
                (void)name;
                if (!t.requires_grad() || !t.has_grad()) continue;
                Tensor<T> h = t;
                for (T g : h.grad_values()) sq += double(g) * double(g);
            }
            double norm = std::sqrt(sq);
            if (norm > cfg_.clip) scale = cfg_.clip / norm;
        }
        const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        std::size_t idx = 0;
        for (const auto& [name, t] : pm_.items()) {
            (void)name;
            auto& m = m_[idx];
            auto& v = v_[idx];
            ++idx;
            if (!t.requires_grad() || !t.has_grad()) continue;
            Tensor<T> h = t;
            auto& w = h.values();
            auto& g = h.grad_values();
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = double(g[i]) * scale;
                m[i] = T(cfg_.beta1 * m[i] + (1 - cfg_.beta1) * gi);
                v[i] = T(cfg_.beta2 * v[i] + (1 - cfg_.beta2) * gi * gi);
                const double mh = double(m[i]) / bc1;
                const double vh = double(v[i]) / bc2;
                w[i] -= T(cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps));
            }
        }
    }

    std::int64_t steps_taken() const { return t_; }

   private:
    ParamMap<T> pm_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

}  // namespace sfd
