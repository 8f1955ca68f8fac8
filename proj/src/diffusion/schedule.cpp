#include "diffusion/schedule.hpp"

#include "core/error.hpp"

namespace sfd {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end) {
    if (T < 2) throw ContractError("schedule needs at least two steps");
    if (beta_start <= 0 || beta_end >= 1 || beta_start > beta_end) {
        throw ContractError(cat("invalid beta ramp [", beta_start, ", ", beta_end, "]"));
    }
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        s.beta[t] = beta_start + (beta_end - beta_start) * double(t) / double(T - 1);
        prod *= 1.0 - s.beta[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

}  // namespace sfd
