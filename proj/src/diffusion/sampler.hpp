#pragma once

#include <cstdint>

#include "diffusion/schedule.hpp"
#include "model/model.hpp"

namespace sfd {

struct SampleConfig {
    int steps = 50;
    double guidance = 3.0;  // w; exactly 1 short-circuits to the conditional pass alone
    double eta = 0.0;       // 0 is fully deterministic
    std::uint64_t seed = 0;
};

// Deterministic DDIM sampler with classifier-free guidance. The timestep grid
// is `steps` evenly spaced integers from T-1 down to 1; the final update jumps
// to the clean prediction.
template <class T>
Tensor<T> ddim_sample(const SubjectModel<T>& model, const ConditionBundle<T>& cond,
                      const NoiseSchedule& ns, const SampleConfig& sc);

// Step-switched interpolation between subject-grounded and caption-only
// conditioning: while t > alpha*T the subject branch denoises; at and below
// the switch the caption branch runs with every subject input removed.
// alpha=0 reproduces the pure subject run bit for bit, alpha=1 the pure
// caption run.
template <class T>
Tensor<T> interpolate_sample(const SubjectModel<T>& model, const ConditionBundle<T>& subject_cond,
                             const ConditionBundle<T>& caption_cond, double alpha,
                             const NoiseSchedule& ns, const SampleConfig& sc);

// Single axis-aligned rectangle whose area fraction is uniform in [0.1, 0.4];
// used as the location channel when sampling without a reference layout.
template <class T>
Tensor<T> random_location_mask(Rng& rng, int side);

}  // namespace sfd
