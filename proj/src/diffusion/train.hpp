#pragma once

#include <cstdint>
#include <vector>

#include "diffusion/schedule.hpp"
#include "model/model.hpp"
#include "model/policy.hpp"
#include "train/adam.hpp"

namespace sfd {

// closed-form forward diffusion: z_t = sqrt(ab_t) z0 + sqrt(1-ab_t) eps
template <class T>
Tensor<T> q_sample(const Tensor<T>& z0, int t, const Tensor<T>& eps, const NoiseSchedule& ns);

template <class T>
struct LossParts {
    Tensor<T> total;  // mse + lambda_attn * attn (attn term absent when no subjects)
    Tensor<T> mse;
    Tensor<T> attn;   // undefined when the sample trained unconditionally
};

// Denoising loss for one record at a sampled timestep. When `drop` is set the
// prompt and every subject input are nulled together (the location channel is
// kept), and no attention term applies.
template <class T>
LossParts<T> training_loss(const SubjectModel<T>& model, const SceneRecord& rec, int t,
                           const Tensor<T>& eps, const NoiseSchedule& ns, double lambda_attn,
                           bool drop);

struct TrainConfig {
    int steps = 3000;
    int batch = 8;
    double lr = 2e-3;
    double clip = 1.0;
    double lambda_attn = 0.01;
    double cond_drop_prob = 0.1;
    std::uint64_t seed = 1;
};

struct StepStats {
    double loss = 0;
    double mse = 0;
    double attn = 0;
};

// Minibatch trainer: samples records, timesteps, noise, and condition dropout
// from one deterministic stream, so two trainers with equal seeds see
// identical data regardless of loss weights.
template <class T>
class Trainer {
   public:
    Trainer(SubjectModel<T>& model, std::vector<SceneRecord> data, const NoiseSchedule& ns,
            TrainConfig cfg, const TrainabilityPolicy& policy);

    StepStats step();
    std::int64_t steps_taken() const { return opt_.steps_taken(); }

   private:
    SubjectModel<T>& model_;
    std::vector<SceneRecord> data_;
    NoiseSchedule ns_;
    TrainConfig cfg_;
    Adam<T> opt_;
    Rng rng_;
};

}  // namespace sfd
