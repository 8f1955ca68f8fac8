#include "diffusion/train.hpp"

#include <cmath>

#include "attn/attn_control.hpp"
#include "core/error.hpp"
#include "core/tape.hpp"
#include "diffusion/latent.hpp"

namespace sfd {

template <class T>
Tensor<T> q_sample(const Tensor<T>& z0, int t, const Tensor<T>& eps, const NoiseSchedule& ns) {
    if (t < 0 || t >= ns.T) throw ContractError(cat("timestep ", t, " outside [0, ", ns.T, ")"));
    if (z0.shape() != eps.shape()) throw DimError("noise must match the latent shape");
    const double ab = ns.alpha_bar[static_cast<std::size_t>(t)];
    return ops::add(ops::mul_scalar(z0, T(std::sqrt(ab))),
                    ops::mul_scalar(eps, T(std::sqrt(1.0 - ab))));
}

template <class T>
LossParts<T> training_loss(const SubjectModel<T>& model, const SceneRecord& rec, int t,
                           const Tensor<T>& eps, const NoiseSchedule& ns, double lambda_attn,
                           bool drop) {
    if (lambda_attn < 0) throw ContractError("attention weight must be non-negative");
    auto bundle = model.condition(rec);
    if (drop) bundle = model.unconditional_like(bundle);
    Tensor<T> z0 = image_to_latent<T>(rec.image);
    Tensor<T> z_t = q_sample(z0, t, eps, ns);
    auto out = model.denoise(z_t, t, bundle);
    LossParts<T> parts;
    parts.mse = ops::mse(out.eps, eps);
    if (!drop && !rec.entities.empty() && lambda_attn > 0) {
        parts.attn = attention_loss(out.attn, bindings_from_roles(bundle.roles),
                                    bundle.entity_masks, rec.image.h, rec.image.w, bundle.tokens);
        parts.total = ops::add(parts.mse, ops::mul_scalar(parts.attn, T(lambda_attn)));
    } else {
        parts.total = parts.mse;
    }
    return parts;
}

template <class T>
Trainer<T>::Trainer(SubjectModel<T>& model, std::vector<SceneRecord> data,
                    const NoiseSchedule& ns, TrainConfig cfg, const TrainabilityPolicy& policy)
    : model_(model),
      data_(std::move(data)),
      ns_(ns),
      cfg_(cfg),
      opt_(model.params(), {.lr = cfg.lr, .clip = cfg.clip}),
      rng_(Rng::mix(cfg.seed, 0x7e41a34bu)) {
    if (data_.empty()) throw ContractError("trainer needs a non-empty dataset");
    if (cfg_.batch < 1 || cfg_.steps < 1) throw ContractError("batch and steps must be positive");
    set_trainable(model_.params(), policy);
}

template <class T>
StepStats Trainer<T>::step() {
    model_.params().zero_grads();
    Tape<T> tape;
    TapeScope scope(tape);
    std::vector<Tensor<T>> totals;
    StepStats stats;
    int attn_terms = 0;
    for (int i = 0; i < cfg_.batch; ++i) {
        const auto& rec = data_[static_cast<std::size_t>(rng_.randint(data_.size()))];
        const int t = static_cast<int>(rng_.randint(ns_.T));
        auto eps = Tensor<T>::zeros({12, rec.image.h / 2, rec.image.w / 2});
        for (auto& v : eps.values()) v = T(rng_.normal());
        const bool drop = rng_.uniform() < cfg_.cond_drop_prob;
        auto parts = training_loss(model_, rec, t, eps, ns_, cfg_.lambda_attn, drop);
        totals.push_back(parts.total);
        stats.mse += parts.mse.item();
        if (parts.attn.defined()) {
            stats.attn += parts.attn.item();
            ++attn_terms;
        }
    }
    Tensor<T> loss = ops::average(totals);
    stats.loss = loss.item();
    stats.mse /= cfg_.batch;
    if (attn_terms > 0) stats.attn /= attn_terms;
    tape.backward(loss);
    opt_.step();
    return stats;
}

template Tensor<float> q_sample<float>(const Tensor<float>&, int, const Tensor<float>&,
                                       const NoiseSchedule&);
template Tensor<double> q_sample<double>(const Tensor<double>&, int, const Tensor<double>&,
                                         const NoiseSchedule&);
template struct LossParts<float>;
template struct LossParts<double>;
template LossParts<float> training_loss<float>(const SubjectModel<float>&, const SceneRecord&,
                                               int, const Tensor<float>&, const NoiseSchedule&,
                                               double, bool);
template LossParts<double> training_loss<double>(const SubjectModel<double>&, const SceneRecord&,
                                                 int, const Tensor<double>&, const NoiseSchedule&,
                                                 double, bool);
template class Trainer<float>;
template class Trainer<double>;

}  // namespace sfd
