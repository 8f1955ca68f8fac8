#include "diffusion/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "core/error.hpp"
#include "core/tape.hpp"

namespace sfd {
namespace {

// `steps` evenly spaced integers from T-1 down to 1
std::vector<int> time_grid(int steps, int T) {
    if (steps < 1 || steps > T - 1) {
        throw ContractError(cat("sampler steps ", steps, " outside [1, ", T - 1, "]"));
    }
    std::vector<int> times(static_cast<std::size_t>(steps));
    if (steps == 1) {
        times[0] = T - 1;
        return times;
    }
    for (int k = 0; k < steps; ++k) {
        times[static_cast<std::size_t>(k)] =
            static_cast<int>(std::lround((T - 1) - double(T - 2) * k / (steps - 1)));
    }
    return times;
}

// one denoising trajectory; pick(t) chooses the conditioning pair per step
template <class T, class Pick>
Tensor<T> ddim_core(const SubjectModel<T>& model, const NoiseSchedule& ns,
                    const SampleConfig& sc, Pick pick) {
    NoTapeScope<T> guard;
    const auto& u = model.config().unet;
    Rng rng(Rng::mix(sc.seed, 0xdd1u));
    auto z = Tensor<T>::zeros({u.latent_ch, u.base, u.base});
    for (auto& v : z.values()) v = T(rng.normal());
    const auto times = time_grid(sc.steps, ns.T);
    for (std::size_t k = 0; k < times.size(); ++k) {
        const int t = times[k];
        const auto& [bundle, uncond] = pick(t);
        Tensor<T> eps = model.denoise(z, t, *bundle).eps;
        if (sc.guidance != 1.0) {
            Tensor<T> eps_u = model.denoise(z, t, *uncond).eps;
            eps = ops::add(eps_u, ops::mul_scalar(ops::sub(eps, eps_u), T(sc.guidance)));
        }
        const double ab = ns.alpha_bar[static_cast<std::size_t>(t)];
        Tensor<T> z0 = ops::mul_scalar(
            ops::sub(z, ops::mul_scalar(eps, T(std::sqrt(1.0 - ab)))), T(1.0 / std::sqrt(ab)));
        if (k + 1 < times.size()) {
            const double abn = ns.alpha_bar[static_cast<std::size_t>(times[k + 1])];
            const double sigma = sc.eta * std::sqrt((1.0 - abn) / (1.0 - ab)) *
                                 std::sqrt(std::max(0.0, 1.0 - ab / abn));
            const double dir = std::sqrt(std::max(0.0, 1.0 - abn - sigma * sigma));
            z = ops::add(ops::mul_scalar(z0, T(std::sqrt(abn))), ops::mul_scalar(eps, T(dir)));
            if (sc.eta > 0) {
                auto noise = Tensor<T>::zeros(z.shape());
                for (auto& v : noise.values()) v = T(rng.normal());
                z = ops::add(z, ops::mul_scalar(noise, T(sigma)));
            }
        } else {
            z = z0;
        }
    }
    return z;
}

}  // namespace

template <class T>
Tensor<T> ddim_sample(const SubjectModel<T>& model, const ConditionBundle<T>& cond,
                      const NoiseSchedule& ns, const SampleConfig& sc) {
    const bool need_uncond = sc.guidance != 1.0;
    ConditionBundle<T> un;
    if (need_uncond) un = model.unconditional_like(cond);
    auto pair = std::make_pair(&cond, &un);
    return ddim_core(model, ns, sc, [&](int) -> const auto& { return pair; });
}

template <class T>
Tensor<T> interpolate_sample(const SubjectModel<T>& model, const ConditionBundle<T>& subject_cond,
                             const ConditionBundle<T>& caption_cond, double alpha,
                             const NoiseSchedule& ns, const SampleConfig& sc) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ContractError(cat("interpolation weight ", alpha, " outside [0, 1]"));
    }
    const bool need_uncond = sc.guidance != 1.0;
    ConditionBundle<T> un_subject, un_caption;
    if (need_uncond) {
        un_subject = model.unconditional_like(subject_cond);
        un_caption = model.unconditional_like(caption_cond);
    }
    auto subj = std::make_pair(&subject_cond, &un_subject);
    auto capt = std::make_pair(&caption_cond, &un_caption);
    const double cut = alpha * ns.T;
    return ddim_core(model, ns, sc,
                     [&](int t) -> const auto& { return double(t) > cut ? subj : capt; });
}

template <class T>
Tensor<T> random_location_mask(Rng& rng, int side) {
    if (side < 2) throw ContractError("location mask needs side >= 2");
    const double frac = rng.uniform(0.1, 0.4);
    const int cells = std::max(1, static_cast<int>(std::lround(frac * side * side)));
    const int wmin = std::max(1, (cells + side - 1) / side);
    const int wmax = std::min(side, cells);
    const int w = wmin + static_cast<int>(rng.randint(wmax - wmin + 1));
    const int h = std::clamp(static_cast<int>(std::lround(double(cells) / w)), 1, side);
    const int x0 = static_cast<int>(rng.randint(side - w + 1));
    const int y0 = static_cast<int>(rng.randint(side - h + 1));
    auto m = Tensor<T>::zeros({1, side, side});
    for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) m.values()[static_cast<std::size_t>(y) * side + x] = T(1);
    }
    return m;
}

template Tensor<float> ddim_sample<float>(const SubjectModel<float>&, const ConditionBundle<float>&,
                                          const NoiseSchedule&, const SampleConfig&);
template Tensor<double> ddim_sample<double>(const SubjectModel<double>&,
                                            const ConditionBundle<double>&, const NoiseSchedule&,
                                            const SampleConfig&);
template Tensor<float> interpolate_sample<float>(const SubjectModel<float>&,
                                                 const ConditionBundle<float>&,
                                                 const ConditionBundle<float>&, double,
                                                 const NoiseSchedule&, const SampleConfig&);
template Tensor<double> interpolate_sample<double>(const SubjectModel<double>&,
                                                   const ConditionBundle<double>&,
                                                   const ConditionBundle<double>&, double,
                                                   const NoiseSchedule&, const SampleConfig&);
template Tensor<float> random_location_mask<float>(Rng&, int);
template Tensor<double> random_location_mask<double>(Rng&, int);

}  // namespace sfd
