#include "core/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "core/error.hpp"
#include "core/rng.hpp"
#include "core/tape.hpp"

namespace sfd {

namespace {

// Coordinates to probe for one tensor: all of them, or a seeded subset.
std::vector<int64_t> pick_coords(int64_t numel, int max_coords, uint64_t seed, size_t which) {
    std::vector<int64_t> ids;
    if (max_coords < 0 || numel <= max_coords) {
        ids.resize(static_cast<size_t>(numel));
        for (int64_t i = 0; i < numel; ++i) ids[static_cast<size_t>(i)] = i;
        return ids;
    }
    Rng rng(Rng::mix(seed, which));
    std::unordered_set<int64_t> seen;
    while (static_cast<int>(ids.size()) < max_coords) {
        const int64_t c = rng.randint(numel);
        if (seen.insert(c).second) ids.push_back(c);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

template <class T>
double eval_scalar(const std::function<Tensor<T>(std::vector<Tensor<T>>&)>& f,
                   std::vector<Tensor<T>>& inputs) {
    NoTapeScope<T> guard;
    Tensor<T> y = f(inputs);
    if (!y.defined() || y.numel() != 1)
        throw ContractError("grad_check: function must return a defined scalar");
    const double v = static_cast<double>(y.item());
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
}

}  // namespace

template <class T>
GradReport grad_check(const std::function<Tensor<T>(std::vector<Tensor<T>>&)>& f,
                      std::vector<Tensor<T>> inputs, const GradCheckParams& p) {
    if (p.step <= 0.0) throw ContractError("grad_check: step must be positive");

    for (auto& x : inputs) {
        x.set_requires_grad(true);
        x.zero_grad();
    }

    // analytic pass
    Tape<T> tape;
    {
        TapeScope<T> scope(tape);
        Tensor<T> y = f(inputs);
        if (!y.defined() || y.numel() != 1)
            throw ContractError("grad_check: function must return a defined scalar");
        if (!std::isfinite(static_cast<double>(y.item())))
            throw NumericError("grad_check: non-finite function value");
        tape.backward(y);
    }
    std::vector<std::vector<T>> analytic;
    analytic.reserve(inputs.size());
    for (auto& x : inputs) analytic.push_back(x.grad_values());

    GradReport report;
    const T h = static_cast<T>(p.step);
    for (size_t which = 0; which < inputs.size(); ++which) {
        Tensor<T>& x = inputs[which];
        T* px = x.data();
        const auto coords = pick_coords(x.numel(), p.max_coords, p.subset_seed, which);
        for (int64_t c : coords) {
            const T saved = px[c];
            px[c] = saved + h;
            const double fp = eval_scalar(f, inputs);
            px[c] = saved - h;
            const double fm = eval_scalar(f, inputs);
            px[c] = saved;
            const double fd = (fp - fm) / (2.0 * static_cast<double>(h));
            const double ad = static_cast<double>(analytic[which][static_cast<size_t>(c)]);
            const double denom = std::max(p.denom_floor, std::fabs(fd) + std::fabs(ad));
            const double rel = std::fabs(fd - ad) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst = cat("input ", which, " flat ", c, ": fd=", fd, " ad=", ad);
            }
            ++report.coords_checked;
        }
    }
    report.pass = report.max_rel_err <= p.rtol;
    return report;
}

template <class T>
GradReport grad_check(const std::function<Tensor<T>(Tensor<T>)>& f, Tensor<T> x,
                      const GradCheckParams& p) {
    std::function<Tensor<T>(std::vector<Tensor<T>>&)> g =
        [&f](std::vector<Tensor<T>>& ins) { return f(ins[0]); };
    return grad_check<T>(g, std::vector<Tensor<T>>{x}, p);
}

template GradReport grad_check<float>(const std::function<TensorF(std::vector<TensorF>&)>&,
                                      std::vector<TensorF>, const GradCheckParams&);
template GradReport grad_check<double>(const std::function<TensorD(std::vector<TensorD>&)>&,
                                       std::vector<TensorD>, const GradCheckParams&);
template GradReport grad_check<float>(const std::function<TensorF(TensorF)>&, TensorF,
                                      const GradCheckParams&);
template GradReport grad_check<double>(const std::function<TensorD(TensorD)>&, TensorD,
                                       const GradCheckParams&);

}  // namespace sfd
