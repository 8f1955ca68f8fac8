#include "core/gradsuite.hpp"

#include <cmath>

#include "core/ops.hpp"
#include "core/rng.hpp"

namespace sfd {

namespace {

namespace o = sfd::ops;
using F = std::function<TensorD(std::vector<TensorD>&)>;

TensorD rand_t(std::vector<int> shape, Rng& rng) {
    TensorD t(std::move(shape));
    for (auto& v : t.values()) v = rng.normal();
    return t;
}

// pushes every element at least `margin` away from zero (kink avoidance)
TensorD rand_away(std::vector<int> shape, Rng& rng, double margin) {
    TensorD t = rand_t(std::move(shape), rng);
    for (auto& v : t.values()) v += (v >= 0.0 ? margin : -margin);
    return t;
}

// scalarizes y with fixed random weights so every output coordinate matters
TensorD pin(TensorD y, Rng& rng) {
    TensorD w(y.shape());
    for (auto& v : w.values()) v = rng.normal();
    return o::sum(o::mul(y, w));
}

}  // namespace

std::vector<NamedReport> run_op_gradient_suite() {
    std::vector<NamedReport> out;
    Rng shape_rng(404);  // weights for pin() are drawn fresh per case below

    auto check = [&out](const std::string& name, const F& f, std::vector<TensorD> ins) {
        GradCheckParams p;  // step 1e-4, rtol 1e-4
        out.push_back({name, grad_check<double>(f, std::move(ins), p)});
    };
    // pin-weights must be frozen per case: capture an Rng seeded from the name
    auto pinner = [](uint64_t seed) {
        return [seed](TensorD y) {
            Rng r(seed);
            return pin(std::move(y), r);
        };
    };

    int case_id = 0;
    auto next_seed = [&case_id]() { return Rng::mix(2024, static_cast<uint64_t>(++case_id)); };

    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("add", [pw](auto& in) { return pw(o::add(in[0], in[1])); },
              {rand_t({7}, rng), rand_t({7}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("sub", [pw](auto& in) { return pw(o::sub(in[0], in[1])); },
              {rand_t({3, 4}, rng), rand_t({3, 4}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("mul", [pw](auto& in) { return pw(o::mul(in[0], in[1])); },
              {rand_t({2, 3, 2}, rng), rand_t({2, 3, 2}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("add_scalar", [pw](auto& in) { return pw(o::add_scalar(in[0], 0.7)); },
              {rand_t({5}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("mul_scalar", [pw](auto& in) { return pw(o::mul_scalar(in[0], -1.3)); },
              {rand_t({2, 2}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("scale_by", [pw](auto& in) { return pw(o::scale_by(in[0], in[1])); },
              {rand_t({3, 3}, rng), rand_t({1}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("relu", [pw](auto& in) { return pw(o::relu(in[0])); },
              {rand_away({4, 5}, rng, 0.2)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("gelu", [pw](auto& in) { return pw(o::gelu(in[0])); }, {rand_t({6}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("silu", [pw](auto& in) { return pw(o::silu(in[0])); }, {rand_t({2, 3}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("tanh", [pw](auto& in) { return pw(o::tanh_op(in[0])); }, {rand_t({7}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("sigmoid", [pw](auto& in) { return pw(o::sigmoid(in[0])); }, {rand_t({3, 3}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("matmul", [pw](auto& in) { return pw(o::matmul(in[0], in[1])); },
              {rand_t({4, 3}, rng), rand_t({3, 5}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("matmul_nt", [pw](auto& in) { return pw(o::matmul_nt(in[0], in[1])); },
              {rand_t({3, 4}, rng), rand_t({5, 4}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("transpose2d", [pw](auto& in) { return pw(o::transpose2d(in[0])); },
              {rand_t({3, 5}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("add_rowvec", [pw](auto& in) { return pw(o::add_rowvec(in[0], in[1])); },
              {rand_t({4, 3}, rng), rand_t({3}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("reshape", [pw](auto& in) { return pw(o::reshape(in[0], {3, 4})); },
              {rand_t({2, 6}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("slice_rows", [pw](auto& in) { return pw(o::slice_rows(in[0], 1, 4)); },
              {rand_t({5, 3}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("slice_cols", [pw](auto& in) { return pw(o::slice_cols(in[0], 2, 5)); },
              {rand_t({3, 6}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("concat_rows",
              [pw](auto& in) { return pw(o::concat_rows<double>({in[0], in[1]})); },
              {rand_t({2, 3}, rng), rand_t({4, 3}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("concat_cols",
              [pw](auto& in) { return pw(o::concat_cols<double>({in[0], in[1]})); },
              {rand_t({2, 2}, rng), rand_t({2, 3}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("concat_channels",
              [pw](auto& in) { return pw(o::concat_channels(in[0], in[1])); },
              {rand_t({2, 2, 2}, rng), rand_t({1, 2, 2}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("rows_gather",
              [pw](auto& in) { return pw(o::rows_gather(in[0], {0, 2, 2, 4})); },
              {rand_t({5, 3}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("softmax_rank1", [pw](auto& in) { return pw(o::softmax(in[0], 0)); },
              {rand_t({5}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("softmax_rank2_axis1", [pw](auto& in) { return pw(o::softmax(in[0], 1)); },
              {rand_t({3, 4}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("softmax_rank4_axis1", [pw](auto& in) { return pw(o::softmax(in[0], 1)); },
              {rand_t({2, 3, 2, 2}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("layer_norm",
              [pw](auto& in) { return pw(o::layer_norm(in[0], in[1], in[2], 1e-5)); },
              {rand_t({4, 6}, rng), rand_t({6}, rng), rand_t({6}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("group_norm",
              [pw](auto& in) { return pw(o::group_norm(in[0], in[1], in[2], 2, 1e-5)); },
              {rand_t({4, 3, 3}, rng), rand_t({4}, rng), rand_t({4}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("channel_affine",
              [pw](auto& in) { return pw(o::channel_affine(in[0], in[1], in[2])); },
              {rand_t({3, 2, 2}, rng), rand_t({3}, rng), rand_t({3}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("conv2d_s1p1",
              [pw](auto& in) { return pw(o::conv2d(in[0], in[1], in[2], 1, 1)); },
              {rand_t({2, 5, 5}, rng), rand_t({3, 2, 3, 3}, rng), rand_t({3}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("conv2d_s2p1",
              [pw](auto& in) { return pw(o::conv2d(in[0], in[1], in[2], 2, 1)); },
              {rand_t({2, 6, 6}, rng), rand_t({2, 2, 3, 3}, rng), rand_t({2}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("upsample2x", [pw](auto& in) { return pw(o::upsample2x(in[0])); },
              {rand_t({2, 3, 3}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("avg_pool2", [pw](auto& in) { return pw(o::avg_pool2(in[0])); },
              {rand_t({2, 4, 4}, rng)});
    }
    {
        Rng rng(next_seed());
        check("sum_rank4", [](auto& in) { return o::sum(in[0]); }, {rand_t({2, 2, 2, 2}, rng)});
    }
    {
        Rng rng(next_seed());
        check("mean", [](auto& in) { return o::mean(in[0]); }, {rand_t({5}, rng)});
    }
    {
        Rng rng(next_seed());
        check("mse", [](auto& in) { return o::mse(in[0], in[1]); },
              {rand_t({3, 4}, rng), rand_t({3, 4}, rng)});
    }
    {
        // keep |a-b| >= 0.4 so the finite-difference probe stays off the kink
        Rng rng(next_seed());
        TensorD a = rand_t({3, 3}, rng);
        TensorD b = a;
        TensorD off = rand_away({3, 3}, rng, 0.2);
        b = ops::add(b, off);
        check("l1_mean", [](auto& in) { return o::l1_mean(in[0], in[1]); }, {a, b});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("add_n",
              [pw](auto& in) { return pw(o::add_n<double>({in[0], in[1], in[2]})); },
              {rand_t({2, 3}, rng), rand_t({2, 3}, rng), rand_t({2, 3}, rng)});
    }
    {
        Rng rng(next_seed());
        auto pw = pinner(next_seed());
        check("average", [pw](auto& in) { return pw(o::average<double>({in[0], in[1]})); },
              {rand_t({3, 2}, rng), rand_t({3, 2}, rng)});
    }
    {
        Rng rng(next_seed());
        check("cross_entropy",
              [](auto& in) { return o::cross_entropy(in[0], {2, 0, 4, 1}); },
              {rand_t({4, 5}, rng)});
    }
    {
        // composite: matmul -> softmax -> L1 against a fixed target; targets sit
        // above 1 so |softmax - target| never changes sign under probing
        Rng rng(next_seed());
        TensorD target = ops::add_scalar(rand_t({4, 5}, rng), 3.0);
        check("composite_matmul_softmax_l1",
              [target](auto& in) {
                  return o::l1_mean(o::softmax(o::matmul(in[0], in[1]), 1), target);
              },
              {rand_t({4, 3}, rng), rand_t({3, 5}, rng)});
    }
    (void)shape_rng;
    return out;
}

bool suite_passes(const std::vector<NamedReport>& reports) {
    for (const auto& r : reports)
        if (!r.report.pass) return false;
    return true;
}

}  // namespace sfd
