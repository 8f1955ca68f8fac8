#include <doctest.h>

#include <cmath>

#include "core/error.hpp"
#include "core/gradcheck.hpp"
#include "core/tape.hpp"
#include "nn/layers.hpp"

using namespace sfd;

namespace {

// scalar pin with nonuniform fixed weights so every output coordinate matters
template <class T>
Tensor<T> pin(Tensor<T> y) {
    Tensor<T> w = Tensor<T>::zeros(y.shape());
    for (int64_t i = 0; i < w.numel(); ++i)
        w.data()[i] = static_cast<T>(0.3 + 0.1 * double(i % 7));
    return ops::mean(ops::mul(y, w));
}

}  // namespace

TEST_CASE("param map registers, retrieves, and rejects duplicates") {
    ParamMapF pm;
    auto a = pm.add("a", TensorF::zeros({2, 3}));
    CHECK(a.requires_grad());
    CHECK(pm.has("a"));
    CHECK(pm.at("a").same_as(a));
    CHECK_THROWS_AS(pm.add("a", TensorF::zeros({1})), ContractError);
    CHECK_THROWS_AS((void)pm.at("b"), ContractError);
    pm.add("b", TensorF::zeros({4}));
    CHECK(pm.total_size() == 10);
    CHECK(pm.items().size() == 2);
    CHECK(pm.items()[0].first == "a");  // registration order preserved
}

TEST_CASE("linear layer computes x W^T + b") {
    ParamMapF pm;
    Rng rng(1);
    Linear<float> lin(pm, "lin", 3, 2, rng);
    // overwrite with a hand-checkable weight
    float wv[] = {1, 0, 0, 0, 1, 0};  // rows select x0 and x1
    for (int i = 0; i < 6; ++i) lin.w.data()[i] = wv[i];
    lin.b.data()[0] = 10.0f;
    TensorF x = TensorF::from({1, 3}, {2, 3, 4});
    TensorF y = lin.forward(x);
    REQUIRE(y.shape() == std::vector<int>{1, 2});
    CHECK(y.data()[0] == 12.0f);
    CHECK(y.data()[1] == 3.0f);
    CHECK(pm.has("lin.w"));
    CHECK(pm.has("lin.b"));
}

TEST_CASE("layer norm standardizes rows") {
    ParamMapF pm;
    LayerNorm<float> ln(pm, "ln", 4);
    TensorF x = TensorF::from({2, 4}, {1, 2, 3, 4, -5, 0, 5, 10});
    TensorF y = ln.forward(x);
    for (int r = 0; r < 2; ++r) {
        double m = 0;
        for (int c = 0; c < 4; ++c) m += y.data()[r * 4 + c];
        CHECK(std::abs(m) < 1e-5);
    }
}

TEST_CASE("group norm layer validates divisibility") {
    ParamMapF pm;
    CHECK_THROWS_AS(GroupNorm<float>(pm, "gn", 6, 4), DimError);
    GroupNorm<float> gn(pm, "gn2", 4, 2);
    TensorF x = TensorF::full({4, 2, 2}, 3.0f);
    TensorF y = gn.forward(x);
    for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == doctest::Approx(0.0));
}

TEST_CASE("zero-init conv outputs exactly zero") {
    ParamMapF pm;
    Rng rng(3);
    Conv<float> conv(pm, "c", 2, 3, 3, 1, 1, rng, /*zero_init=*/true);
    TensorF x = TensorF::full({2, 4, 4}, 1.5f);
    TensorF y = conv.forward(x);
    REQUIRE(y.shape() == std::vector<int>{3, 4, 4});
    for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.0f);
}

TEST_CASE("attention output shape and map normalization") {
    ParamMapF pm;
    Rng rng(5);
    Mha<float> mha(pm, "sa", 8, 2, rng);
    TensorF x = init_normal<float>({5, 8}, 1.0, rng);
    TensorF map;
    TensorF y = mha.forward(x, x, &map);
    REQUIRE(y.shape() == std::vector<int>{5, 8});
    REQUIRE(map.shape() == std::vector<int>{5, 5});
    for (int r = 0; r < 5; ++r) {
        double s = 0;
        for (int c = 0; c < 5; ++c) {
            s += map.data()[r * 5 + c];
            CHECK(map.data()[r * 5 + c] >= 0.0f);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("cross-attention accepts a different kv width and is deterministic") {
    ParamMapF pm;
    Rng rng(7);
    Mha<float> mha(pm, "ca", 8, 4, rng, /*kv_dim=*/12);
    TensorF q = init_normal<float>({3, 8}, 1.0, rng);
    TensorF kv = init_normal<float>({6, 12}, 1.0, rng);
    TensorF y1 = mha.forward(q, kv);
    TensorF y2 = mha.forward(q, kv);
    REQUIRE(y1.shape() == std::vector<int>{3, 8});
    CHECK(y1.values() == y2.values());
    CHECK_THROWS_AS(Mha<float>(pm, "bad", 10, 4, rng), DimError);
}

TEST_CASE("single-key attention map is exactly one") {
    ParamMapF pm;
    Rng rng(11);
    Mha<float> mha(pm, "sa", 4, 2, rng);
    TensorF q = init_normal<float>({2, 4}, 1.0, rng);
    TensorF kv = init_normal<float>({1, 4}, 1.0, rng);
    TensorF map;
    (void)mha.forward(q, kv, &map);
    REQUIRE(map.shape() == std::vector<int>{2, 1});
    CHECK(map.data()[0] == 1.0f);
    CHECK(map.data()[1] == 1.0f);
}

TEST_CASE("attention gradients pass finite differences") {
    ParamMapD pm;
    Rng rng(13);
    Mha<double> mha(pm, "sa", 6, 2, rng);
    TensorD x = init_normal<double>({4, 6}, 0.5, rng);
    std::vector<TensorD> inputs = {x};
    for (const auto& [name, t] : pm.items()) inputs.push_back(t);
    auto f = [&](std::vector<TensorD>& in) { return pin(mha.forward(in[0], in[0])); };
    const GradReport rep = grad_check<double>(f, inputs, {});
    INFO(rep.worst);
    CHECK(rep.pass);
}

TEST_CASE("encoder block gradients pass finite differences") {
    ParamMapD pm;
    Rng rng(17);
    EncoderBlock<double> blk(pm, "b", 6, 2, 10, rng);
    TensorD x = init_normal<double>({3, 6}, 0.5, rng);
    std::vector<TensorD> inputs = {x};
    for (const auto& [name, t] : pm.items()) inputs.push_back(t);
    auto f = [&](std::vector<TensorD>& in) { return pin(blk.forward(in[0])); };
    GradCheckParams p;
    p.max_coords = 40;  // keep the sweep quick; coords chosen deterministically
    const GradReport rep = grad_check<double>(f, inputs, p);
    INFO(rep.worst);
    CHECK(rep.pass);
}

TEST_CASE("sinusoidal embedding hand values") {
    TensorF e = sinusoidal_embedding<float>(0.0, 6);
    REQUIRE(e.shape() == std::vector<int>{1, 6});
    for (int i = 0; i < 3; ++i) {
        CHECK(e.data()[i] == 0.0f);                        // sines at 0
        CHECK(e.data()[3 + i] == 1.0f);                    // cosines at 0
    }
    TensorF e2 = sinusoidal_embedding<float>(2.0, 6);
    CHECK(e2.data()[0] == doctest::Approx(std::sin(2.0)));
    CHECK_THROWS_AS((void)sinusoidal_embedding<float>(1.0, 5), DimError);
}

TEST_CASE("init_normal is deterministic per seed") {
    Rng a(42), b(42), c(43), d(42);
    CHECK(init_normal<float>({3, 3}, 1.0, a).values() ==
          init_normal<float>({3, 3}, 1.0, b).values());
    CHECK(init_normal<float>({3, 3}, 1.0, d).values() !=
          init_normal<float>({3, 3}, 1.0, c).values());
}
