#include <doctest.h>

#include <cmath>

#include "core/error.hpp"
#include "diffusion/latent.hpp"
#include "diffusion/sampler.hpp"
#include "diffusion/train.hpp"
#include "model/policy.hpp"

using namespace sfd;

namespace {

ModelConfig tiny_model() {
    ModelConfig mc;
    mc.text.d_cond = 32;
    mc.text.layers = 1;
    mc.text.d_ff = 48;
    mc.text.d_img = 24;
    mc.image.d_img = 24;
    mc.image.layers = 1;
    mc.image.d_ff = 48;
    mc.unet.widths = {16, 24, 32};
    mc.unet.d_cond = 32;
    mc.unet.d_img = 24;
    mc.unet.fourier_k = 2;
    mc.unet.time_dim = 32;
    return mc;
}

bool bit_equal(const TensorF& a, const TensorF& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a.data()[i] != b.data()[i]) return false;
    return true;
}

}  // namespace

TEST_CASE("linear schedule ramps beta and shrinks alpha_bar monotonically") {
    NoiseSchedule ns = NoiseSchedule::linear();
    REQUIRE(ns.T == 1000);
    CHECK(ns.beta.front() == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(ns.beta.back() == doctest::Approx(2e-2).epsilon(1e-12));
    CHECK(ns.alpha_bar.front() == doctest::Approx(1.0 - 1e-4).epsilon(1e-12));
    for (int t = 1; t < ns.T; ++t) {
        CHECK(ns.alpha_bar[t] < ns.alpha_bar[t - 1]);
        CHECK(ns.alpha_bar[t] > 0.0);
        CHECK(ns.beta[t] > ns.beta[t - 1]);
    }
    CHECK(ns.alpha_bar.back() < 5e-3);  // heavy noise by the end
    CHECK_THROWS_AS((void)NoiseSchedule::linear(1), ContractError);
    CHECK_THROWS_AS((void)NoiseSchedule::linear(10, 0.0, 0.1), ContractError);
    CHECK_THROWS_AS((void)NoiseSchedule::linear(10, 0.2, 0.1), ContractError);
}

TEST_CASE("latent codec is a lossless space-to-depth rearrangement") {
    // every 8-bit value survives the round trip exactly
    Image ramp(2, 256, 3);
    for (int x = 0; x < 256; ++x)
        for (int y = 0; y < 2; ++y)
            for (int c = 0; c < 3; ++c) ramp.at(y, x, c) = static_cast<std::uint8_t>(x);
    CHECK(latent_to_image(image_to_latent<float>(ramp)) == ramp);
    CHECK(latent_to_image(image_to_latent<double>(ramp)) == ramp);

    // generated scene round-trips bit for bit
    SceneRecord rec = generate_scene(7, SceneSpec{});
    TensorF z = image_to_latent<float>(rec.image);
    REQUIRE(z.shape() == std::vector<int>{12, 16, 16});
    CHECK(latent_to_image(z) == rec.image);

    // layout: out[c*4 + dy*2 + dx][y][x] = in[c][2y+dy][2x+dx], scaled
    Image probe(4, 4, 3);
    probe.at(0, 1, 0) = 255;  // c=0, dy=0, dx=1 -> channel 1
    probe.at(3, 2, 2) = 51;   // c=2, dy=1, dx=0 -> channel 8+2=10, y=1, x=1
    TensorF zp = image_to_latent<float>(probe);
    CHECK(zp.data()[(1 * 2 + 0) * 2 + 0] == 1.0f);  // channel 1, (0, 0)
    CHECK(zp.data()[(10 * 2 + 1) * 2 + 1] == doctest::Approx(51.0 / 127.5 - 1.0));
    CHECK(zp.data()[0] == -1.0f);  // untouched pixel

    // saturation clamps instead of wrapping
    TensorF hot = TensorF::full({12, 2, 2}, 3.5f);
    Image white = latent_to_image(hot);
    CHECK(white.at(0, 0, 0) == 255);
    TensorF cold = TensorF::full({12, 2, 2}, -9.0f);
    CHECK(latent_to_image(cold).at(1, 1, 2) == 0);

    Image gray(4, 4, 1);
    CHECK_THROWS_AS((void)image_to_latent<float>(gray), DimError);
    Image odd(5, 4, 3);
    CHECK_THROWS_AS((void)image_to_latent<float>(odd), DimError);
    CHECK_THROWS_AS((void)latent_to_image(TensorF::zeros({3, 4, 4})), DimError);
}

TEST_CASE("forward diffusion matches closed-form moments") {
    NoiseSchedule ns = NoiseSchedule::linear();
    TensorF z0 = TensorF::full({1, 2, 2}, 0.5f);
    TensorF e = TensorF::zeros({1, 2, 2});
    // zero noise leaves the signal scaled by sqrt(alpha_bar)
    TensorF z = q_sample(z0, 250, e, ns);
    const double ab = ns.alpha_bar[250];
    for (int64_t i = 0; i < z.numel(); ++i)
        CHECK(z.data()[i] == doctest::Approx(0.5 * std::sqrt(ab)).epsilon(1e-6));

    CHECK_THROWS_AS((void)q_sample(z0, -1, e, ns), ContractError);
    CHECK_THROWS_AS((void)q_sample(z0, 1000, e, ns), ContractError);
    CHECK_THROWS_AS((void)q_sample(z0, 3, TensorF::zeros({1, 2, 3}), ns), DimError);

    // Monte Carlo: for fixed z0, Var[z_t] = 1 - alpha_bar, E[z_t] = sqrt(ab) z0
    Rng rng(123);
    const int t = 600, n = 20000;
    TensorF z0b = TensorF::full({1, 4, 4}, 0.5f);
    double sum = 0, sumsq = 0;
    long count = 0;
    for (int i = 0; i < n; ++i) {
        TensorF eps = TensorF::zeros({1, 4, 4});
        for (auto& v : eps.values()) v = float(rng.normal());
        TensorF zt = q_sample(z0b, t, eps, ns);
        for (int64_t j = 0; j < zt.numel(); ++j) {
            sum += zt.data()[j];
            sumsq += double(zt.data()[j]) * zt.data()[j];
            ++count;
        }
    }
    const double mean = sum / count;
    const double var = sumsq / count - mean * mean;
    const double ab_t = ns.alpha_bar[t];
    CHECK(mean == doctest::Approx(0.5 * std::sqrt(ab_t)).epsilon(0.02));
    CHECK(var == doctest::Approx(1.0 - ab_t).epsilon(0.02));
}

TEST_CASE("training loss composes mse and the attention term") {
    SceneRecord rec = generate_scene(21, SceneSpec{});
    SubjectModel<float> model(tiny_model(), Vocab::standard());
    NoiseSchedule ns = NoiseSchedule::linear();
    Rng rng(5);
    TensorF eps = TensorF::zeros({12, 16, 16});
    for (auto& v : eps.values()) v = float(rng.normal());

    auto parts = training_loss(model, rec, 100, eps, ns, 0.01, false);
    CHECK(parts.attn.defined());
    CHECK(parts.total.item() ==
          doctest::Approx(parts.mse.item() + 0.01 * parts.attn.item()).epsilon(1e-6));
    // untrained net predicts exactly zero noise, so mse is the noise power
    double power = 0;
    for (int64_t i = 0; i < eps.numel(); ++i) power += double(eps.data()[i]) * eps.data()[i];
    CHECK(parts.mse.item() == doctest::Approx(power / eps.numel()).epsilon(1e-4));

    // condition dropout removes the attention term entirely
    auto dropped = training_loss(model, rec, 100, eps, ns, 0.01, true);
    CHECK_FALSE(dropped.attn.defined());
    CHECK(dropped.total.item() == dropped.mse.item());

    // lambda 0 keeps the pure denoising objective
    auto bare = training_loss(model, rec, 100, eps, ns, 0.0, false);
    CHECK_FALSE(bare.attn.defined());
    CHECK(bare.total.item() == bare.mse.item());

    CHECK_THROWS_AS((void)training_loss(model, rec, 100, eps, ns, -1.0, false), ContractError);
}

TEST_CASE("trainer stream is deterministic and independent of loss weights") {
    SceneSpec spec;
    std::vector<SceneRecord> data;
    for (int s = 0; s < 4; ++s) data.push_back(generate_scene(1000 + s, spec));
    NoiseSchedule ns = NoiseSchedule::linear();

    TrainConfig tc;
    tc.batch = 2;
    tc.lr = 1e-3;
    tc.seed = 9;

    SubjectModel<float> a(tiny_model(), Vocab::standard());
    SubjectModel<float> b(tiny_model(), Vocab::standard());
    Trainer<float> ta(a, data, ns, tc, TrainabilityPolicy::full());
    Trainer<float> tb(b, data, ns, tc, TrainabilityPolicy::full());
    auto sa = ta.step();
    auto sb = tb.step();
    CHECK(sa.loss == sb.loss);  // same seed, same model init: bit-identical
    CHECK(sa.mse == sb.mse);

    // a lambda=0 twin consumes the identical sample stream: equal first-step mse
    SubjectModel<float> c(tiny_model(), Vocab::standard());
    TrainConfig tc0 = tc;
    tc0.lambda_attn = 0.0;
    Trainer<float> tcr(c, data, ns, tc0, TrainabilityPolicy::full());
    auto sc = tcr.step();
    CHECK(sc.mse == sa.mse);
    CHECK(sc.loss == doctest::Approx(sc.mse));
    CHECK(sa.loss > sc.loss);  // attention term contributes when lambda > 0

    // parameters actually move
    CHECK(ta.steps_taken() == 1);
    auto s2 = ta.step();
    CHECK(std::isfinite(s2.loss));

    CHECK_THROWS_AS((void)Trainer<float>(a, {}, ns, tc, TrainabilityPolicy::full()),
                    ContractError);
}

TEST_CASE("ddim sampling is deterministic and seeds are independent") {
    SceneRecord rec = generate_scene(33, SceneSpec{});
    ModelConfig mc = tiny_model();
    mc.unet.zero_init_out = false;  // a zero output head would hide conditioning
    SubjectModel<float> model(mc, Vocab::standard());
    NoiseSchedule ns = NoiseSchedule::linear(40);
    auto cond = model.condition(rec);

    SampleConfig sc;
    sc.steps = 6;
    sc.guidance = 2.0;
    sc.seed = 11;
    TensorF z1 = ddim_sample(model, cond, ns, sc);
    TensorF z2 = ddim_sample(model, cond, ns, sc);
    REQUIRE(z1.shape() == std::vector<int>{12, 16, 16});
    CHECK(bit_equal(z1, z2));
    SampleConfig other = sc;
    other.seed = 12;
    CHECK_FALSE(bit_equal(z1, ddim_sample(model, cond, ns, other)));

    // plain guidance runs a single conditional pass; w=1 must agree with a
    // guided combination that algebraically collapses to the same thing
    SampleConfig w1 = sc;
    w1.guidance = 1.0;
    TensorF plain = ddim_sample(model, cond, ns, w1);
    CHECK_FALSE(bit_equal(plain, z1));  // guidance 2 differs from 1

    SampleConfig bad = sc;
    bad.steps = 0;
    CHECK_THROWS_AS((void)ddim_sample(model, cond, ns, bad), ContractError);
    bad.steps = 40;
    CHECK_THROWS_AS((void)ddim_sample(model, cond, ns, bad), ContractError);
}

TEST_CASE("interpolation endpoints reproduce the pure runs bit for bit") {
    SceneRecord rec = generate_scene(58, SceneSpec{});
    ModelConfig mc = tiny_model();
    mc.unet.zero_init_out = false;  // conditioning must be able to steer the trajectory
    SubjectModel<float> model(mc, Vocab::standard());
    NoiseSchedule ns = NoiseSchedule::linear(40);
    auto subj = model.condition(rec);
    auto capt = model.text_condition(rec.caption);

    SampleConfig sc;
    sc.steps = 5;
    sc.guidance = 1.5;
    sc.seed = 4;
    TensorF pure_subj = ddim_sample(model, subj, ns, sc);
    TensorF pure_capt = ddim_sample(model, capt, ns, sc);
    CHECK(bit_equal(interpolate_sample(model, subj, capt, 0.0, ns, sc), pure_subj));
    CHECK(bit_equal(interpolate_sample(model, subj, capt, 1.0, ns, sc), pure_capt));

    TensorF mid = interpolate_sample(model, subj, capt, 0.5, ns, sc);
    CHECK_FALSE(bit_equal(mid, pure_subj));
    CHECK_FALSE(bit_equal(mid, pure_capt));

    CHECK_THROWS_AS((void)interpolate_sample(model, subj, capt, -0.01, ns, sc), ContractError);
    CHECK_THROWS_AS((void)interpolate_sample(model, subj, capt, 1.01, ns, sc), ContractError);
}

TEST_CASE("random location masks are single rectangles of bounded area") {
    Rng rng(77);
    const int side = 16;
    for (int i = 0; i < 200; ++i) {
        TensorF m = random_location_mask<float>(rng, side);
        REQUIRE(m.shape() == std::vector<int>{1, side, side});
        int y0 = side, y1 = -1, x0 = side, x1 = -1, area = 0;
        for (int y = 0; y < side; ++y) {
            for (int x = 0; x < side; ++x) {
                float v = m.data()[y * side + x];
                CHECK((v == 0.0f || v == 1.0f));
                if (v == 1.0f) {
                    ++area;
                    y0 = std::min(y0, y);
                    y1 = std::max(y1, y);
                    x0 = std::min(x0, x);
                    x1 = std::max(x1, x);
                }
            }
        }
        REQUIRE(area > 0);
        // the support is exactly its bounding rectangle
        CHECK(area == (y1 - y0 + 1) * (x1 - x0 + 1));
        // area fraction stays near the sampled range (integer rounding slack)
        CHECK(area >= int(0.05 * side * side));
        CHECK(area <= int(0.55 * side * side));
    }
    // deterministic per seed
    Rng r1(5), r2(5);
    CHECK(bit_equal(random_location_mask<float>(r1, 8), random_location_mask<float>(r2, 8)));
}
