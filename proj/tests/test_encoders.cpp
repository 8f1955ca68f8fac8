#include <doctest.h>

#include <cmath>

#include "core/error.hpp"
#include "core/tape.hpp"
#include "data/scene.hpp"
#include "encoders/image_encoder.hpp"
#include "encoders/text_encoder.hpp"
#include "encoders/vocab.hpp"

using namespace sfd;

namespace {

TextEncoderConfig text_cfg() {
    TextEncoderConfig c;
    c.vocab_size = Vocab::standard().size();
    return c;
}

}  // namespace

// ---------- text encoder ----------

TEST_CASE("fusion replaces only placeholder rows") {
    ParamMapF pm;
    Rng rng(1);
    TextEncoder<float> enc(pm, text_cfg(), rng);
    const Vocab vocab = Vocab::standard();
    const auto tokens = tokenize(vocab, "a red circle , the circle is [PH_0]", enc.cfg.seq_len);
    TokenRoles roles;
    roles.placeholder_pos = {8};
    roles.label_pos = {3};
    REQUIRE(tokens[8] == Vocab::kPh0);

    TensorF v_g = init_normal<float>({1, enc.cfg.d_img}, 1.0, rng);
    TensorF plain = enc.embed_and_fuse(tokens, {}, {});
    TensorF fused = enc.embed_and_fuse(tokens, {v_g}, roles);
    REQUIRE(plain.shape() == fused.shape());
    REQUIRE(fused.dim(0) == enc.cfg.seq_len);
    for (int r = 0; r < enc.cfg.seq_len; ++r)
        for (int c = 0; c < enc.cfg.d_cond; ++c) {
            const float a = plain.data()[r * enc.cfg.d_cond + c];
            const float b = fused.data()[r * enc.cfg.d_cond + c];
            if (r == 8)
                continue;  // the replaced row
            CHECK(a == b);  // all other rows bit-identical to the plain lookup
        }
    // the replaced row differs (projection of a random v_g)
    bool differs = false;
    for (int c = 0; c < enc.cfg.d_cond; ++c)
        differs |= plain.data()[8 * enc.cfg.d_cond + c] != fused.data()[8 * enc.cfg.d_cond + c];
    CHECK(differs);
}

TEST_CASE("zero subject embedding with zero projection bias gives a zero row") {
    ParamMapF pm;
    Rng rng(2);
    TextEncoder<float> enc(pm, text_cfg(), rng);
    const Vocab vocab = Vocab::standard();
    const auto tokens = tokenize(vocab, "the circle is [PH_0]", enc.cfg.seq_len);
    TokenRoles roles;
    roles.placeholder_pos = {4};
    roles.label_pos = {2};
    TensorF v_g = TensorF::zeros({1, enc.cfg.d_img});
    TensorF fused = enc.embed_and_fuse(tokens, {v_g}, roles);
    for (int c = 0; c < enc.cfg.d_cond; ++c)
        CHECK(fused.data()[4 * enc.cfg.d_cond + c] == 0.0f);  // proj bias starts at 0
}

TEST_CASE("fusion validates counts and positions") {
    ParamMapF pm;
    Rng rng(3);
    TextEncoder<float> enc(pm, text_cfg(), rng);
    const Vocab vocab = Vocab::standard();
    const auto tokens = tokenize(vocab, "a circle", enc.cfg.seq_len);
    TensorF v_g = TensorF::zeros({1, enc.cfg.d_img});
    TokenRoles none;
    CHECK_THROWS_AS((void)enc.embed_and_fuse(tokens, {v_g}, none), ContractError);
    TokenRoles bad;
    bad.placeholder_pos = {enc.cfg.seq_len};
    CHECK_THROWS_AS((void)enc.embed_and_fuse(tokens, {v_g}, bad), ContractError);
    CHECK_THROWS_AS((void)enc.embed_and_fuse({1, 2, 3}, {}, none), DimError);
}

TEST_CASE("encode produces the condition matrix shape deterministically") {
    ParamMapF pm;
    Rng rng(4);
    TextEncoder<float> enc(pm, text_cfg(), rng);
    const Vocab vocab = Vocab::standard();
    const auto tokens = tokenize(vocab, "a red circle on a dark background", enc.cfg.seq_len);
    TensorF c1 = enc.encode(enc.embed_and_fuse(tokens, {}, {}));
    TensorF c2 = enc.encode(enc.embed_and_fuse(tokens, {}, {}));
    REQUIRE(c1.shape() == std::vector<int>{enc.cfg.seq_len, enc.cfg.d_cond});
    CHECK(c1.values() == c2.values());
}

TEST_CASE("gradients reach both the embedding table and the fusion path") {
    ParamMapF pm;
    Rng rng(5);
    TextEncoder<float> enc(pm, text_cfg(), rng);
    const Vocab vocab = Vocab::standard();
    const auto tokens =
        tokenize(vocab, "a red circle , the circle is [PH_0]", enc.cfg.seq_len);
    TokenRoles roles;
    roles.placeholder_pos = {8};
    roles.label_pos = {3};
    TensorF v_g = init_normal<float>({1, enc.cfg.d_img}, 1.0, rng);
    v_g.set_requires_grad(true);

    Tape<float> tape;
    TapeScope<float> scope(tape);
    TensorF c = enc.encode(enc.embed_and_fuse(tokens, {v_g}, roles));
    TensorF loss = ops::mse(c, TensorF::zeros(c.shape()));
    tape.backward(loss);

    auto norm = [](TensorF t) {
        double s = 0;
        if (!t.has_grad()) return 0.0;
        const auto& g = t.grad_values();
        for (int64_t i = 0; i < t.numel(); ++i) s += double(g[i]) * g[i];
        return s;
    };
    CHECK(norm(enc.embed) > 0.0);          // word embeddings learn
    CHECK(norm(enc.proj.w) > 0.0);         // the projection learns
    CHECK(norm(v_g) > 0.0);                // and gradient flows back into v_g
}

// ---------- image encoder ----------

TEST_CASE("patchify layout and scaling") {
    Image img(8, 8, 3);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<uint8_t>(y * 8 + x);
    TensorF p = image_to_patches<float>(img, 4);
    REQUIRE(p.shape() == std::vector<int>{4, 48});
    // first element of patch 0 is pixel (0,0): value 0 -> -1
    CHECK(p.data()[0] == doctest::Approx(-1.0));
    // patch 1 starts at pixel (0,4): value 4 -> 4/127.5-1
    CHECK(p.data()[48] == doctest::Approx(4.0 / 127.5 - 1.0));
    CHECK_THROWS_AS((void)image_to_patches<float>(Image(8, 8, 1), 4), DimError);
    CHECK_THROWS_AS((void)image_to_patches<float>(img, 3), DimError);
}

TEST_CASE("image encoder outputs CLS and patch tokens") {
    ParamMapF pm;
    Rng rng(6);
    ImageEncoder<float> enc(pm, {}, rng);
    SceneSpec spec;
    const SceneRecord rec = generate_scene(11, spec);
    const SubjectCrop crop = crop_subject(rec, 0, enc.cfg.resolution);
    const auto out = enc.encode(crop.image);
    REQUIRE(out.v_g.shape() == std::vector<int>{1, enc.cfg.d_img});
    REQUIRE(out.v.shape() == std::vector<int>{enc.cfg.num_patches(), enc.cfg.d_img});
    CHECK(enc.cfg.num_patches() == 16);
    CHECK_THROWS_AS((void)enc.encode(Image(8, 8, 3)), DimError);
}

TEST_CASE("patch shuffling changes the patch tokens") {
    ParamMapF pm;
    Rng rng(7);
    ImageEncoder<float> enc(pm, {}, rng);
    Image img(16, 16, 3);
    Rng px(8);
    for (auto& p : img.px) p = static_cast<uint8_t>(px.randint(256));
    // swap two 4x4 patches
    Image shuffled = img;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x)
            for (int c = 0; c < 3; ++c)
                std::swap(shuffled.at(y, x, c), shuffled.at(y + 8, x + 4, c));
    const auto a = enc.encode(img);
    const auto b = enc.encode(shuffled);
    CHECK(a.v.values() != b.v.values());  // no accidental pooling over patches
    CHECK(a.v_g.values() != b.v_g.values());
}

TEST_CASE("different-colored subjects produce different embeddings") {
    ParamMapF pm;
    Rng rng(9);
    ImageEncoder<float> enc(pm, {}, rng);
    SceneSpec spec;
    spec.shapes = {0};
    spec.colors = {0};
    const SceneRecord red = generate_scene(21, spec);
    spec.colors = {2};
    const SceneRecord blue = generate_scene(21, spec);
    const auto a = enc.encode(crop_subject(red, 0, 16).image);
    const auto b = enc.encode(crop_subject(blue, 0, 16).image);
    CHECK(a.v_g.values() != b.v_g.values());
}
