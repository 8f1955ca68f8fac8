#include "model/model.hpp"

#include "attn/attn_control.hpp"
#include "core/error.hpp"

namespace sfd {

template <class T>
SubjectModel<T>::SubjectModel(const ModelConfig& cfg, const Vocab& vocab)
    : cfg_(cfg), vocab_(vocab) {
    cfg_.text.vocab_size = vocab_.size();
    if (cfg_.text.d_img != cfg_.image.d_img || cfg_.unet.d_img != cfg_.image.d_img) {
        throw ConfigError("subject embedding width disagrees between encoders and denoiser");
    }
    if (cfg_.unet.d_cond != cfg_.text.d_cond) {
        throw ConfigError("condition width disagrees between text encoder and denoiser");
    }
    Rng rng(Rng::mix(cfg_.init_seed, 0x5fd20de1u));
    text_ = TextEncoder<T>(params_, cfg_.text, rng);
    image_ = ImageEncoder<T>(params_, cfg_.image, rng);
    unet_ = UNet<T>(params_, cfg_.unet, rng);
}

template <class T>
ConditionBundle<T> SubjectModel<T>::encode_prompt(const BoundPrompt& prompt,
                                                  const std::vector<Image>& crops) const {
    ConditionBundle<T> b;
    b.tokens = prompt.token_ids;
    b.roles = {prompt.placeholder_pos, prompt.label_pos};
    std::vector<Tensor<T>> v_g;
    for (const auto& crop : crops) {
        auto out = image_.encode(crop);
        v_g.push_back(out.v_g);
        b.adapter.v.push_back(out.v);
    }
    b.cond = text_.encode(text_.embed_and_fuse(b.tokens, v_g, b.roles));
    return b;
}

template <class T>
ConditionBundle<T> SubjectModel<T>::condition(const SceneRecord& rec) const {
    auto prompt = build_prompt(rec, vocab_, cfg_.text.seq_len);
    std::vector<Image> crops;
    for (std::size_t k = 0; k < rec.entities.size(); ++k) {
        crops.push_back(crop_subject(rec, static_cast<int>(k), cfg_.image.resolution).image);
    }
    auto b = encode_prompt(prompt, crops);
    std::vector<std::vector<std::uint8_t>> masks;
    for (const auto& e : rec.entities) {
        b.adapter.l.push_back(e.box);
        masks.push_back(e.mask);
    }
    b.entity_masks = masks;
    b.src_h = rec.image.h;
    b.src_w = rec.image.w;
    auto overlay = overlay_masks(masks);
    b.l_m = binary_location_mask<T>(overlay, rec.image.h, rec.image.w, cfg_.unet.base);
    return b;
}

template <class T>
ConditionBundle<T> SubjectModel<T>::text_condition(const std::string& caption) const {
    auto prompt = build_text_prompt(caption, vocab_, cfg_.text.seq_len);
    auto b = encode_prompt(prompt, {});
    b.l_m = Tensor<T>::zeros({1, cfg_.unet.base, cfg_.unet.base});
    return b;
}

template <class T>
ConditionBundle<T> SubjectModel<T>::null_condition() const {
    return text_condition("");
}

template <class T>
ConditionBundle<T> SubjectModel<T>::unconditional_like(const ConditionBundle<T>& b) const {
    auto u = null_condition();
    u.l_m = b.l_m;
    return u;
}

template <class T>
UNetOutput<T> SubjectModel<T>::denoise(const Tensor<T>& z_t, int t,
                                       const ConditionBundle<T>& b) const {
    return unet_.forward(z_t, b.l_m, t, b.cond, b.adapter);
}

template class SubjectModel<float>;
template class SubjectModel<double>;

}  // namespace sfd
