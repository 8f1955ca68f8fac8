#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "data/scene.hpp"
#include "encoders/image_encoder.hpp"
#include "encoders/text_encoder.hpp"
#include "encoders/vocab.hpp"
#include "model/unet.hpp"

namespace sfd {

struct ModelConfig {
    TextEncoderConfig text;    // vocab_size is filled from the vocabulary
    ImageEncoderConfig image;
    UNetConfig unet;
    std::uint64_t init_seed = 1;
};

// Everything the denoiser consumes besides the noisy latent and the timestep.
// `cond` and the adapter tokens sit on the active tape when built inside a
// TapeScope, so encoder gradients flow through training losses.
template <class T>
struct ConditionBundle {
    Tensor<T> cond;           // seq_len x d_cond
    AdapterInput<T> adapter;  // per-subject patch tokens and boxes
    Tensor<T> l_m;            // 1 x base x base location channel, plain data
    std::vector<int> tokens;
    TokenRoles roles;
    std::vector<std::vector<std::uint8_t>> entity_masks;  // binary, pixel grid
    int src_h = 0, src_w = 0;
};

// The full generator: text encoder with subject fusion, image encoder for
// crops, and the grounded UNet, sharing one parameter registry.
template <class T>
class SubjectModel {
   public:
    SubjectModel(const ModelConfig& cfg, const Vocab& vocab);

    const ModelConfig& config() const { return cfg_; }
    const Vocab& vocab() const { return vocab_; }
    ParamMap<T>& params() { return params_; }
    const ParamMap<T>& params() const { return params_; }
    TextEncoder<T>& text() { return text_; }
    ImageEncoder<T>& image() { return image_; }
    UNet<T>& unet() { return unet_; }

    // subject-grounded conditioning assembled from a dataset record
    ConditionBundle<T> condition(const SceneRecord& rec) const;

    // caption-only conditioning: no subjects, no location signal
    ConditionBundle<T> text_condition(const std::string& caption) const;

    // empty-prompt conditioning with every subject input removed
    ConditionBundle<T> null_condition() const;

    // same null prompt and empty adapter, but keeps b's location channel —
    // the form condition dropout and guidance's unconditional branch use
    ConditionBundle<T> unconditional_like(const ConditionBundle<T>& b) const;

    UNetOutput<T> denoise(const Tensor<T>& z_t, int t, const ConditionBundle<T>& b) const;

   private:
    ConditionBundle<T> encode_prompt(const BoundPrompt& prompt,
                                     const std::vector<Image>& crops) const;

    ModelConfig cfg_;
    Vocab vocab_;
    ParamMap<T> params_;
    TextEncoder<T> text_;
    ImageEncoder<T> image_;
    UNet<T> unet_;
};

}  // namespace sfd
