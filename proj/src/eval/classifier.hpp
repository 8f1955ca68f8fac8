#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "data/scene.hpp"
#include "nn/layers.hpp"

namespace sfd {

struct ClassifierConfig {
    int steps = 600;
    int batch = 16;
    double lr = 2e-3;
    std::uint64_t seed = 5;
    double holdout_fraction = 0.1;
    double min_accuracy = 0.98;  // held-out bar on both heads
    int min_records = 2000;
};

// Small convnet over 16x16 subject crops with separate shape and color heads.
// Judges generated images, so it must itself be beyond doubt: training stops
// only when held-out accuracy clears min_accuracy, otherwise it throws a
// TrainError carrying the confusion matrices.
template <class T>
class AttributeClassifier {
   public:
    explicit AttributeClassifier(std::uint64_t init_seed = 5);

    struct Logits {
        Tensor<T> shape;  // 1 x 4
        Tensor<T> color;  // 1 x 6
    };
    Logits forward(const Image& crop) const;  // 16x16 RGB; DimError otherwise

    // (shape index, color index) by argmax
    std::pair<int, int> predict(const Image& crop) const;

    void train(const std::vector<SceneRecord>& records, const ClassifierConfig& cfg);

    double heldout_shape_accuracy() const { return acc_shape_; }
    double heldout_color_accuracy() const { return acc_color_; }
    ParamMap<T>& params() { return params_; }
    const ParamMap<T>& params() const { return params_; }

    static constexpr int kResolution = 16;

   private:
    ParamMap<T> params_;
    Conv<T> conv1_, conv2_;
    Linear<T> fc_, head_shape_, head_color_;
    double acc_shape_ = 0, acc_color_ = 0;
};

// plain box crop, center-sampled nearest neighbour, background kept — the
// form both classifier training and generated-image judging use
Image crop_box(const Image& img, const std::array<double, 4>& box, int resolution);

}  // namespace sfd
