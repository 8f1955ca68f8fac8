#include "eval/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "core/error.hpp"
#include "core/tape.hpp"
#include "train/adam.hpp"

namespace sfd {

Image crop_box(const Image& img, const std::array<double, 4>& box, int resolution) {
    if (resolution < 1) throw ContractError("crop resolution must be positive");
    for (double c : box) {
        if (!(c >= 0.0 && c <= 1.0)) throw ContractError("crop box must be normalized");
    }
    const int x0 = static_cast<int>(std::llround(box[0] * img.w));
    const int y0 = static_cast<int>(std::llround(box[1] * img.h));
    const int x1 = static_cast<int>(std::llround(box[2] * img.w));
    const int y1 = static_cast<int>(std::llround(box[3] * img.h));
    if (x1 <= x0 || y1 <= y0) throw ContractError("crop box is empty");
    const int bw = x1 - x0, bh = y1 - y0;
    Image out(resolution, resolution, img.ch);
    for (int y = 0; y < resolution; ++y) {
        const int sy = y0 + (2 * y + 1) * bh / (2 * resolution);
        for (int x = 0; x < resolution; ++x) {
            const int sx = x0 + (2 * x + 1) * bw / (2 * resolution);
            for (int c = 0; c < img.ch; ++c) out.at(y, x, c) = img.at(sy, sx, c);
        }
    }
    return out;
}

namespace {

template <class T>
Tensor<T> crop_to_tensor(const Image& crop) {
    if (crop.ch != 3 || crop.h != AttributeClassifier<T>::kResolution ||
        crop.w != AttributeClassifier<T>::kResolution) {
        throw DimError(cat("classifier expects 16x16 RGB, got ", crop.h, "x", crop.w, "x", crop.ch));
    }
    auto x = Tensor<T>::zeros({3, crop.h, crop.w});
    auto& v = x.values();
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < crop.h; ++y) {
            for (int xx = 0; xx < crop.w; ++xx) {
                v[(static_cast<std::size_t>(c) * crop.h + y) * crop.w + xx] =
                    T(crop.at(y, xx, c) / 127.5 - 1.0);
            }
        }
    }
    return x;
}

std::string format_confusion(const std::vector<std::vector<int>>& m, const char* what) {
    std::ostringstream os;
    os << what << " confusion (rows = truth):\n";
    for (const auto& row : m) {
        for (int v : row) os << v << ' ';
        os << '\n';
    }
    return os.str();
}

}  // namespace

template <class T>
AttributeClassifier<T>::AttributeClassifier(std::uint64_t init_seed) {
    Rng rng(Rng::mix(init_seed, 0xc1a55u));
    conv1_ = Conv<T>(params_, "clf.conv1", 3, 16, 3, 1, 1, rng);
    conv2_ = Conv<T>(params_, "clf.conv2", 16, 32, 3, 1, 1, rng);
    fc_ = Linear<T>(params_, "clf.fc", 32 * 4 * 4, 64, rng);
    head_shape_ = Linear<T>(params_, "clf.shape", 64, kNumShapes, rng);
    head_color_ = Linear<T>(params_, "clf.color", 64, kNumColors, rng);
}

template <class T>
typename AttributeClassifier<T>::Logits AttributeClassifier<T>::forward(const Image& crop) const {
    auto x = crop_to_tensor<T>(crop);
    x = ops::avg_pool2(ops::relu(conv1_.forward(x)));  // 16 x 8 x 8
    x = ops::avg_pool2(ops::relu(conv2_.forward(x)));  // 32 x 4 x 4
    auto flat = ops::reshape(x, {1, 32 * 4 * 4});
    auto h = ops::relu(fc_.forward(flat));
    return {head_shape_.forward(h), head_color_.forward(h)};
}

template <class T>
std::pair<int, int> AttributeClassifier<T>::predict(const Image& crop) const {
    NoTapeScope<T> guard;
    auto lg = forward(crop);
    auto argmax = [](const Tensor<T>& t) {
        int best = 0;
        for (int i = 1; i < t.dim(1); ++i)
            if (t.data()[i] > t.data()[best]) best = i;
        return best;
    };
    return {argmax(lg.shape), argmax(lg.color)};
}

template <class T>
void AttributeClassifier<T>::train(const std::vector<SceneRecord>& records,
                                   const ClassifierConfig& cfg) {
    if (static_cast<int>(records.size()) < cfg.min_records) {
        throw ContractError(cat("classifier training needs >= ", cfg.min_records, " records, got ",
                                records.size()));
    }
    struct Example {
        Image crop;
        int shape, color;
    };
    std::vector<Example> all;
    for (const auto& rec : records) {
        for (const auto& e : rec.entities) {
            all.push_back({crop_box(rec.image, e.box, kResolution), static_cast<int>(shape_from_word(e.label)),
                           e.color_index});
        }
    }
    Rng rng(Rng::mix(cfg.seed, 0x77a17u));
    for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.randint(i)]);
    const std::size_t holdout = std::max<std::size_t>(
        1, static_cast<std::size_t>(all.size() * cfg.holdout_fraction));
    const std::size_t train_n = all.size() - holdout;

    Adam<T> opt(params_, {.lr = cfg.lr, .clip = 0.0});
    auto heldout_pass = [&](std::vector<std::vector<int>>& cs, std::vector<std::vector<int>>& cc) {
        cs.assign(kNumShapes, std::vector<int>(kNumShapes, 0));
        cc.assign(kNumColors, std::vector<int>(kNumColors, 0));
        int hit_s = 0, hit_c = 0;
        for (std::size_t i = train_n; i < all.size(); ++i) {
            auto [ps, pc] = predict(all[i].crop);
            ++cs[all[i].shape][ps];
            ++cc[all[i].color][pc];
            hit_s += ps == all[i].shape;
            hit_c += pc == all[i].color;
        }
        acc_shape_ = double(hit_s) / holdout;
        acc_color_ = double(hit_c) / holdout;
    };

    std::vector<std::vector<int>> cs, cc;
    for (int step = 0; step < cfg.steps; ++step) {
        params_.zero_grads();
        Tape<T> tape;
        TapeScope scope(tape);
        std::vector<Tensor<T>> shape_rows, color_rows;
        std::vector<int> shape_tgt, color_tgt;
        for (int b = 0; b < cfg.batch; ++b) {
            const auto& ex = all[static_cast<std::size_t>(rng.randint(train_n))];
            auto lg = forward(ex.crop);
            shape_rows.push_back(lg.shape);
            color_rows.push_back(lg.color);
            shape_tgt.push_back(ex.shape);
            color_tgt.push_back(ex.color);
        }
        auto loss = ops::add(ops::cross_entropy(ops::concat_rows(shape_rows), shape_tgt),
                             ops::cross_entropy(ops::concat_rows(color_rows), color_tgt));
        tape.backward(loss);
        opt.step();
        if (step >= 150 && step % 50 == 0) {
            heldout_pass(cs, cc);
            if (acc_shape_ >= 0.995 && acc_color_ >= 0.995) return;
        }
    }
    heldout_pass(cs, cc);
    if (acc_shape_ < cfg.min_accuracy || acc_color_ < cfg.min_accuracy) {
        throw TrainError(cat("attribute classifier stalled: shape acc ", acc_shape_, ", color acc ",
                             acc_color_, "\n", format_confusion(cs, "shape"),
                             format_confusion(cc, "color")));
    }
}

template class AttributeClassifier<float>;
template class AttributeClassifier<double>;

}  // namespace sfd
