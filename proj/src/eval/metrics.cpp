#include "eval/metrics.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "attn/attn_control.hpp"
#include "core/error.hpp"
#include "core/tape.hpp"
#include "diffusion/latent.hpp"
#include "diffusion/train.hpp"

namespace sfd {
namespace {

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

int color_index_of(const std::string& w) {
    for (int i = 0; i < kNumColors; ++i)
        if (w == palette_color(i).word) return i;
    return -1;
}

int shape_index_of(const std::string& w) {
    for (int i = 0; i < kNumShapes; ++i)
        if (w == shape_word(static_cast<Shape>(i))) return i;
    return -1;
}

int background_index_of(const std::string& w) {
    for (int i = 0; i < kNumBackgrounds; ++i)
        if (w == background(i).word) return i;
    return -1;
}

// saturated pixels belong to subjects; backgrounds are exact grays
constexpr int kChromaThreshold = 60;

int nearest_palette(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    int best = 0;
    long best_d = LONG_MAX;
    for (int i = 0; i < kNumColors; ++i) {
        const auto& p = palette_color(i);
        const long dr = long(r) - p.r, dg = long(g) - p.g, db = long(b) - p.b;
        const long d = dr * dr + dg * dg + db * db;
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

// reference entity -> segment index (or -1), minimizing box-center distance
std::vector<int> assign_segments(const std::vector<SubjectSegment>& segs,
                                 const std::vector<EntityAnnotation>& refs) {
    auto center_d2 = [](const SubjectSegment& s, const EntityAnnotation& e) {
        const double ex = 0.5 * (e.box[0] + e.box[2]), ey = 0.5 * (e.box[1] + e.box[3]);
        return (s.cx - ex) * (s.cx - ex) + (s.cy - ey) * (s.cy - ey);
    };
    std::vector<int> out(refs.size(), -1);
    if (segs.empty() || refs.empty()) return out;
    if (refs.size() == 1) {
        out[0] = 0;  // largest segment
    } else {
        if (segs.size() == 1) {
            out[center_d2(segs[0], refs[0]) <= center_d2(segs[0], refs[1]) ? 0 : 1] = 0;
        } else {
            const double straight = center_d2(segs[0], refs[0]) + center_d2(segs[1], refs[1]);
            const double crossed = center_d2(segs[0], refs[1]) + center_d2(segs[1], refs[0]);
            if (straight <= crossed) {
                out[0] = 0;
                out[1] = 1;
            } else {
                out[0] = 1;
                out[1] = 0;
            }
        }
    }
    return out;
}

}  // namespace

ParsedCaption parse_caption(const std::string& text) {
    auto words = split_words(text);
    // prompt texts append binding clauses after a comma; the core caption ends there
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (words[i] == ",") {
            words.resize(i);
            break;
        }
    }
    std::size_t pos = 0;
    auto fail = [&](const std::string& why) -> ContractError {
        return ContractError(cat("caption does not parse: ", why, " in '", text, "'"));
    };
    auto next = [&]() -> const std::string& {
        if (pos >= words.size()) throw fail("unexpected end");
        return words[pos++];
    };
    auto expect = [&](const char* w) {
        if (next() != w) throw fail(cat("expected '", w, "'"));
    };
    auto parse_entity = [&]() {
        expect("a");
        ParsedCaption::Ent e;
        std::string w = next();
        e.color = color_index_of(w);
        if (e.color >= 0) w = next();
        e.shape = shape_index_of(w);
        if (e.shape < 0) throw fail(cat("'", w, "' is not a shape"));
        return e;
    };

    ParsedCaption out;
    out.entities.push_back(parse_entity());
    std::string w = next();
    if (w == "left" || w == "right") {
        expect("of");
        out.relation = w == "left" ? 0 : 1;
    } else if (w == "above" || w == "below") {
        out.relation = w == "above" ? 2 : 3;
    }
    if (out.relation >= 0) {
        out.entities.push_back(parse_entity());
        w = next();
    }
    if (w != "on") throw fail("expected 'on'");
    expect("a");
    out.background = background_index_of(next());
    if (out.background < 0) throw fail("unknown background level");
    expect("background");
    if (pos != words.size()) throw fail("trailing words");
    return out;
}

std::vector<SubjectSegment> segment_subjects(const Image& img, int max_subjects, int min_area) {
    if (img.ch != 3) throw DimError("segmentation expects an RGB image");
    if (max_subjects < 1) throw ContractError("max_subjects must be positive");
    const int h = img.h, w = img.w;
    // palette label per saturated pixel, -1 elsewhere; components connect
    // equal labels only so overlapping distinct-color subjects stay separate
    std::vector<int> label(static_cast<std::size_t>(h) * w, -1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::uint8_t r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
            const int hi = std::max({r, g, b}), lo = std::min({r, g, b});
            if (hi - lo > kChromaThreshold)
                label[static_cast<std::size_t>(y) * w + x] = nearest_palette(r, g, b);
        }
    }
    std::vector<int> comp(label.size(), -1);
    std::vector<SubjectSegment> found;
    std::vector<int> stack;
    for (int start = 0; start < static_cast<int>(label.size()); ++start) {
        if (label[start] < 0 || comp[start] >= 0) continue;
        const int id = static_cast<int>(found.size());
        SubjectSegment seg;
        seg.mask.assign(label.size(), 0);
        int min_x = w, min_y = h, max_x = -1, max_y = -1;
        stack.assign(1, start);
        comp[start] = id;
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            const int y = p / w, x = p % w;
            seg.mask[p] = 1;
            ++seg.area;
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
            const int ny[4] = {y - 1, y + 1, y, y};
            const int nx[4] = {x, x, x - 1, x + 1};
            for (int k = 0; k < 4; ++k) {
                if (ny[k] < 0 || ny[k] >= h || nx[k] < 0 || nx[k] >= w) continue;
                const int q = ny[k] * w + nx[k];
                if (comp[q] >= 0 || label[q] != label[start]) continue;
                comp[q] = id;
                stack.push_back(q);
            }
        }
        seg.box = {double(min_x) / w, double(min_y) / h, double(max_x + 1) / w,
                   double(max_y + 1) / h};
        seg.cx = 0.5 * (seg.box[0] + seg.box[2]);
        seg.cy = 0.5 * (seg.box[1] + seg.box[3]);
        found.push_back(std::move(seg));
    }
    std::stable_sort(found.begin(), found.end(),
                     [](const SubjectSegment& a, const SubjectSegment& b) {
                         return a.area > b.area;
                     });
    std::vector<SubjectSegment> out;
    for (auto& s : found) {
        if (s.area < min_area) break;  // sorted, so the rest are smaller
        out.push_back(std::move(s));
        if (static_cast<int>(out.size()) == max_subjects) break;
    }
    return out;
}

int estimate_background(const Image& img, const std::vector<SubjectSegment>& segments) {
    std::array<long, kNumBackgrounds> votes{};
    long voters = 0;
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * img.w + x;
            bool inside = false;
            for (const auto& s : segments) inside = inside || s.mask[p];
            if (inside) continue;
            int gray = 0;
            for (int c = 0; c < img.ch; ++c) gray += img.at(y, x, c);
            gray /= img.ch;
            int best = 0;
            for (int i = 1; i < kNumBackgrounds; ++i) {
                if (std::abs(gray - background(i).level) <
                    std::abs(gray - background(best).level))
                    best = i;
            }
            ++votes[best];
            ++voters;
        }
    }
    if (voters == 0) throw ContractError("segments cover the whole image");
    return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

template <class T>
SampleOutcome judge_sample(const AttributeClassifier<T>& clf, const Image& generated,
                           const SceneRecord& ref) {
    if (generated.h != ref.image.h || generated.w != ref.image.w) {
        throw DimError("generated image extent differs from the reference");
    }
    const int n = static_cast<int>(ref.entities.size());
    SampleOutcome out;
    out.subjects = n;
    out.matched_by_slot.assign(n, 0);

    auto segs = segment_subjects(generated, std::max(n, 1));
    auto assignment = assign_segments(segs, ref.entities);
    std::vector<std::pair<int, int>> pred(n, {-1, -1});
    for (int k = 0; k < n; ++k) {
        if (assignment[k] < 0) continue;
        pred[k] = clf.predict(crop_box(generated, segs[assignment[k]].box,
                                       AttributeClassifier<T>::kResolution));
        const std::pair<int, int> truth{static_cast<int>(shape_from_word(ref.entities[k].label)),
                                        ref.entities[k].color_index};
        out.matched_by_slot[k] = pred[k] == truth;
        out.matched_subjects += out.matched_by_slot[k];
    }
    if (n == 2) {
        for (int k = 0; k < 2; ++k) {
            const std::pair<int, int> other{
                static_cast<int>(shape_from_word(ref.entities[1 - k].label)),
                ref.entities[1 - k].color_index};
            if (assignment[k] >= 0 && pred[k] == other) out.confused = true;
        }
    }

    // alignment is caption-vs-image: background level, each captioned entity's
    // stated attributes, and the relation judged on segment geometry
    ParsedCaption cap = parse_caption(ref.caption);
    bool aligned = true;
    for (std::size_t k = 0; k < cap.entities.size(); ++k) {
        const int s = k < assignment.size() ? assignment[k] : -1;
        if (s < 0) {
            aligned = false;
            break;
        }
        if (pred[k].first != cap.entities[k].shape ||
            (cap.entities[k].color >= 0 && pred[k].second != cap.entities[k].color)) {
            aligned = false;
            break;
        }
    }
    if (aligned && cap.relation >= 0) {
        const auto& s0 = segs[assignment[0]];
        const auto& s1 = segs[assignment[1]];
        switch (cap.relation) {
            case 0: aligned = s0.cx < s1.cx; break;
            case 1: aligned = s0.cx > s1.cx; break;
            case 2: aligned = s0.cy < s1.cy; break;
            case 3: aligned = s0.cy > s1.cy; break;
        }
    }
    if (aligned) {
        bool any_outside = false;
        for (std::size_t p = 0; p < generated.px.size() / 3 && !any_outside; ++p) {
            bool inside = false;
            for (const auto& s : segs) inside = inside || s.mask[p];
            any_outside = !inside;
        }
        aligned = any_outside && estimate_background(generated, segs) == cap.background;
    }
    out.aligned = aligned;
    return out;
}

template <class T>
double attention_deviation(const SubjectModel<T>& model, const std::vector<SceneRecord>& recs,
                           const NoiseSchedule& ns, int n, std::uint64_t seed,
                           std::vector<double>* per_layer) {
    if (recs.empty() || n < 1) throw ContractError("attention deviation needs records and n >= 1");
    NoTapeScope<T> guard;
    Rng pick(Rng::mix(seed, 0xa11e1u));
    Rng noise(Rng::mix(seed, 0xa11e2u));
    if (per_layer) per_layer->clear();
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        const auto& rec = recs[static_cast<std::size_t>(pick.randint(recs.size()))];
        const int t = static_cast<int>(noise.randint(ns.T));
        auto bundle = model.condition(rec);
        Tensor<T> z0 = image_to_latent<T>(rec.image);
        auto eps = Tensor<T>::zeros(z0.shape());
        for (auto& v : eps.values()) v = T(noise.normal());
        auto out = model.denoise(q_sample(z0, t, eps, ns), t, bundle);
        const auto bindings = bindings_from_roles(bundle.roles);
        acc += attention_loss(out.attn, bindings, bundle.entity_masks, rec.image.h, rec.image.w,
                              bundle.tokens)
                   .item();
        if (per_layer) {
            if (per_layer->empty()) per_layer->assign(out.attn.size(), 0.0);
            for (std::size_t l = 0; l < out.attn.size(); ++l) {
                AttentionRecord<T> one{out.attn[l]};
                (*per_layer)[l] += attention_loss(one, bindings, bundle.entity_masks,
                                                  rec.image.h, rec.image.w, bundle.tokens)
                                       .item();
            }
        }
    }
    if (per_layer)
        for (auto& v : *per_layer) v /= n;
    return acc / n;
}

double uniform_attention_reference(const std::vector<SceneRecord>& recs, int seq_len,
                                   const std::vector<int>& layer_sides, int n,
                                   std::uint64_t seed) {
    if (recs.empty() || n < 1) throw ContractError("reference needs records and n >= 1");
    Rng pick(Rng::mix(seed, 0xa11e1u));  // same record stream as attention_deviation
    const double u = 1.0 / seq_len;
    double acc = 0;
    for (int i = 0; i < n; ++i) {
        const auto& rec = recs[static_cast<std::size_t>(pick.randint(recs.size()))];
        double per_binding_sum = 0;
        int bindings = 0;
        for (const auto& e : rec.entities) {
            double layers = 0;
            for (int side : layer_sides) {
                auto m = resize_mask<double>(e.mask, rec.image.h, rec.image.w, side, side);
                double cell = 0;
                for (int64_t j = 0; j < m.numel(); ++j) cell += std::abs(u - m.data()[j]);
                layers += cell / double(m.numel());
            }
            per_binding_sum += 2 * layers;  // label and placeholder bind the same mask
            bindings += 2;
        }
        acc += per_binding_sum / bindings;
    }
    return acc / n;
}

template <class T>
EvalReport evaluate_model(const SubjectModel<T>& model, const AttributeClassifier<T>& clf,
                          const std::vector<SceneRecord>& heldout, const NoiseSchedule& ns,
                          const SampleConfig& sample_cfg, int n_samples, int attn_forwards,
                          std::uint64_t seed) {
    if (heldout.empty() || n_samples < 1) throw ContractError("evaluation needs held-out records");
    NoTapeScope<T> guard;
    EvalReport rep;
    int matched = 0, aligned = 0, confused = 0;
    std::array<int, Vocab::kMaxEntities> slot_hits{}, slot_seen{};
    for (int i = 0; i < n_samples; ++i) {
        const auto& rec = heldout[static_cast<std::size_t>(i) % heldout.size()];
        SampleConfig sc = sample_cfg;
        sc.seed = Rng::mix(seed, 0x5a3d0000u + static_cast<std::uint64_t>(i));
        auto bundle = model.condition(rec);
        Image img = latent_to_image(ddim_sample(model, bundle, ns, sc));
        auto out = judge_sample(clf, img, rec);
        ++rep.samples;
        rep.subjects += out.subjects;
        matched += out.matched_subjects;
        aligned += out.aligned;
        for (int k = 0; k < out.subjects; ++k) {
            ++slot_seen[k];
            slot_hits[k] += out.matched_by_slot[k];
        }
        if (out.subjects == 2) {
            ++rep.two_subject_samples;
            confused += out.confused;
        }
    }
    rep.subject_fidelity = rep.subjects ? double(matched) / rep.subjects : 0.0;
    rep.text_alignment = double(aligned) / rep.samples;
    rep.confusion = rep.two_subject_samples ? double(confused) / rep.two_subject_samples : 0.0;
    for (int k = 0; k < Vocab::kMaxEntities; ++k)
        if (slot_seen[k]) rep.fidelity_by_slot.push_back(double(slot_hits[k]) / slot_seen[k]);
    std::vector<double> per_layer;
    rep.attention_deviation = attention_deviation(model, heldout, ns, attn_forwards,
                                                  Rng::mix(seed, 0xa77e9u), &per_layer);
    rep.attn_by_side = per_layer;
    {
        // grid sides come from one probe forward's recorded maps
        auto bundle = model.condition(heldout[0]);
        auto z0 = image_to_latent<T>(heldout[0].image);
        auto probe = model.denoise(q_sample(z0, 1, Tensor<T>::zeros(z0.shape()), ns), 1, bundle);
        for (const auto& l : probe.attn) rep.attn_sides.push_back(l.h);
    }
    return rep;
}

std::string report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["subject_fidelity"] = r.subject_fidelity;
    j["text_alignment"] = r.text_alignment;
    j["confusion"] = r.confusion;
    j["attention_deviation"] = r.attention_deviation;
    j["fidelity_by_slot"] = r.fidelity_by_slot;
    j["attn_sides"] = r.attn_sides;
    j["attn_by_side"] = r.attn_by_side;
    j["samples"] = r.samples;
    j["subjects"] = r.subjects;
    j["two_subject_samples"] = r.two_subject_samples;
    std::ostringstream hash;
    hash << "0x" << std::hex << r.config_hash;
    j["config_hash"] = hash.str();
    return j.dump(2);
}

template SampleOutcome judge_sample<float>(const AttributeClassifier<float>&, const Image&,
                                           const SceneRecord&);
template SampleOutcome judge_sample<double>(const AttributeClassifier<double>&, const Image&,
                                            const SceneRecord&);
template double attention_deviation<float>(const SubjectModel<float>&,
                                           const std::vector<SceneRecord>&, const NoiseSchedule&,
                                           int, std::uint64_t, std::vector<double>*);
template double attention_deviation<double>(const SubjectModel<double>&,
                                            const std::vector<SceneRecord>&, const NoiseSchedule&,
                                            int, std::uint64_t, std::vector<double>*);
template EvalReport evaluate_model<float>(const SubjectModel<float>&,
                                          const AttributeClassifier<float>&,
                                          const std::vector<SceneRecord>&, const NoiseSchedule&,
                                          const SampleConfig&, int, int, std::uint64_t);
template EvalReport evaluate_model<double>(const SubjectModel<double>&,
                                           const AttributeClassifier<double>&,
                                           const std::vector<SceneRecord>&, const NoiseSchedule&,
                                           const SampleConfig&, int, int, std::uint64_t);

}  // namespace sfd
