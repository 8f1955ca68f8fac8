#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "diffusion/sampler.hpp"
#include "diffusion/schedule.hpp"
#include "eval/classifier.hpp"
#include "model/model.hpp"

namespace sfd {

// Caption structure under the fixed grammar:
//   "a [color] SHAPE [REL a [color] SHAPE] on a LEVEL background"
// where REL is "left of" | "right of" | "above" | "below". Prompt texts may
// carry trailing ", the SHAPE is [PH_k]" clauses, which are ignored.
struct ParsedCaption {
    struct Ent {
        int shape = -1;
        int color = -1;  // -1 when the caption leaves the color unstated
    };
    std::vector<Ent> entities;
    int relation = -1;  // 0 left-of, 1 right-of, 2 above, 3 below; -1 none
    int background = -1;
};

// throws ContractError when the text does not fit the grammar
ParsedCaption parse_caption(const std::string& text);

// A connected subject-colored region of a generated image. Backgrounds are
// exact grays and every palette color is saturated, so chroma separates them.
struct SubjectSegment {
    std::vector<std::uint8_t> mask;  // H*W, 0/1
    std::array<double, 4> box{};     // normalized tight bounding box
    double cx = 0, cy = 0;           // normalized box center
    int area = 0;
};

// Largest connected components of saturated pixels, same-palette-color
// connectivity, speckle below min_area dropped, at most max_subjects kept
// (area-descending).
std::vector<SubjectSegment> segment_subjects(const Image& img, int max_subjects,
                                             int min_area = 6);

// Majority vote of the nearest background level over pixels outside every
// segment; throws ContractError when no pixel is left to vote.
int estimate_background(const Image& img, const std::vector<SubjectSegment>& segments);

// per-sample judgement of a generated image against its reference record
struct SampleOutcome {
    int subjects = 0;
    std::vector<int> matched_by_slot;  // per reference entity, 0/1
    int matched_subjects = 0;          // segment prediction equals own reference
    bool aligned = false;              // image matches the caption's text
    bool confused = false;             // a segment shows the OTHER subject instead
};

template <class T>
SampleOutcome judge_sample(const AttributeClassifier<T>& clf, const Image& generated,
                           const SceneRecord& ref);

// Mean attention-control loss of full-condition forwards at random timesteps.
// When per_layer is given it receives the mean per recorded map (same order as
// the record; summing it reproduces the return value).
template <class T>
double attention_deviation(const SubjectModel<T>& model, const std::vector<SceneRecord>& recs,
                           const NoiseSchedule& ns, int n, std::uint64_t seed,
                           std::vector<double>* per_layer = nullptr);

// the same quantity with every map replaced by an exactly uniform row — the
// closed-form level an untrained net should sit near
double uniform_attention_reference(const std::vector<SceneRecord>& recs, int seq_len,
                                   const std::vector<int>& layer_sides, int n,
                                   std::uint64_t seed);

struct EvalReport {
    double subject_fidelity = 0;
    double text_alignment = 0;
    double confusion = 0;
    double attention_deviation = 0;
    std::vector<double> fidelity_by_slot;     // per reference-entity position
    std::vector<int> attn_sides;              // map grid side per recorded layer
    std::vector<double> attn_by_side;         // deviation share per layer
    int samples = 0;
    int subjects = 0;
    int two_subject_samples = 0;
    std::uint64_t config_hash = 0;  // filled by the caller that owns the config
};

// Samples one generation per held-out record slot (round-robin) and scores
// them; fully deterministic in `seed`.
template <class T>
EvalReport evaluate_model(const SubjectModel<T>& model, const AttributeClassifier<T>& clf,
                          const std::vector<SceneRecord>& heldout, const NoiseSchedule& ns,
                          const SampleConfig& sample_cfg, int n_samples, int attn_forwards,
                          std::uint64_t seed);

std::string report_to_json(const EvalReport& r);

}  // namespace sfd
