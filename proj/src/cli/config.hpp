#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "diffusion/sampler.hpp"
#include "diffusion/train.hpp"
#include "eval/classifier.hpp"
#include "model/model.hpp"
#include "model/policy.hpp"

namespace sfd {

// Everything a run needs, read from one JSON file. Unknown keys anywhere are
// errors naming the offending dotted path, so typos can never silently fall
// back to defaults.
struct RunConfig {
    std::string out_dir = "runs/default";
    std::string data_dir;  // empty -> <out_dir>/dataset

    struct Data {
        int records = 2048;
        int entities = 1;
        int height = 32, width = 32;
        double caption_color_prob = 0.5;
        double two_entity_max_iou = 0.15;
        std::uint64_t seed = 1000;
        int holdout = 128;  // trailing records reserved for evaluation
    } data;

    ModelConfig model;

    struct Schedule {
        int timesteps = 1000;
        double beta_start = 1e-4;
        double beta_end = 2e-2;
    } schedule;

    TrainConfig train;
    std::vector<std::string> trainable = TrainabilityPolicy::defaults().groups;
    int log_every = 100;

    SampleConfig sample;
    int sample_count = 4;  // images per sample/interpolate invocation
    double alpha = 0.0;    // interpolation switch point

    struct Eval {
        int samples = 100;
        int attn_forwards = 32;
        std::uint64_t seed = 999;
        ClassifierConfig classifier;
    } eval;

    // stable FNV-1a digest of the canonical serialization; identical configs
    // hash identically regardless of source formatting or key order, and
    // output/dataset locations don't contribute (same experiment, same hash)
    std::uint64_t hash() const;
    std::string to_canonical_json() const;

    NoiseSchedule noise_schedule() const;
    TrainabilityPolicy policy() const;
    std::string dataset_dir() const { return data_dir.empty() ? out_dir + "/dataset" : data_dir; }
};

// Parse and fully validate a config file; every violation is a ConfigError
// naming the key. Overrides are dotted `key=value` pairs applied before
// validation, e.g. "train.lambda_attn=0.05".
RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides = {});

// same, from JSON text (origin only labels error messages)
RunConfig parse_config_text(const std::string& text, const std::string& origin,
                            const std::vector<std::string>& overrides = {});

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace sfd
