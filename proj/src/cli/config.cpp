#include "cli/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include <json.hpp>

#include "core/error.hpp"

namespace sfd {
namespace {

using nlohmann::json;

// One JSON object scope: typed getters mark keys consumed, finish() rejects
// anything left over by its dotted path.
class Section {
   public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j.is_object())
            throw ConfigError(cat("config section '", path_, "' must be a JSON object"));
    }

    std::string dotted(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& raw(const std::string& key) { return j_.at(key); }

    template <class T>
    void get_num(const std::string& key, T& out, const char* domain) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        const bool ok = std::is_integral_v<T> ? v.is_number_integer() : v.is_number();
        if (!ok) throw ConfigError(cat("config key '", dotted(key), "' must be ", domain));
        out = v.get<T>();
    }

    void get_bool(const std::string& key, bool& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_boolean())
            throw ConfigError(cat("config key '", dotted(key), "' must be true or false"));
        out = v.get<bool>();
    }

    void get_string(const std::string& key, std::string& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_string())
            throw ConfigError(cat("config key '", dotted(key), "' must be a string"));
        out = v.get<std::string>();
    }

    void get_string_list(const std::string& key, std::vector<std::string>& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_array())
            throw ConfigError(cat("config key '", dotted(key), "' must be a string array"));
        out.clear();
        for (const auto& e : v) {
            if (!e.is_string())
                throw ConfigError(cat("config key '", dotted(key), "' must be a string array"));
            out.push_back(e.get<std::string>());
        }
    }

    void get_widths(const std::string& key, std::array<int, 3>& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if (!v.is_array() || v.size() != 3 || !v[0].is_number_integer() ||
            !v[1].is_number_integer() || !v[2].is_number_integer())
            throw ConfigError(cat("config key '", dotted(key),
                                  "' must be an array of 3 integers"));
        for (int i = 0; i < 3; ++i) out[static_cast<std::size_t>(i)] = v[i].get<int>();
    }

    void finish() {
        for (const auto& item : j_.items()) {
            if (!seen_.count(item.key()))
                throw ConfigError(cat("unknown config key '", dotted(item.key()), "'"));
        }
    }

   private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

[[noreturn]] void bad(const std::string& key, const std::string& why) {
    throw ConfigError(cat("config key '", key, "' ", why));
}

void require(bool ok, const std::string& key, const std::string& why) {
    if (!ok) bad(key, why);
}

RunConfig extract(const json& j) {
    RunConfig c;
    Section root(j, "");
    root.get_string("out_dir", c.out_dir);
    root.get_string("data_dir", c.data_dir);

    if (root.has("data")) {
        Section s(root.raw("data"), "data");
        s.get_num("records", c.data.records, "an integer");
        s.get_num("entities", c.data.entities, "an integer");
        s.get_num("height", c.data.height, "an integer");
        s.get_num("width", c.data.width, "an integer");
        s.get_num("caption_color_prob", c.data.caption_color_prob, "a number");
        s.get_num("two_entity_max_iou", c.data.two_entity_max_iou, "a number");
        s.get_num("seed", c.data.seed, "an integer");
        s.get_num("holdout", c.data.holdout, "an integer");
        s.finish();
    }
    if (root.has("model")) {
        Section s(root.raw("model"), "model");
        s.get_num("seq_len", c.model.text.seq_len, "an integer");
        s.get_num("d_cond", c.model.text.d_cond, "an integer");
        s.get_num("d_img", c.model.text.d_img, "an integer");
        s.get_num("text_layers", c.model.text.layers, "an integer");
        s.get_num("text_heads", c.model.text.heads, "an integer");
        s.get_num("text_ff", c.model.text.d_ff, "an integer");
        s.get_num("image_layers", c.model.image.layers, "an integer");
        s.get_num("image_heads", c.model.image.heads, "an integer");
        s.get_num("image_ff", c.model.image.d_ff, "an integer");
        s.get_widths("widths", c.model.unet.widths);
        s.get_num("unet_heads", c.model.unet.heads, "an integer");
        s.get_num("gn_groups", c.model.unet.gn_groups, "an integer");
        s.get_num("fourier_k", c.model.unet.fourier_k, "an integer");
        s.get_num("time_dim", c.model.unet.time_dim, "an integer");
        s.get_num("beta_adapter", c.model.unet.beta_adapter, "a number");
        s.get_bool("zero_init_out", c.model.unet.zero_init_out);
        s.get_num("init_seed", c.model.init_seed, "an integer");
        s.finish();
    }
    if (root.has("schedule")) {
        Section s(root.raw("schedule"), "schedule");
        s.get_num("timesteps", c.schedule.timesteps, "an integer");
        s.get_num("beta_start", c.schedule.beta_start, "a number");
        s.get_num("beta_end", c.schedule.beta_end, "a number");
        s.finish();
    }
    if (root.has("train")) {
        Section s(root.raw("train"), "train");
        s.get_num("steps", c.train.steps, "an integer");
        s.get_num("batch", c.train.batch, "an integer");
        s.get_num("lr", c.train.lr, "a number");
        s.get_num("clip", c.train.clip, "a number");
        s.get_num("lambda_attn", c.train.lambda_attn, "a number");
        s.get_num("cond_drop_prob", c.train.cond_drop_prob, "a number");
        s.get_num("seed", c.train.seed, "an integer");
        s.get_string_list("trainable", c.trainable);
        s.get_num("log_every", c.log_every, "an integer");
        s.finish();
    }
    if (root.has("sample")) {
        Section s(root.raw("sample"), "sample");
        s.get_num("steps", c.sample.steps, "an integer");
        s.get_num("guidance", c.sample.guidance, "a number");
        s.get_num("eta", c.sample.eta, "a number");
        s.get_num("seed", c.sample.seed, "an integer");
        s.get_num("count", c.sample_count, "an integer");
        s.get_num("alpha", c.alpha, "a number");
        s.finish();
    }
    if (root.has("eval")) {
        Section s(root.raw("eval"), "eval");
        s.get_num("samples", c.eval.samples, "an integer");
        s.get_num("attn_forwards", c.eval.attn_forwards, "an integer");
        s.get_num("seed", c.eval.seed, "an integer");
        s.get_num("classifier_steps", c.eval.classifier.steps, "an integer");
        s.get_num("classifier_batch", c.eval.classifier.batch, "an integer");
        s.get_num("classifier_lr", c.eval.classifier.lr, "a number");
        s.get_num("classifier_seed", c.eval.classifier.seed, "an integer");
        s.get_num("classifier_min_accuracy", c.eval.classifier.min_accuracy, "a number");
        s.finish();
    }
    root.finish();
    return c;
}

void validate(const RunConfig& c) {
    require(!c.out_dir.empty(), "out_dir", "must not be empty");
    require(c.data.records >= 1, "data.records", "must be >= 1");
    require(c.data.entities == 1 || c.data.entities == 2, "data.entities", "must be 1 or 2");
    require(c.data.height >= 16 && c.data.height % 4 == 0, "data.height",
            "must be >= 16 and divisible by 4");
    require(c.data.width >= 16 && c.data.width % 4 == 0, "data.width",
            "must be >= 16 and divisible by 4");
    require(c.data.height == c.data.width, "data.height", "must equal data.width");
    require(c.data.caption_color_prob >= 0 && c.data.caption_color_prob <= 1,
            "data.caption_color_prob", "must lie in [0,1]");
    require(c.data.two_entity_max_iou >= 0 && c.data.two_entity_max_iou <= 1,
            "data.two_entity_max_iou", "must lie in [0,1]");
    require(c.data.holdout >= 0 && c.data.holdout < c.data.records, "data.holdout",
            "must lie in [0, data.records)");

    require(c.model.text.seq_len >= 4, "model.seq_len", "must be >= 4");
    require(c.model.text.d_cond >= 1, "model.d_cond", "must be >= 1");
    require(c.model.text.d_img >= 1, "model.d_img", "must be >= 1");
    require(c.model.text.heads >= 1 && c.model.text.d_cond % c.model.text.heads == 0,
            "model.text_heads", "must divide model.d_cond");
    require(c.model.image.heads >= 1 && c.model.text.d_img % c.model.image.heads == 0,
            "model.image_heads", "must divide model.d_img");
    for (int w : c.model.unet.widths)
        require(w >= 1 && w % c.model.unet.gn_groups == 0, "model.widths",
                "entries must be positive multiples of model.gn_groups");
    require(c.model.unet.heads >= 1, "model.unet_heads", "must be >= 1");
    require(c.model.unet.fourier_k >= 1, "model.fourier_k", "must be >= 1");
    require(c.model.unet.time_dim >= 2 && c.model.unet.time_dim % 2 == 0, "model.time_dim",
            "must be even and >= 2");
    require(c.model.unet.beta_adapter >= 0, "model.beta_adapter", "must be >= 0");

    require(c.schedule.timesteps >= 2, "schedule.timesteps", "must be >= 2");
    require(c.schedule.beta_start > 0 && c.schedule.beta_start < c.schedule.beta_end &&
                c.schedule.beta_end < 1,
            "schedule.beta_start", "must satisfy 0 < beta_start < beta_end < 1");

    require(c.train.steps >= 1, "train.steps", "must be >= 1");
    require(c.train.batch >= 1, "train.batch", "must be >= 1");
    require(c.train.lr > 0, "train.lr", "must be > 0");
    require(c.train.lambda_attn >= 0, "train.lambda_attn", "must be >= 0");
    require(c.train.cond_drop_prob >= 0 && c.train.cond_drop_prob < 1,
            "train.cond_drop_prob", "must lie in [0,1)");
    require(c.log_every >= 1, "train.log_every", "must be >= 1");
    require(!c.trainable.empty(), "train.trainable", "must name at least one group");
    for (const auto& g : c.trainable) {
        const auto& known = TrainabilityPolicy::known_groups();
        bool ok = false;
        for (const auto& k : known) ok = ok || k == g;
        require(ok, "train.trainable", cat("names unknown group '", g, "'"));
    }

    require(c.sample.steps >= 2, "sample.steps", "must be >= 2");
    require(c.sample_count >= 1, "sample.count", "must be >= 1");
    require(c.sample.eta >= 0, "sample.eta", "must be >= 0");
    require(c.alpha >= 0 && c.alpha <= 1, "sample.alpha", "must lie in [0,1]");

    require(c.eval.samples >= 1, "eval.samples", "must be >= 1");
    require(c.eval.attn_forwards >= 1, "eval.attn_forwards", "must be >= 1");
    require(c.eval.classifier.steps >= 1, "eval.classifier_steps", "must be >= 1");
    require(c.eval.classifier.batch >= 1, "eval.classifier_batch", "must be >= 1");
    require(c.eval.classifier.lr > 0, "eval.classifier_lr", "must be > 0");
    require(c.eval.classifier.min_accuracy > 0 && c.eval.classifier.min_accuracy <= 1,
            "eval.classifier_min_accuracy", "must lie in (0,1]");
}

json leaf_from_text(const std::string& text) {
    json parsed = json::parse(text, nullptr, false);
    if (!parsed.is_discarded() && !parsed.is_object()) return parsed;
    return json(text);  // unquoted strings stay strings
}

void apply_override(json& root, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError(cat("override '", spec, "' must look like key.path=value"));
    const std::string path = spec.substr(0, eq);
    json* node = &root;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string part = path.substr(start, dot - start);
        if (part.empty()) throw ConfigError(cat("override '", spec, "' has an empty path part"));
        if (dot == std::string::npos) {
            (*node)[part] = leaf_from_text(spec.substr(eq + 1));
            return;
        }
        node = &(*node)[part];
        if (!node->is_object()) *node = json::object();
        start = dot + 1;
    }
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

std::string RunConfig::to_canonical_json() const {
    // out_dir and data_dir deliberately do not contribute: the digest
    // identifies the experiment, not where its files live
    json j;
    j["data"]["records"] = data.records;
    j["data"]["entities"] = data.entities;
    j["data"]["height"] = data.height;
    j["data"]["width"] = data.width;
    j["data"]["caption_color_prob"] = data.caption_color_prob;
    j["data"]["two_entity_max_iou"] = data.two_entity_max_iou;
    j["data"]["seed"] = data.seed;
    j["data"]["holdout"] = data.holdout;
    j["model"]["seq_len"] = model.text.seq_len;
    j["model"]["d_cond"] = model.text.d_cond;
    j["model"]["d_img"] = model.text.d_img;
    j["model"]["text_layers"] = model.text.layers;
    j["model"]["text_heads"] = model.text.heads;
    j["model"]["text_ff"] = model.text.d_ff;
    j["model"]["image_layers"] = model.image.layers;
    j["model"]["image_heads"] = model.image.heads;
    j["model"]["image_ff"] = model.image.d_ff;
    j["model"]["widths"] = model.unet.widths;
    j["model"]["unet_heads"] = model.unet.heads;
    j["model"]["gn_groups"] = model.unet.gn_groups;
    j["model"]["fourier_k"] = model.unet.fourier_k;
    j["model"]["time_dim"] = model.unet.time_dim;
    j["model"]["beta_adapter"] = model.unet.beta_adapter;
    j["model"]["zero_init_out"] = model.unet.zero_init_out;
    j["model"]["init_seed"] = model.init_seed;
    j["schedule"]["timesteps"] = schedule.timesteps;
    j["schedule"]["beta_start"] = schedule.beta_start;
    j["schedule"]["beta_end"] = schedule.beta_end;
    j["train"]["steps"] = train.steps;
    j["train"]["batch"] = train.batch;
    j["train"]["lr"] = train.lr;
    j["train"]["clip"] = train.clip;
    j["train"]["lambda_attn"] = train.lambda_attn;
    j["train"]["cond_drop_prob"] = train.cond_drop_prob;
    j["train"]["seed"] = train.seed;
    j["train"]["trainable"] = trainable;
    j["train"]["log_every"] = log_every;
    j["sample"]["steps"] = sample.steps;
    j["sample"]["guidance"] = sample.guidance;
    j["sample"]["eta"] = sample.eta;
    j["sample"]["seed"] = sample.seed;
    j["sample"]["count"] = sample_count;
    j["sample"]["alpha"] = alpha;
    j["eval"]["samples"] = eval.samples;
    j["eval"]["attn_forwards"] = eval.attn_forwards;
    j["eval"]["seed"] = eval.seed;
    j["eval"]["classifier_steps"] = eval.classifier.steps;
    j["eval"]["classifier_batch"] = eval.classifier.batch;
    j["eval"]["classifier_lr"] = eval.classifier.lr;
    j["eval"]["classifier_seed"] = eval.classifier.seed;
    j["eval"]["classifier_min_accuracy"] = eval.classifier.min_accuracy;
    return j.dump(2);
}

std::uint64_t RunConfig::hash() const { return fnv1a64(to_canonical_json()); }

NoiseSchedule RunConfig::noise_schedule() const {
    return NoiseSchedule::linear(schedule.timesteps, schedule.beta_start, schedule.beta_end);
}

TrainabilityPolicy RunConfig::policy() const {
    TrainabilityPolicy p;
    p.groups = trainable;
    return p;
}

RunConfig parse_config_text(const std::string& text, const std::string& origin,
                            const std::vector<std::string>& overrides) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError(cat(origin, ": not valid JSON"));
    if (!j.is_object()) throw ParseError(cat(origin, ": config root must be a JSON object"));
    for (const auto& o : overrides) apply_override(j, o);
    RunConfig c = extract(j);
    validate(c);
    return c;
}

RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(cat("cannot open config file: ", path));
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), path, overrides);
}

}  // namespace sfd
