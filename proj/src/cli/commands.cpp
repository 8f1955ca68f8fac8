#include "cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "attn/attn_control.hpp"
#include "core/error.hpp"
#include "core/gradsuite.hpp"
#include "data/dataset_io.hpp"
#include "data/png_io.hpp"
#include "diffusion/latent.hpp"
#include "diffusion/sampler.hpp"
#include "diffusion/train.hpp"
#include "eval/metrics.hpp"
#include "model/checkpoint.hpp"

namespace sfd {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << "0x" << std::hex << v;
    return os.str();
}

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(cat("cannot open for hashing: ", path));
    std::ostringstream buf;
    buf << in.rdbuf();
    return fnv1a64(buf.str());
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(cat("cannot write: ", path));
    out << text;
    if (!out) throw IoError(cat("write failed: ", path));
}

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void write_manifest(const RunConfig& cfg, const std::string& command, double wall_s,
                    const std::vector<std::string>& artifacts) {
    json j;
    j["command"] = command;
    j["config_hash"] = hex64(cfg.hash());
    j["wall_time_s"] = wall_s;
    j["artifacts"] = artifacts;
    write_text(cfg.out_dir + "/manifest_" + command + ".json", j.dump(2));
}

std::string checkpoint_path(const RunConfig& cfg) { return cfg.out_dir + "/model.ckpt"; }

int missing_prereq(const std::string& what, const std::string& hint) {
    std::fprintf(stderr, "sfdiff: missing prerequisite: %s (%s)\n", what.c_str(), hint.c_str());
    return 2;
}

SceneSpec scene_spec(const RunConfig& cfg) {
    SceneSpec spec;
    spec.num_entities = cfg.data.entities;
    spec.height = cfg.data.height;
    spec.width = cfg.data.width;
    spec.caption_color_prob = cfg.data.caption_color_prob;
    spec.two_entity_max_iou = cfg.data.two_entity_max_iou;
    return spec;
}

struct Split {
    std::vector<SceneRecord> train, heldout;
};

Split load_split(const RunConfig& cfg) {
    auto records = read_dataset(cfg.dataset_dir());
    const int n = static_cast<int>(records.size());
    const int holdout = std::min(cfg.data.holdout, n - 1);
    Split s;
    s.train.assign(records.begin(), records.end() - holdout);
    s.heldout.assign(records.end() - holdout, records.end());
    if (s.heldout.empty()) s.heldout = s.train;  // degenerate but usable
    return s;
}

SubjectModel<float> build_model(const RunConfig& cfg) {
    ModelConfig mc = cfg.model;
    mc.unet.base = cfg.data.height / 2;
    mc.unet.d_cond = mc.text.d_cond;
    mc.unet.d_img = mc.text.d_img;
    mc.image.d_img = mc.text.d_img;
    return SubjectModel<float>(mc, Vocab::standard());
}

void write_sidecar(const std::string& path, const std::string& prompt, std::uint64_t seed,
                   double alpha, const SampleConfig& sc, std::uint64_t ckpt_hash) {
    json j;
    j["prompt"] = prompt;
    j["seed"] = seed;
    j["alpha"] = alpha;
    j["guidance"] = sc.guidance;
    j["steps"] = sc.steps;
    j["checkpoint_hash"] = hex64(ckpt_hash);
    write_text(path, j.dump(2));
}

int cmd_gen_data(const RunConfig& cfg) {
    const double t0 = now_s();
    std::vector<SceneRecord> records;
    records.reserve(cfg.data.records);
    const SceneSpec spec = scene_spec(cfg);
    for (int i = 0; i < cfg.data.records; ++i)
        records.push_back(generate_scene(cfg.data.seed + static_cast<std::uint64_t>(i), spec));
    write_dataset(records, cfg.dataset_dir());
    write_manifest(cfg, "gen-data", now_s() - t0, {cfg.dataset_dir()});
    std::printf("wrote %d records to %s\n", cfg.data.records, cfg.dataset_dir().c_str());
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    if (!fs::exists(cfg.dataset_dir() + "/index.jsonl"))
        return missing_prereq("dataset at " + cfg.dataset_dir(), "run gen-data first");
    const double t0 = now_s();
    Split split = load_split(cfg);
    auto model = build_model(cfg);
    const NoiseSchedule ns = cfg.noise_schedule();
    Trainer<float> trainer(model, split.train, ns, cfg.train, cfg.policy());

    json log = json::array();
    for (int step = 1; step <= cfg.train.steps; ++step) {
        StepStats st = trainer.step();
        if (step == 1 || step % cfg.log_every == 0 || step == cfg.train.steps) {
            json e;
            e["step"] = step;
            e["loss"] = st.loss;
            e["mse"] = st.mse;
            e["attn"] = st.attn;
            log.push_back(e);
            std::printf("step %6d  loss %.6f  mse %.6f  attn %.6f\n", step, st.loss, st.mse,
                        st.attn);
            std::fflush(stdout);
        }
    }
    const std::string ckpt = checkpoint_path(cfg);
    save_checkpoint(ckpt, model.params(),
                    CheckpointMeta{cfg.hash(), static_cast<std::uint64_t>(cfg.train.steps)});
    write_text(cfg.out_dir + "/train_log.json", log.dump(2));
    write_manifest(cfg, "train", now_s() - t0, {ckpt, cfg.out_dir + "/train_log.json"});
    return 0;
}

// loads the checkpoint and verifies it matches this config's architecture
SubjectModel<float> load_model(const RunConfig& cfg) {
    auto model = build_model(cfg);
    load_checkpoint(checkpoint_path(cfg), model.params());
    return model;
}

int cmd_sample(const RunConfig& cfg) {
    if (!fs::exists(checkpoint_path(cfg)))
        return missing_prereq("checkpoint at " + checkpoint_path(cfg), "run train first");
    if (!fs::exists(cfg.dataset_dir() + "/index.jsonl"))
        return missing_prereq("dataset at " + cfg.dataset_dir(), "run gen-data first");
    const double t0 = now_s();
    Split split = load_split(cfg);
    auto model = load_model(cfg);
    const NoiseSchedule ns = cfg.noise_schedule();
    const std::uint64_t ckpt_hash = file_hash(checkpoint_path(cfg));
    const std::string dir = cfg.out_dir + "/samples";
    fs::create_directories(dir);

    std::vector<std::string> artifacts;
    std::vector<Image> images;
    for (int i = 0; i < cfg.sample_count; ++i) {
        const auto& rec = split.heldout[static_cast<std::size_t>(i) % split.heldout.size()];
        SampleConfig sc = cfg.sample;
        sc.seed = Rng::mix(cfg.sample.seed, static_cast<std::uint64_t>(i));
        auto bundle = model.condition(rec);
        Image img = latent_to_image(ddim_sample(model, bundle, ns, sc));
        const std::string stem = dir + "/sample_" + std::to_string(i);
        png_write(stem + ".png", img);
        const std::string prompt =
            build_prompt(rec, model.vocab(), model.config().text.seq_len).text;
        write_sidecar(stem + ".json", prompt, sc.seed, 0.0, sc, ckpt_hash);
        artifacts.push_back(stem + ".png");
        artifacts.push_back(stem + ".json");
        images.push_back(std::move(img));
    }
    const std::string grid = dir + "/grid.png";
    emit_image_grid(images, std::min<int>(4, cfg.sample_count), grid);
    artifacts.push_back(grid);
    write_manifest(cfg, "sample", now_s() - t0, artifacts);
    std::printf("wrote %d samples under %s\n", cfg.sample_count, dir.c_str());
    return 0;
}

int cmd_interpolate(const RunConfig& cfg) {
    if (!fs::exists(checkpoint_path(cfg)))
        return missing_prereq("checkpoint at " + checkpoint_path(cfg), "run train first");
    if (!fs::exists(cfg.dataset_dir() + "/index.jsonl"))
        return missing_prereq("dataset at " + cfg.dataset_dir(), "run gen-data first");
    const double t0 = now_s();
    Split split = load_split(cfg);
    auto model = load_model(cfg);
    const NoiseSchedule ns = cfg.noise_schedule();
    const std::uint64_t ckpt_hash = file_hash(checkpoint_path(cfg));
    const std::string dir = cfg.out_dir + "/interp";
    fs::create_directories(dir);

    std::vector<std::string> artifacts;
    std::vector<Image> images;
    const std::size_t n = split.heldout.size();
    for (int i = 0; i < cfg.sample_count; ++i) {
        // convoluted template: caption from one record, subject from another
        const auto& donor = split.heldout[static_cast<std::size_t>(i) % n];
        const auto& caption_rec = split.heldout[(static_cast<std::size_t>(i) + 1) % n];
        SceneRecord hybrid = donor;
        hybrid.caption = caption_rec.caption;
        SampleConfig sc = cfg.sample;
        sc.seed = Rng::mix(cfg.sample.seed, 0x17e0000u + static_cast<std::uint64_t>(i));
        auto subject_cond = model.condition(hybrid);
        auto caption_cond = model.text_condition(caption_rec.caption);
        Image img = latent_to_image(
            interpolate_sample(model, subject_cond, caption_cond, cfg.alpha, ns, sc));
        const std::string stem = dir + "/interp_" + std::to_string(i);
        png_write(stem + ".png", img);
        const std::string prompt =
            build_prompt(hybrid, model.vocab(), model.config().text.seq_len).text;
        write_sidecar(stem + ".json", prompt, sc.seed, cfg.alpha, sc, ckpt_hash);
        artifacts.push_back(stem + ".png");
        artifacts.push_back(stem + ".json");
        images.push_back(std::move(img));
    }
    const std::string grid = dir + "/grid.png";
    emit_image_grid(images, std::min<int>(4, cfg.sample_count), grid);
    artifacts.push_back(grid);
    write_manifest(cfg, "interpolate", now_s() - t0, artifacts);
    std::printf("wrote %d interpolations (alpha %.2f) under %s\n", cfg.sample_count, cfg.alpha,
                dir.c_str());
    return 0;
}

int cmd_eval(const RunConfig& cfg) {
    if (!fs::exists(checkpoint_path(cfg)))
        return missing_prereq("checkpoint at " + checkpoint_path(cfg), "run train first");
    if (!fs::exists(cfg.dataset_dir() + "/index.jsonl"))
        return missing_prereq("dataset at " + cfg.dataset_dir(), "run gen-data first");
    const double t0 = now_s();
    Split split = load_split(cfg);
    auto model = load_model(cfg);
    const NoiseSchedule ns = cfg.noise_schedule();

    AttributeClassifier<float> clf(cfg.eval.classifier.seed);
    clf.train(split.train, cfg.eval.classifier);

    EvalReport rep = evaluate_model(model, clf, split.heldout, ns, cfg.sample,
                                    cfg.eval.samples, cfg.eval.attn_forwards, cfg.eval.seed);
    rep.config_hash = cfg.hash();
    const std::string path = cfg.out_dir + "/eval_report.json";
    write_text(path, report_to_json(rep));
    write_manifest(cfg, "eval", now_s() - t0, {path});

    std::printf("%-22s %10s\n", "metric", "value");
    std::printf("%-22s %10.4f\n", "subject_fidelity", rep.subject_fidelity);
    std::printf("%-22s %10.4f\n", "text_alignment", rep.text_alignment);
    std::printf("%-22s %10.4f\n", "confusion", rep.confusion);
    std::printf("%-22s %10.4f\n", "attention_deviation", rep.attention_deviation);
    std::printf("%-22s %10d\n", "samples", rep.samples);
    std::printf("%-22s %10d\n", "subjects", rep.subjects);
    std::printf("%-22s %10d\n", "two_subject_samples", rep.two_subject_samples);
    return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
    const double t0 = now_s();
    auto reports = run_op_gradient_suite();
    int failed = 0;
    for (const auto& r : reports) {
        failed += !r.report.pass;
        std::printf("%-18s %s  max_rel %.3e\n", r.name.c_str(),
                    r.report.pass ? "pass" : "FAIL", r.report.max_rel_err);
    }
    std::printf("%zu ops checked, %d failed\n", reports.size(), failed);
    fs::create_directories(cfg.out_dir);
    write_manifest(cfg, "gradcheck", now_s() - t0, {});
    return failed == 0 ? 0 : 1;
}

Image heatmap_image(const std::vector<double>& cells, int h, int w, int scale) {
    double hi = 0;
    for (double v : cells) hi = std::max(hi, v);
    if (hi <= 0) hi = 1;
    Image img(h * scale, w * scale, 1);
    for (int y = 0; y < h * scale; ++y)
        for (int x = 0; x < w * scale; ++x)
            img.at(y, x, 0) = static_cast<std::uint8_t>(
                std::lround(255.0 * cells[static_cast<std::size_t>(y / scale) * w + x / scale] /
                            hi));
    return img;
}

int cmd_inspect_attn(const RunConfig& cfg) {
    if (!fs::exists(cfg.dataset_dir() + "/index.jsonl"))
        return missing_prereq("dataset at " + cfg.dataset_dir(), "run gen-data first");
    const double t0 = now_s();
    Split split = load_split(cfg);
    const bool trained = fs::exists(checkpoint_path(cfg));
    auto model = trained ? load_model(cfg) : build_model(cfg);
    const NoiseSchedule ns = cfg.noise_schedule();
    const std::string dir = cfg.out_dir + "/attn";
    fs::create_directories(dir);

    const auto& rec = split.heldout.front();
    NoTapeScope<float> guard;
    auto bundle = model.condition(rec);
    auto z0 = image_to_latent<float>(rec.image);
    Rng rng(Rng::mix(cfg.sample.seed, 0x1a5bu));
    auto eps = Tensor<float>::zeros(z0.shape());
    for (auto& v : eps.values()) v = static_cast<float>(rng.normal());
    const int t = ns.T / 2;
    auto out = model.denoise(q_sample(z0, t, eps, ns), t, bundle);

    std::vector<std::string> artifacts;
    const auto bindings = bindings_from_roles(bundle.roles);
    for (std::size_t l = 0; l < out.attn.size(); ++l) {
        const auto& layer = out.attn[l];
        const int side = layer.h;
        const int scale = std::max(1, 128 / side);
        Tensor<float> m = layer.map;  // (h*w) x seq_len
        for (const auto& b : bindings) {
            std::vector<double> cells(static_cast<std::size_t>(side) * side);
            for (int q = 0; q < side * side; ++q)
                cells[q] = m.data()[static_cast<std::size_t>(q) * m.shape()[1] + b.token_pos];
            const std::string name = cat("L", l, "_s", side, "_tok", b.token_pos, "_",
                                         model.vocab().word(bundle.tokens[b.token_pos]), ".png");
            png_write(dir + "/" + name, heatmap_image(cells, side, side, scale));
            artifacts.push_back(dir + "/" + name);
        }
        for (std::size_t e = 0; e < bundle.entity_masks.size(); ++e) {
            auto mask = resize_mask<double>(bundle.entity_masks[e], rec.image.h, rec.image.w,
                                            side, side);
            std::vector<double> cells(mask.data(), mask.data() + mask.numel());
            const std::string name = cat("L", l, "_s", side, "_mask_ent", e, ".png");
            png_write(dir + "/" + name, heatmap_image(cells, side, side, scale));
            artifacts.push_back(dir + "/" + name);
        }
    }
    write_manifest(cfg, "inspect-attn", now_s() - t0, artifacts);
    std::printf("wrote %zu attention maps (%s weights) under %s\n", artifacts.size(),
                trained ? "trained" : "untrained", dir.c_str());
    return 0;
}

}  // namespace

Image make_image_grid(const std::vector<Image>& images, int cols) {
    if (images.empty()) throw ContractError("image grid needs at least one image");
    if (cols < 1) throw ContractError("image grid needs cols >= 1");
    const int h = images[0].h, w = images[0].w, ch = images[0].ch;
    for (const auto& img : images)
        if (img.h != h || img.w != w || img.ch != ch)
            throw DimError("image grid requires equally sized images");
    const int n = static_cast<int>(images.size());
    const int gcols = std::min(cols, n);
    const int rows = (n + gcols - 1) / gcols;
    // 2-pixel separators between cells and around the outside
    Image grid(rows * h + (rows + 1) * 2, gcols * w + (gcols + 1) * 2, ch);
    for (int i = 0; i < n; ++i) {
        const int r = i / gcols, c = i % gcols;
        const int y0 = 2 + r * (h + 2), x0 = 2 + c * (w + 2);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                for (int k = 0; k < ch; ++k)
                    grid.at(y0 + y, x0 + x, k) = images[static_cast<std::size_t>(i)].at(y, x, k);
    }
    return grid;
}

void emit_image_grid(const std::vector<Image>& images, int cols, const std::string& path) {
    png_write(path, make_image_grid(images, cols));
}

int run_command(const std::string& name, const RunConfig& cfg) {
    try {
        std::filesystem::create_directories(cfg.out_dir);
        if (name == "gen-data") return cmd_gen_data(cfg);
        if (name == "train") return cmd_train(cfg);
        if (name == "sample") return cmd_sample(cfg);
        if (name == "interpolate") return cmd_interpolate(cfg);
        if (name == "eval") return cmd_eval(cfg);
        if (name == "gradcheck") return cmd_gradcheck(cfg);
        if (name == "inspect-attn") return cmd_inspect_attn(cfg);
        std::fprintf(stderr, "sfdiff: unknown command '%s'\n", name.c_str());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "sfdiff %s: %s\n", name.c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "sfdiff %s: internal error: %s\n", name.c_str(), e.what());
        return 1;
    }
}

}  // namespace sfd
