#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "core/error.hpp"
#include "data/png_io.hpp"

using namespace sfd;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// the tiny-but-valid model used by the pipeline integration case
const char* kTinyJson = R"({
  "out_dir": "OUTDIR",
  "data": {"records": 24, "holdout": 6, "seed": 4100},
  "model": {"widths": [16, 24, 32], "d_cond": 32, "d_img": 24,
            "text_ff": 48, "text_layers": 1, "image_layers": 1,
            "image_ff": 48, "time_dim": 32, "fourier_k": 2},
  "schedule": {"timesteps": 40},
  "train": {"steps": 3, "batch": 2, "log_every": 1},
  "sample": {"steps": 5, "count": 2}
})";

RunConfig tiny_config(const std::string& out_dir) {
    std::string text = kTinyJson;
    text.replace(text.find("OUTDIR"), 6, out_dir);
    return parse_config_text(text, "tiny");
}

}  // namespace

TEST_CASE("shipped default config parses and round-trips to the same hash") {
    const std::string path = std::string(SFD_SOURCE_DIR) + "/configs/default.json";
    RunConfig from_file = parse_config(path);
    RunConfig defaults;
    CHECK(from_file.hash() == defaults.hash());
    CHECK(from_file.to_canonical_json() == defaults.to_canonical_json());

    // canonical text re-parses to the identical hash (full round trip)
    RunConfig again = parse_config_text(from_file.to_canonical_json(), "canon");
    CHECK(again.hash() == from_file.hash());

    // and the shipped file IS the canonical serialization
    CHECK(read_file(path) == defaults.to_canonical_json() + "\n");
}

TEST_CASE("config hash ignores formatting but tracks content") {
    const std::string a = R"({"train": {"lr": 0.004, "steps": 7}})";
    const std::string b = "{\n  \"train\": {\"steps\": 7,   \"lr\": 4e-3}\n}\n";
    CHECK(parse_config_text(a, "a").hash() == parse_config_text(b, "b").hash());

    const std::string c = R"({"train": {"lr": 0.004, "steps": 8}})";
    CHECK(parse_config_text(a, "a").hash() != parse_config_text(c, "c").hash());

    // defaults materialize: an empty config hashes like the default object
    CHECK(parse_config_text("{}", "empty").hash() == RunConfig{}.hash());
}

TEST_CASE("unknown keys are errors naming the dotted path") {
    CHECK_THROWS_WITH_AS(parse_config_text(R"({"train": {"lamda_attn": 0.1}})", "t"),
                         doctest::Contains("train.lamda_attn"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text(R"({"banana": 1})", "t"),
                         doctest::Contains("banana"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text(R"({"model": {"depth": 3}})", "t"),
                         doctest::Contains("model.depth"), ConfigError);
}

TEST_CASE("validation rejects out-of-range values, naming the key") {
    CHECK_THROWS_WITH_AS(parse_config_text(R"({"train": {"lambda_attn": -1}})", "t"),
                         doctest::Contains("train.lambda_attn"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text(R"({"data": {"entities": 3}})", "t"),
                         doctest::Contains("data.entities"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text(R"({"data": {"height": 30}})", "t"),
                         doctest::Contains("data.height"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text(R"({"schedule": {"beta_start": 0}})", "t"),
                         doctest::Contains("schedule.beta_start"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text(R"({"sample": {"alpha": 1.5}})", "t"),
                         doctest::Contains("sample.alpha"), ConfigError);
    CHECK_THROWS_WITH_AS(
        parse_config_text(R"({"train": {"trainable": ["adapters", "nope"]}})", "t"),
        doctest::Contains("nope"), ConfigError);
    // ints must be ints: a fractional record count cannot silently truncate
    CHECK_THROWS_AS(parse_config_text(R"({"data": {"records": 12.5}})", "t"), ConfigError);
}

TEST_CASE("malformed JSON and non-object roots are parse errors") {
    CHECK_THROWS_AS(parse_config_text("{nope", "bad"), ParseError);
    CHECK_THROWS_AS(parse_config_text("[1,2]", "bad"), ParseError);
    CHECK_THROWS_AS(parse_config(std::string(SFD_SOURCE_DIR) + "/configs/absent.json"), IoError);
}

TEST_CASE("dotted overrides rewrite values before validation") {
    RunConfig base = parse_config_text("{}", "t");
    RunConfig cfg = parse_config_text(
        "{}", "t",
        {"train.lr=1e-3", "data.records=99", "data.holdout=10",
         "model.widths=[16,24,32]", "out_dir=elsewhere",
         "model.zero_init_out=false", "train.trainable=[\"adapters\"]"});
    CHECK(cfg.train.lr == 1e-3);
    CHECK(cfg.data.records == 99);
    CHECK(cfg.model.unet.widths == std::array<int, 3>{16, 24, 32});
    CHECK(cfg.out_dir == "elsewhere");
    CHECK(cfg.model.unet.zero_init_out == false);
    CHECK(cfg.trainable == std::vector<std::string>{"adapters"});
    CHECK(cfg.hash() != base.hash());

    // an override that violates validation still fails with the dotted key
    CHECK_THROWS_WITH_AS(parse_config_text("{}", "t", {"train.lambda_attn=-1"}),
                         doctest::Contains("train.lambda_attn"), ConfigError);
    // and an override of an unknown key is caught like any other unknown key
    CHECK_THROWS_WITH_AS(parse_config_text("{}", "t", {"train.lamda_attn=0.1"}),
                         doctest::Contains("train.lamda_attn"), ConfigError);
    // missing '=' is malformed
    CHECK_THROWS_AS(parse_config_text("{}", "t", {"train.lr"}), ConfigError);
}

TEST_CASE("image grid: one image comes back as itself plus a border") {
    Image img(5, 7, 3);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 7; ++x)
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = static_cast<std::uint8_t>(40 * y + 11 * x + 3 * c);

    Image grid = make_image_grid({img}, 1);
    REQUIRE(grid.h == 5 + 4);
    REQUIRE(grid.w == 7 + 4);
    REQUIRE(grid.ch == 3);
    for (int y = 0; y < grid.h; ++y)
        for (int x = 0; x < grid.w; ++x)
            for (int c = 0; c < 3; ++c) {
                const bool border = y < 2 || y >= grid.h - 2 || x < 2 || x >= grid.w - 2;
                CHECK(grid.at(y, x, c) == (border ? 0 : img.at(y - 2, x - 2, c)));
            }
}

TEST_CASE("image grid: row-major layout with 2-pixel separators") {
    // six 4x6 images, three columns -> 2 rows; every cell checked exactly
    std::vector<Image> imgs;
    for (int i = 0; i < 6; ++i) {
        Image img(4, 6, 1);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 6; ++x) img.at(y, x, 0) = static_cast<std::uint8_t>(50 + i);
        imgs.push_back(img);
    }
    Image grid = make_image_grid(imgs, 3);
    REQUIRE(grid.h == 2 * 4 + 3 * 2);
    REQUIRE(grid.w == 3 * 6 + 4 * 2);
    for (int i = 0; i < 6; ++i) {
        const int r = i / 3, c = i % 3;
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 6; ++x)
                CHECK(grid.at(2 + r * 6 + y, 2 + c * 8 + x, 0) == 50 + i);
    }
    // separator strip between the two rows is blank
    for (int x = 0; x < grid.w; ++x) CHECK(grid.at(2 + 4, x, 0) == 0);

    // a short last row leaves its empty cells at the separator color
    Image grid5 = make_image_grid({imgs[0], imgs[1], imgs[2], imgs[3], imgs[4]}, 3);
    REQUIRE(grid5.h == grid.h);
    REQUIRE(grid5.w == grid.w);
    CHECK(grid5.at(2 + 6, 2 + 2 * 8, 0) == 0);

    // more columns than images collapses to one row of n
    Image grid2 = make_image_grid({imgs[0], imgs[1]}, 4);
    CHECK(grid2.h == 4 + 4);
    CHECK(grid2.w == 2 * 6 + 3 * 2);

    CHECK_THROWS_AS(make_image_grid({}, 2), ContractError);
    CHECK_THROWS_AS(make_image_grid({imgs[0]}, 0), ContractError);
    CHECK_THROWS_AS(make_image_grid({imgs[0], Image(3, 3, 1)}, 2), DimError);
}

TEST_CASE("pipeline: gen-data, train, sample end to end") {
    const std::string dir = "cli_e2e_run";
    fs::remove_all(dir);
    RunConfig cfg = tiny_config(dir);

    // sampling before anything exists is a missing-prerequisite usage error
    CHECK(run_command("sample", cfg) == 2);
    CHECK(run_command("train", cfg) == 2);

    REQUIRE(run_command("gen-data", cfg) == 0);
    CHECK(fs::exists(dir + "/dataset/index.jsonl"));
    CHECK(fs::exists(dir + "/manifest_gen-data.json"));

    // still no checkpoint: sample keeps refusing
    CHECK(run_command("sample", cfg) == 2);

    REQUIRE(run_command("train", cfg) == 0);
    CHECK(fs::exists(dir + "/model.ckpt"));
    CHECK(fs::exists(dir + "/train_log.json"));

    REQUIRE(run_command("sample", cfg) == 0);
    for (int i = 0; i < cfg.sample_count; ++i) {
        CHECK(fs::exists(dir + "/samples/sample_" + std::to_string(i) + ".png"));
        CHECK(fs::exists(dir + "/samples/sample_" + std::to_string(i) + ".json"));
    }
    CHECK(fs::exists(dir + "/samples/grid.png"));

    // sampled images decode and have the configured extent
    Image img = png_read(dir + "/samples/sample_0.png");
    CHECK(img.h == cfg.data.height);
    CHECK(img.w == cfg.data.width);

    // the sidecar records the reproducibility tuple
    const std::string sidecar = read_file(dir + "/samples/sample_0.json");
    for (const char* key : {"prompt", "seed", "alpha", "guidance", "steps", "checkpoint_hash"})
        CHECK(sidecar.find(std::string("\"") + key + "\"") != std::string::npos);

    // every manifest carries the config hash of the run that produced it
    std::ostringstream want;
    want << "0x" << std::hex << cfg.hash();
    for (const char* cmd : {"gen-data", "train", "sample"}) {
        const std::string m = read_file(dir + "/manifest_" + cmd + ".json");
        CHECK(m.find(want.str()) != std::string::npos);
        CHECK(m.find("wall_time_s") != std::string::npos);
    }

    REQUIRE(run_command("interpolate", cfg) == 0);
    CHECK(fs::exists(dir + "/interp/interp_0.png"));

    REQUIRE(run_command("inspect-attn", cfg) == 0);
    CHECK(fs::exists(dir + "/manifest_inspect-attn.json"));
    int heatmaps = 0;
    for (const auto& e : fs::directory_iterator(dir + "/attn"))
        heatmaps += e.path().extension() == ".png";
    CHECK(heatmaps > 0);

    CHECK(run_command("no-such-command", cfg) == 2);
    fs::remove_all(dir);
}

TEST_CASE("pipeline determinism: same config and seeds give identical bytes") {
    const std::string da = "cli_det_a", db = "cli_det_b";
    fs::remove_all(da);
    fs::remove_all(db);
    for (const auto& dir : {da, db}) {
        RunConfig cfg = tiny_config(dir);
        REQUIRE(run_command("gen-data", cfg) == 0);
        REQUIRE(run_command("train", cfg) == 0);
        REQUIRE(run_command("sample", cfg) == 0);
    }
    CHECK(read_file(da + "/dataset/index.jsonl") == read_file(db + "/dataset/index.jsonl"));
    CHECK(read_file(da + "/model.ckpt") == read_file(db + "/model.ckpt"));
    CHECK(read_file(da + "/samples/sample_0.png") == read_file(db + "/samples/sample_0.png"));
    CHECK(read_file(da + "/samples/sample_1.png") == read_file(db + "/samples/sample_1.png"));
    fs::remove_all(da);
    fs::remove_all(db);
}
