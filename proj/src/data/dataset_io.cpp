#include "data/dataset_io.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "core/error.hpp"
#include "data/png_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace sfd {

namespace {

std::string image_rel(uint64_t seed) { return cat("images/", seed, ".png"); }
std::string mask_rel(uint64_t seed, int k) { return cat("masks/", seed, "_", k, ".png"); }

json record_to_json(const SceneRecord& rec) {
    json j;
    j["seed"] = rec.seed;
    j["caption"] = rec.caption;
    j["background"] = rec.background_index;
    j["image"] = image_rel(rec.seed);
    json ents = json::array();
    for (size_t k = 0; k < rec.entities.size(); ++k) {
        const EntityAnnotation& e = rec.entities[k];
        json je;
        je["label"] = e.label;
        je["color"] = e.color_word;
        je["color_index"] = e.color_index;
        je["size"] = e.size_word;
        je["color_in_caption"] = e.color_in_caption;
        je["box"] = {e.box[0], e.box[1], e.box[2], e.box[3]};
        je["mask"] = mask_rel(rec.seed, static_cast<int>(k));
        ents.push_back(std::move(je));
    }
    j["entities"] = std::move(ents);
    return j;
}

SceneRecord record_from_json(const json& j, const fs::path& dir, const std::string& where) {
    SceneRecord rec;
    try {
        rec.seed = j.at("seed").get<uint64_t>();
        rec.caption = j.at("caption").get<std::string>();
        rec.background_index = j.at("background").get<int>();
        const std::string img_rel = j.at("image").get<std::string>();
        rec.image = png_read((dir / img_rel).string());
        const json& ents = j.at("entities");
        if (!ents.is_array() || ents.empty() || ents.size() > 2)
            throw ParseError(cat(where, ": entities must hold 1 or 2 records"));
        for (const json& je : ents) {
            EntityAnnotation e;
            e.label = je.at("label").get<std::string>();
            e.color_word = je.at("color").get<std::string>();
            e.color_index = je.at("color_index").get<int>();
            e.size_word = je.at("size").get<std::string>();
            e.color_in_caption = je.at("color_in_caption").get<bool>();
            const json& jb = je.at("box");
            if (!jb.is_array() || jb.size() != 4)
                throw ParseError(cat(where, ": box must hold 4 numbers"));
            for (int i = 0; i < 4; ++i) e.box[i] = jb[i].get<double>();
            if (!(e.box[0] < e.box[2]) || !(e.box[1] < e.box[3]) || e.box[0] < 0.0 ||
                e.box[1] < 0.0 || e.box[2] > 1.0 || e.box[3] > 1.0)
                throw ParseError(cat(where, ": box is not a normalized x0<x1, y0<y1 rectangle"));
            const std::string mrel = je.at("mask").get<std::string>();
            const Image mimg = png_read((dir / mrel).string());
            if (mimg.h != rec.image.h || mimg.w != rec.image.w)
                throw ParseError(cat(where, ": mask size does not match image"));
            e.mask = image_to_mask(mimg, mrel);
            rec.entities.push_back(std::move(e));
        }
    } catch (const json::exception& ex) {
        throw ParseError(cat(where, ": ", ex.what()));
    }
    return rec;
}

}  // namespace

Image mask_to_image(const std::vector<uint8_t>& mask, int h, int w) {
    if (mask.size() != static_cast<size_t>(h) * w)
        throw DimError(cat("mask size ", mask.size(), " does not match ", h, "x", w));
    Image img(h, w, 1);
    for (size_t i = 0; i < mask.size(); ++i) {
        if (mask[i] > 1) throw ContractError("mask values must be 0 or 1");
        img.px[i] = mask[i] ? 255 : 0;
    }
    return img;
}

std::vector<uint8_t> image_to_mask(const Image& img, const std::string& origin) {
    if (img.ch != 1) throw ParseError(cat("mask ", origin, ": expected a grayscale image"));
    std::vector<uint8_t> mask(img.px.size());
    for (size_t i = 0; i < img.px.size(); ++i) {
        if (img.px[i] != 0 && img.px[i] != 255)
            throw ParseError(cat("mask ", origin, ": pixel value ", int(img.px[i]),
                                 " is neither 0 nor 255"));
        mask[i] = img.px[i] ? 1 : 0;
    }
    return mask;
}

void write_dataset(const std::vector<SceneRecord>& records, const std::string& dir) {
    const fs::path root(dir);
    std::error_code ec;
    fs::create_directories(root / "images", ec);
    fs::create_directories(root / "masks", ec);
    if (ec) throw IoError(cat("cannot create dataset directories under ", dir));

    std::ofstream index(root / "index.jsonl", std::ios::binary | std::ios::trunc);
    if (!index) throw IoError(cat("cannot open ", (root / "index.jsonl").string()));
    for (const SceneRecord& rec : records) {
        png_write((root / image_rel(rec.seed)).string(), rec.image);
        for (size_t k = 0; k < rec.entities.size(); ++k)
            png_write((root / mask_rel(rec.seed, static_cast<int>(k))).string(),
                      mask_to_image(rec.entities[k].mask, rec.image.h, rec.image.w));
        index << record_to_json(rec).dump() << '\n';
    }
    if (!index) throw IoError(cat("failed writing ", (root / "index.jsonl").string()));
}

std::vector<SceneRecord> read_dataset(const std::string& dir) {
    const fs::path root(dir);
    std::ifstream index(root / "index.jsonl", std::ios::binary);
    if (!index) throw IoError(cat("cannot open ", (root / "index.jsonl").string()));
    std::vector<SceneRecord> records;
    std::string line;
    int line_no = 0;
    while (std::getline(index, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = cat("index.jsonl:", line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& ex) {
            throw ParseError(cat(where, ": ", ex.what()));
        }
        records.push_back(record_from_json(j, root, where));
    }
    return records;
}

}  // namespace sfd
