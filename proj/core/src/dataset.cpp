#include "shiftmae/dataset.hpp"

#include "shiftmae/errors.hpp"
#include "shiftmae/image_io.hpp"

#include <json.hpp>

#include <fstream>

namespace shiftmae {

using nlohmann::json;

std::string to_json_line(const IndexRecord& r) {
    json j;
    j["id"] = r.id;
    j["image_path"] = r.image_path;
    j["mask_path"] = r.mask_path;
    j["label"] = to_string(r.label);
    j["box"] = {r.box.x0, r.box.y0, r.box.x1, r.box.y1};
    j["split"] = r.split;
    return j.dump();
}

IndexRecord index_record_from_json(const std::string& line) {
    try {
        const auto j = json::parse(line);
        IndexRecord r;
        r.id = j.at("id").get<std::string>();
        r.image_path = j.at("image_path").get<std::string>();
        r.mask_path = j.value("mask_path", std::string{});
        r.label = label_from_string(j.at("label").get<std::string>());
        const auto box = j.at("box").get<std::vector<int>>();
        if (box.size() != 4) throw DataError("box must have 4 coordinates");
        r.box = Box{box[0], box[1], box[2], box[3]};
        r.split = j.value("split", std::string{});
        return r;
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed index record: ") + e.what());
    }
}

IndexRecord write_sample(const std::filesystem::path& root, const Sample& s) {
    if (s.id.empty()) throw DataError("sample without id");
    if (!s.gt_box) throw DataError("sample " + s.id + " has no bone box");
    IndexRecord r;
    r.id = s.id;
    r.image_path = "images/" + s.id + ".pgm";
    r.mask_path = "masks/" + s.id + ".pgm";
    r.label = s.label;
    r.box = *s.gt_box;
    r.split = s.split;
    write_pgm(root / r.image_path, s.image);
    const BinaryMask empty(s.image.height, s.image.width, 0);
    write_pgm(root / r.mask_path, s.gt_pixels.empty() ? empty : s.gt_pixels);
    return r;
}

void write_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples) {
    std::filesystem::create_directories(root);
    std::ofstream index(root / "index.jsonl", std::ios::binary);
    if (!index) throw DataError("cannot write index under " + root.string());
    for (const auto& s : samples) index << to_json_line(write_sample(root, s)) << '\n';
    if (!index) throw DataError("index write failed under " + root.string());
}

std::vector<IndexRecord> read_index(const std::filesystem::path& root) {
    std::ifstream in(root / "index.jsonl");
    if (!in) throw DataError("missing index.jsonl under " + root.string());
    std::vector<IndexRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        records.push_back(index_record_from_json(line));
    }
    return records;
}

Sample read_sample(const std::filesystem::path& root, const IndexRecord& r) {
    Sample s;
    s.id = r.id;
    s.label = r.label;
    s.split = r.split;
    s.image = read_pgm(root / r.image_path);
    if (!r.box.valid_in(s.image.width, s.image.height)) {
        throw InvalidBoxError("sample " + r.id + ": box outside the image");
    }
    s.gt_box = r.box;
    if (!r.mask_path.empty()) {
        s.gt_pixels = read_pgm_mask(root / r.mask_path);
        if (s.gt_pixels.height != s.image.height || s.gt_pixels.width != s.image.width) {
            throw DataError("sample " + r.id + ": mask size differs from image size");
        }
    } else {
        s.gt_pixels = BinaryMask(s.image.height, s.image.width, 0);
    }
    return s;
}

Sample read_sample(const std::filesystem::path& root, const std::string& id) {
    for (const auto& r : read_index(root)) {
        if (r.id == id) return read_sample(root, r);
    }
    throw MissingRecordError("no index record for id '" + id + "' under " + root.string());
}

std::vector<Sample> read_dataset(const std::filesystem::path& root, const std::string& split) {
    std::vector<Sample> out;
    for (const auto& r : read_index(root)) {
        if (split.empty() || r.split == split) out.push_back(read_sample(root, r));
    }
    return out;
}

}  // namespace shiftmae
