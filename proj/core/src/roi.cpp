#include "shiftmae/roi.hpp"

#include "shiftmae/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace shiftmae {

using nlohmann::json;

std::string to_string(RoiSource source) {
    switch (source) {
        case RoiSource::oracle: return "oracle";
        case RoiSource::sidecar: return "sidecar";
        case RoiSource::naive: return "naive";
    }
    return "?";
}

RoiSource roi_source_from_string(const std::string& s) {
    if (s == "oracle") return RoiSource::oracle;
    if (s == "sidecar") return RoiSource::sidecar;
    if (s == "naive") return RoiSource::naive;
    throw ConfigError("unknown roi source '" + s + "' (expected oracle, sidecar or naive)");
}

bool RoiResult::valid_in(int width, int height) const {
    return box.valid_in(width, height) && score >= 0.0 && score <= 1.0;
}

RoiResult roi_from_oracle(const Sample& sample) {
    if (!sample.gt_box) throw DataError("sample " + sample.id + " has no ground-truth box");
    return RoiResult{*sample.gt_box, 1.0, RoiSource::oracle};
}

RoiResult roi_naive(const Image& image, const NaiveRoiConfig& config) {
    RoiResult blank{Box{0, 0, std::max(1, image.width), std::max(1, image.height)}, 0.0, RoiSource::naive};
    if (image.empty()) return blank;
    std::vector<float> sorted(image.data);
    std::sort(sorted.begin(), sorted.end());
    const auto qi = static_cast<std::size_t>(std::clamp(config.quantile, 0.0, 1.0) * (sorted.size() - 1));
    const float threshold = sorted[qi];
    if (sorted.back() <= 0.0f) return blank;

    // Strictly above the quantile value, unless that would leave nothing.
    auto bright = [&](std::size_t i) {
        return threshold < sorted.back() ? image.data[i] > threshold : image.data[i] >= threshold;
    };
    const int W = image.width;
    const int H = image.height;
    std::vector<int> label(image.size(), -1);
    std::vector<std::size_t> stack;
    std::size_t best_count = 0;
    Box best_box;
    int next_label = 0;
    for (std::size_t start = 0; start < image.size(); ++start) {
        if (label[start] >= 0 || !bright(start)) continue;
        std::size_t count = 0;
        Box box{W, H, -1, -1};
        stack.push_back(start);
        label[start] = next_label;
        while (!stack.empty()) {
            const auto i = stack.back();
            stack.pop_back();
            ++count;
            const int y = static_cast<int>(i / W);
            const int x = static_cast<int>(i % W);
            box.x0 = std::min(box.x0, x);
            box.y0 = std::min(box.y0, y);
            box.x1 = std::max(box.x1, x + 1);
            box.y1 = std::max(box.y1, y + 1);
            const int nx[4] = {x - 1, x + 1, x, x};
            const int ny[4] = {y, y, y - 1, y + 1};
            for (int k = 0; k < 4; ++k) {
                if (nx[k] < 0 || nx[k] >= W || ny[k] < 0 || ny[k] >= H) continue;
                const auto j = static_cast<std::size_t>(ny[k]) * W + nx[k];
                if (label[j] < 0 && bright(j)) {
                    label[j] = next_label;
                    stack.push_back(j);
                }
            }
        }
        ++next_label;
        if (count > best_count) {  // first component wins ties (raster order)
            best_count = count;
            best_box = box;
        }
    }
    if (best_count == 0) return blank;
    return RoiResult{best_box, static_cast<double>(best_count) / static_cast<double>(best_box.area()),
                     RoiSource::naive};
}

RoiSidecar RoiSidecar::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open RoI sidecar " + path.string());
    RoiSidecar sc;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        RoiResult r;
        std::string id;
        try {
            const auto j = json::parse(line);
            id = j.at("id").get<std::string>();
            const auto b = j.at("box").get<std::vector<int>>();
            if (b.size() != 4) throw InvalidBoxError("line " + std::to_string(lineno) + ": box needs 4 values");
            r.box = Box{b[0], b[1], b[2], b[3]};
            r.score = j.at("score").get<double>();
        } catch (const json::exception& e) {
            throw DataError("malformed RoI sidecar line " + std::to_string(lineno) + ": " + e.what());
        }
        r.source = RoiSource::sidecar;
        if (r.box.x0 < 0 || r.box.y0 < 0 || r.box.x0 >= r.box.x1 || r.box.y0 >= r.box.y1) {
            throw InvalidBoxError("RoI sidecar id " + id + ": invalid box");
        }
        if (!(r.score >= 0.0 && r.score <= 1.0)) {
            throw InvalidScoreError("RoI sidecar id " + id + ": score outside [0,1]");
        }
        sc.put(id, r);
    }
    return sc;
}

void RoiSidecar::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write RoI sidecar " + path.string());
    for (const auto& id : order_) {
        const auto& r = entries_.at(id);
        json j;
        j["id"] = id;
        j["box"] = {r.box.x0, r.box.y0, r.box.x1, r.box.y1};
        j["score"] = r.score;
        out << j.dump() << '\n';
    }
}

void RoiSidecar::put(const std::string& id, const RoiResult& result) {
    if (!entries_.count(id)) order_.push_back(id);
    entries_[id] = result;
}

RoiResult RoiSidecar::get(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw MissingRecordError("no RoI sidecar entry for id '" + id + "'");
    return it->second;
}

RoiResult read_roi_sidecar(const std::filesystem::path& path, const std::string& id) {
    return RoiSidecar::load(path).get(id);
}

RoiResult SidecarRoiProvider::detect(const Sample& sample) const {
    auto r = sidecar_.get(sample.id);
    if (!r.box.valid_in(sample.image.width, sample.image.height)) {
        throw InvalidBoxError("RoI sidecar box for " + sample.id + " lies outside the image");
    }
    return r;
}

std::unique_ptr<RoiProvider> make_roi_provider(RoiSource source, const std::filesystem::path& sidecar_path,
                                               NaiveRoiConfig naive) {
    switch (source) {
        case RoiSource::oracle: return std::make_unique<OracleRoiProvider>();
        case RoiSource::naive: return std::make_unique<NaiveRoiProvider>(naive);
        case RoiSource::sidecar: return std::make_unique<SidecarRoiProvider>(RoiSidecar::load(sidecar_path));
    }
    throw ConfigError("unknown roi source");
}

}  // namespace shiftmae
