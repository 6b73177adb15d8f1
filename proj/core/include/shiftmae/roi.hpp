#pragma once

#include "shiftmae/phantom.hpp"
#include "shiftmae/raster.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>

namespace shiftmae {

enum class RoiSource { oracle, sidecar, naive };

std::string to_string(RoiSource source);
RoiSource roi_source_from_string(const std::string& s);

/// Bone-region detection: box B with confidence S in [0,1].
struct RoiResult {
    Box box;
    double score = 0.0;
    RoiSource source = RoiSource::oracle;

    /// Box within the image and S in [0,1].
    bool valid_in(int width, int height) const;
};

/// Ground-truth box with S = 1.
RoiResult roi_from_oracle(const Sample& sample);

struct NaiveRoiConfig {
    double quantile = 0.9;
};

/// Thresholds the image at the configured intensity quantile, keeps the
/// largest 4-connected bright component and reports its bounding box.
/// S is the component's fill ratio of that box; a blank image gives S = 0.
RoiResult roi_naive(const Image& image, const NaiveRoiConfig& config = {});

/// `roi.jsonl`: one {"id", "box": [x0,y0,x1,y1], "score"} object per line.
class RoiSidecar {
public:
    static RoiSidecar load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    void put(const std::string& id, const RoiResult& result);
    /// MissingRecordError for ids without an entry.
    RoiResult get(const std::string& id) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, RoiResult> entries_;
    std::vector<std::string> order_;
};

RoiResult read_roi_sidecar(const std::filesystem::path& path, const std::string& id);

/// Strategy used during scoring to obtain the gating box for a sample.
class RoiProvider {
public:
    virtual ~RoiProvider() = default;
    virtual RoiResult detect(const Sample& sample) const = 0;
};

class OracleRoiProvider final : public RoiProvider {
public:
    RoiResult detect(const Sample& sample) const override { return roi_from_oracle(sample); }
};

class NaiveRoiProvider final : public RoiProvider {
public:
    explicit NaiveRoiProvider(NaiveRoiConfig config = {}) : config_(config) {}
    RoiResult detect(const Sample& sample) const override { return roi_naive(sample.image, config_); }

private:
    NaiveRoiConfig config_;
};

class SidecarRoiProvider final : public RoiProvider {
public:
    explicit SidecarRoiProvider(RoiSidecar sidecar) : sidecar_(std::move(sidecar)) {}
    RoiResult detect(const Sample& sample) const override;

private:
    RoiSidecar sidecar_;
};

std::unique_ptr<RoiProvider> make_roi_provider(RoiSource source, const std::filesystem::path& sidecar_path = {},
                                               NaiveRoiConfig naive = {});

}  // namespace shiftmae
