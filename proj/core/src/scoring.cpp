#include "shiftmae/scoring.hpp"

#include "shiftmae/errors.hpp"
#include "shiftmae/image_io.hpp"
#include "shiftmae/keyvalue.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace shiftmae {

namespace {

template <typename E>
bool rethrow_as(const std::exception_ptr& ep, const std::string& prefix) {
    try {
        std::rethrow_exception(ep);
    } catch (const E& e) {
        throw E(prefix + e.what());
    } catch (...) {
    }
    return false;
}

[[noreturn]] void rethrow_with_id(const std::exception_ptr& ep, const std::string& id) {
    const std::string prefix = "sample " + id + ": ";
    rethrow_as<MissingRecordError>(ep, prefix);
    rethrow_as<InvalidBoxError>(ep, prefix);
    rethrow_as<InvalidScoreError>(ep, prefix);
    rethrow_as<FormatError>(ep, prefix);
    rethrow_as<DataError>(ep, prefix);
    rethrow_as<ConfigMismatchError>(ep, prefix);
    rethrow_as<ConfigError>(ep, prefix);
    rethrow_as<NumericError>(ep, prefix);
    std::rethrow_exception(ep);
}

}  // namespace

std::string to_string(ErrorKind kind) { return kind == ErrorKind::full ? "full" : "roi"; }

ErrorMap pixel_error_full(const MaeModel<float>& model, const Tensor& image, const MaskSet& masks, float fill,
                          int batch) {
    if (masks.empty()) throw ConfigError("pixel_error_full: empty mask set");
    if (image.rank() != 3) throw ConfigError("pixel_error_full: expected a [C,H,W] image, got " + shape_str(image.shape()));
    if (batch < 1) throw ConfigError("pixel_error_full: batch must be >= 1");
    const int C = static_cast<int>(image.dim(0));
    const int H = static_cast<int>(image.dim(1));
    const int W = static_cast<int>(image.dim(2));
    const auto& mc = model.config();
    if (C != mc.channels || H != mc.input_size || W != mc.input_size) {
        throw ConfigError("pixel_error_full: image " + shape_str(image.shape()) + " does not match the model input");
    }
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t per = plane * C;
    const auto x = image.data();

    NoGradGuard guard;
    std::vector<double> acc(plane, 0.0);
    const int n = static_cast<int>(masks.count());
    for (int start = 0; start < n; start += batch) {
        const int b = std::min(batch, n - start);
        auto input = Tensor::zeros({b, C, H, W});
        auto in = input.data();
        for (int i = 0; i < b; ++i) {
            apply_mask_into<float>(x, masks.masks[start + i], fill, C, in.subspan(i * per, per));
        }
        const auto recon = model.forward(input);
        const auto r = recon.data();
        for (int i = 0; i < b; ++i) {
            for (std::size_t p = 0; p < plane; ++p) {
                double e = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double d = static_cast<double>(r[i * per + c * plane + p]) - static_cast<double>(x[c * plane + p]);
                    e += d * d;
                }
                acc[p] += e / C;
            }
        }
    }
    ErrorMap out;
    out.values = Image(H, W);
    out.kind = ErrorKind::full;
    out.n_masks = n;
    for (std::size_t p = 0; p < plane; ++p) {
        const double v = acc[p] / n;
        if (!std::isfinite(v)) throw NumericError("pixel_error_full: non-finite reconstruction error");
        out.values.data[p] = static_cast<float>(v);
    }
    return out;
}

ErrorMap pixel_error_full(const MaeModel<float>& model, const Image& image, const MaskSet& masks, float fill,
                          int batch) {
    const auto t = Tensor::from({1, image.height, image.width}, image.data);
    return pixel_error_full(model, t, masks, fill, batch);
}

ErrorMap pixel_error_roi(const ErrorMap& full, const RoiResult& roi, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must lie in [0,1]");
    ErrorMap out = full;
    out.kind = ErrorKind::roi;
    if (roi.score < tau) return out;
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            if (!roi.box.contains(x, y)) out.values.at(y, x) = 0.0f;
        }
    }
    return out;
}

std::size_t top_k_count(std::size_t n_pixels, double k_percent) {
    if (!(k_percent > 0.0)) throw ConfigError("k_percent must be > 0");
    if (k_percent > 100.0) throw ConfigError("k_percent must be <= 100");
    const auto k = static_cast<std::size_t>(std::llround(k_percent / 100.0 * static_cast<double>(n_pixels)));
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(n_pixels, 1));
}

ImageScore image_score(const ErrorMap& map, double k_percent) {
    const auto& v = map.values.data;
    const std::size_t count = top_k_count(v.size(), k_percent);
    if (v.empty()) throw ConfigError("image_score: empty error map");
    std::vector<std::uint32_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0u);
    auto before = [&](std::uint32_t a, std::uint32_t b) { return v[a] > v[b] || (v[a] == v[b] && a < b); };
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(), before);
    double sum = 0.0;
    for (std::size_t i = 0; i < count; ++i) sum += v[idx[i]];
    return ImageScore{sum / static_cast<double>(count), k_percent, count};
}

std::vector<SampleScore> score_dataset(const MaeModel<float>& model, const std::vector<Sample>& samples,
                                       const RoiProvider& roi, const ScoringConfig& config) {
    if (config.masks.empty()) throw ConfigError("score_dataset: empty mask set");
    top_k_count(1, config.k_percent);
    if (!(config.tau >= 0.0 && config.tau <= 1.0)) throw ConfigError("tau must lie in [0,1]");

    std::vector<SampleScore> out(samples.size());
    std::vector<std::exception_ptr> errors(samples.size());
    auto score_one = [&](std::size_t i) {
        try {
            const auto& s = samples[i];
            SampleScore r;
            r.id = s.id;
            r.label = s.label;
            r.full_map = pixel_error_full(model, s.image, config.masks, config.fill, config.batch);
            r.roi = roi.detect(s);
            r.roi_map = pixel_error_roi(r.full_map, r.roi, config.tau);
            r.full_score = image_score(r.full_map, config.k_percent);
            r.roi_score = image_score(r.roi_map, config.k_percent);
            out[i] = std::move(r);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    };

    int threads = config.threads > 0 ? config.threads : static_cast<int>(std::thread::hardware_concurrency());
    threads = std::clamp<int>(threads, 1, std::max<int>(1, static_cast<int>(samples.size())));
    if (threads == 1) {
        for (std::size_t i = 0; i < samples.size(); ++i) score_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < samples.size(); i = next++) score_one(i);
            });
        }
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (errors[i]) rethrow_with_id(errors[i], samples[i].id);
    }
    return out;
}

void write_error_maps(const std::filesystem::path& dir, const std::vector<SampleScore>& scores) {
    std::filesystem::create_directories(dir / "maps");
    for (const auto& s : scores) {
        write_pfm(dir / "maps" / (s.id + "_full.pfm"), s.full_map.values);
        write_pfm(dir / "maps" / (s.id + "_roi.pfm"), s.roi_map.values);
    }
}

void write_scores_csv(const std::filesystem::path& path, const std::vector<SampleScore>& scores) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "id,label,full_score,roi_score,roi_source\n";
    for (const auto& s : scores) {
        out << s.id << ',' << to_string(s.label) << ',' << format_double(s.full_score.value) << ','
            << format_double(s.roi_score.value) << ',' << to_string(s.roi.source) << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
}

std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != "id,label,full_score,roi_score,roi_source") {
        throw FormatError(path.string() + ": unexpected scores.csv header");
    }
    std::vector<ScoreRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 5) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
        try {
            rows.push_back(ScoreRow{f[0], label_from_string(f[1]), parse_double("full_score", f[2]),
                                    parse_double("roi_score", f[3]), roi_source_from_string(f[4])});
        } catch (const std::runtime_error& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

}  // namespace shiftmae
