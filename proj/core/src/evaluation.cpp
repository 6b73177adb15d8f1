#include "shiftmae/evaluation.hpp"

#include "shiftmae/errors.hpp"
#include "shiftmae/keyvalue.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>

namespace shiftmae {

namespace {

std::vector<std::size_t> ascending_order(std::span<const ScoredLabel> s) {
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a].score < s[b].score; });
    return order;
}

void count_classes(std::span<const ScoredLabel> s, std::size_t& np, std::size_t& nn) {
    np = 0;
    for (const auto& e : s) {
        if (std::isnan(e.score)) throw NumericError("auc: NaN score");
        np += e.positive ? 1 : 0;
    }
    nn = s.size() - np;
    if (np == 0 || nn == 0) throw DataError("auc is undefined without both positive and negative labels");
}

double mann_whitney(std::span<const ScoredLabel> s, const std::vector<std::size_t>& order, std::size_t np,
                    std::size_t nn) {
    // Midrank of a tie group spanning 1-based ranks [i+1, j] is (i+1+j)/2.
    long double rank_sum = 0.0L;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        std::size_t pos = 0;
        while (j < order.size() && s[order[j]].score == s[order[i]].score) {
            pos += s[order[j]].positive ? 1 : 0;
            ++j;
        }
        rank_sum += static_cast<long double>(pos) * (static_cast<long double>(i + 1 + j) / 2.0L);
        i = j;
    }
    const long double u = rank_sum - static_cast<long double>(np) * (np + 1) / 2.0L;
    return static_cast<double>(u / (static_cast<long double>(np) * static_cast<long double>(nn)));
}

}  // namespace

double auc_value(std::span<const ScoredLabel> scores) {
    std::size_t np = 0, nn = 0;
    count_classes(scores, np, nn);
    return mann_whitney(scores, ascending_order(scores), np, nn);
}

RocResult auc(std::span<const ScoredLabel> scores) {
    RocResult r;
    count_classes(scores, r.n_positive, r.n_negative);
    const auto order = ascending_order(scores);
    r.auc = mann_whitney(scores, order, r.n_positive, r.n_negative);

    r.thresholds.push_back(std::numeric_limits<double>::infinity());
    r.tpr.push_back(0.0);
    r.fpr.push_back(0.0);
    std::size_t tp = 0, fp = 0;
    for (std::size_t k = order.size(); k > 0;) {
        const double t = scores[order[k - 1]].score;
        while (k > 0 && scores[order[k - 1]].score == t) {
            (scores[order[k - 1]].positive ? tp : fp) += 1;
            --k;
        }
        r.thresholds.push_back(t);
        r.tpr.push_back(static_cast<double>(tp) / static_cast<double>(r.n_positive));
        r.fpr.push_back(static_cast<double>(fp) / static_cast<double>(r.n_negative));
    }
    return r;
}

RocResult pixel_auc(const std::vector<Image>& maps, const std::vector<BinaryMask>& gts, PixelAucMode mode) {
    if (maps.size() != gts.size()) throw DataError("pixel_auc: map and ground-truth counts differ");
    std::size_t total = 0;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        if (maps[i].height != gts[i].height || maps[i].width != gts[i].width) {
            throw DataError("pixel_auc: map " + std::to_string(i) + " and its ground truth differ in size");
        }
        total += maps[i].size();
    }
    const bool any_positive = std::any_of(gts.begin(), gts.end(), [](const BinaryMask& g) {
        return std::any_of(g.data.begin(), g.data.end(), [](std::uint8_t v) { return v != 0; });
    });
    if (!any_positive) throw DataError("pixel_auc: no positive pixels in the ground truth");

    if (mode == PixelAucMode::pooled) {
        std::vector<ScoredLabel> pooled;
        pooled.reserve(total);
        for (std::size_t i = 0; i < maps.size(); ++i) {
            for (std::size_t p = 0; p < maps[i].size(); ++p) pooled.push_back({maps[i].data[p], gts[i].data[p] != 0});
        }
        return auc(pooled);
    }

    RocResult r;
    double sum = 0.0;
    std::size_t used = 0;
    std::vector<ScoredLabel> one;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        one.clear();
        std::size_t pos = 0;
        for (std::size_t p = 0; p < maps[i].size(); ++p) {
            one.push_back({maps[i].data[p], gts[i].data[p] != 0});
            pos += gts[i].data[p] != 0;
        }
        r.n_positive += pos;
        r.n_negative += maps[i].size() - pos;
        if (pos == 0 || pos == maps[i].size()) continue;
        sum += auc_value(one);
        ++used;
    }
    if (used == 0) throw DataError("pixel_auc: no image contains both classes");
    r.auc = sum / static_cast<double>(used);
    return r;
}

RocResult image_auc(std::span<const double> scores, std::span<const bool> positive) {
    if (scores.size() != positive.size()) throw DataError("image_auc: score and label counts differ");
    std::vector<ScoredLabel> v(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) v[i] = {scores[i], positive[i]};
    return auc(v);
}

void write_roc_csv(const std::filesystem::path& path, const RocResult& roc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "threshold,fpr,tpr\n";
    for (std::size_t i = 0; i < roc.thresholds.size(); ++i) {
        out << format_double(roc.thresholds[i]) << ',' << format_double(roc.fpr[i]) << ','
            << format_double(roc.tpr[i]) << '\n';
    }
}

std::vector<MetricsRow> evaluate_scores(const std::string& variant, const std::vector<SampleScore>& scores,
                                        const std::vector<BinaryMask>& gts, PixelAucMode mode) {
    if (scores.size() != gts.size()) throw DataError("evaluate_scores: one ground-truth mask per sample required");
    std::vector<MetricsRow> rows;
    for (const auto kind : {ErrorKind::full, ErrorKind::roi}) {
        std::vector<Image> maps;
        std::vector<double> image_scores;
        std::unique_ptr<bool[]> labels(new bool[scores.size()]);
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const auto& s = scores[i];
            maps.push_back(kind == ErrorKind::full ? s.full_map.values : s.roi_map.values);
            image_scores.push_back(kind == ErrorKind::full ? s.full_score.value : s.roi_score.value);
            labels[i] = s.label == Label::avulsion;
        }
        MetricsRow row;
        row.variant = variant;
        row.setting = to_string(kind);
        row.pixel_auc = pixel_auc(maps, gts, mode).auc;
        row.image_auc = image_auc(image_scores, std::span<const bool>(labels.get(), scores.size())).auc;
        rows.push_back(row);
    }
    return rows;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "variant,setting,pixel_auc,image_auc\n";
    for (const auto& r : rows) {
        out << r.variant << ',' << r.setting << ',' << format_double(r.pixel_auc) << ',' << format_double(r.image_auc)
            << '\n';
    }
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != "variant,setting,pixel_auc,image_auc") {
        throw FormatError(path.string() + ": unexpected metrics.csv header");
    }
    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 4) throw FormatError(path.string() + ": expected 4 fields");
        rows.push_back({f[0], f[1], parse_double("pixel_auc", f[2]), parse_double("image_auc", f[3])});
    }
    return rows;
}

}  // namespace shiftmae
