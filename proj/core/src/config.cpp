#include "shiftmae/config.hpp"

#include "shiftmae/errors.hpp"
#include "shiftmae/keyvalue.hpp"
#include "shiftmae/masking.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace shiftmae {

namespace {

struct Binding {
    std::string key;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename M>
Binding int_key(std::string key, M member) {
    return {key, [member](const RunConfig& c) { return std::to_string(std::invoke(member, c)); },
            [member, key](RunConfig& c, const std::string& v) { std::invoke(member, c) = parse_int(key, v); }};
}

template <typename M>
Binding double_key(std::string key, M member) {
    return {key, [member](const RunConfig& c) { return format_double(std::invoke(member, c)); },
            [member, key](RunConfig& c, const std::string& v) {
                std::invoke(member, c) = static_cast<std::remove_reference_t<decltype(std::invoke(member, c))>>(
                    parse_double(key, v));
            }};
}

template <typename M>
Binding bool_key(std::string key, M member) {
    return {key, [member](const RunConfig& c) { return std::string(std::invoke(member, c) ? "true" : "false"); },
            [member, key](RunConfig& c, const std::string& v) { std::invoke(member, c) = parse_bool(key, v); }};
}

#define SM_FIELD(expr) [](auto& c) -> auto& { return c.expr; }

const std::vector<Binding>& bindings() {
    static const std::vector<Binding> b = [] {
        std::vector<Binding> v;
        v.push_back(int_key("input_size", SM_FIELD(model.input_size)));
        v.push_back(int_key("channels", SM_FIELD(model.channels)));
        v.push_back({"stage_depths", [](const RunConfig& c) { return join_ints(c.model.stage_depths); },
                     [](RunConfig& c, const std::string& s) { c.model.stage_depths = parse_int_list("stage_depths", s); }});
        v.push_back({"stage_widths", [](const RunConfig& c) { return join_ints(c.model.stage_widths); },
                     [](RunConfig& c, const std::string& s) { c.model.stage_widths = parse_int_list("stage_widths", s); }});
        v.push_back(int_key("stem_stride", SM_FIELD(model.stem_stride)));
        v.push_back(int_key("mlp_ratio", SM_FIELD(model.mlp_ratio)));

        v.push_back(int_key("square", SM_FIELD(square)));
        v.push_back(int_key("train_stride", SM_FIELD(train_stride)));
        v.push_back(int_key("test_stride", SM_FIELD(test_stride)));
        v.push_back(double_key("fill", SM_FIELD(fill)));
        v.push_back(bool_key("train_masking", SM_FIELD(train_masking)));

        v.push_back(double_key("tau", SM_FIELD(tau)));
        v.push_back(double_key("k_percent", SM_FIELD(k_percent)));
        v.push_back({"roi_source", [](const RunConfig& c) { return to_string(c.roi_source); },
                     [](RunConfig& c, const std::string& s) { c.roi_source = roi_source_from_string(s); }});
        v.push_back({"roi_sidecar", [](const RunConfig& c) { return c.roi_sidecar; },
                     [](RunConfig& c, const std::string& s) { c.roi_sidecar = s; }});
        v.push_back(double_key("naive_quantile", SM_FIELD(naive_quantile)));
        v.push_back({"pixel_auc_mode",
                     [](const RunConfig& c) {
                         return std::string(c.pixel_auc_mode == PixelAucMode::pooled ? "pooled" : "averaged");
                     },
                     [](RunConfig& c, const std::string& s) {
                         if (s == "pooled") c.pixel_auc_mode = PixelAucMode::pooled;
                         else if (s == "averaged") c.pixel_auc_mode = PixelAucMode::averaged;
                         else throw ConfigError("pixel_auc_mode: expected pooled or averaged, got '" + s + "'");
                     }});
        v.push_back(int_key("infer_batch", SM_FIELD(infer_batch)));

        v.push_back(double_key("lr", SM_FIELD(adam.lr)));
        v.push_back(double_key("beta1", SM_FIELD(adam.beta1)));
        v.push_back(double_key("beta2", SM_FIELD(adam.beta2)));
        v.push_back(double_key("adam_eps", SM_FIELD(adam.eps)));
        v.push_back(double_key("min_lr_ratio", SM_FIELD(min_lr_ratio)));
        v.push_back(int_key("warmup_steps", SM_FIELD(warmup_steps)));
        v.push_back(int_key("batch_size", SM_FIELD(batch_size)));
        v.push_back(int_key("steps", SM_FIELD(steps)));
        v.push_back(int_key("val_every", SM_FIELD(val_every)));
        v.push_back(bool_key("augment", SM_FIELD(augment)));
        v.push_back(double_key("aug.p_rotate", SM_FIELD(augmentation.p_rotate)));
        v.push_back(double_key("aug.max_rotate_deg", SM_FIELD(augmentation.max_rotate_deg)));
        v.push_back(double_key("aug.p_scale", SM_FIELD(augmentation.p_scale)));
        v.push_back(double_key("aug.scale_min", SM_FIELD(augmentation.scale_min)));
        v.push_back(double_key("aug.scale_max", SM_FIELD(augmentation.scale_max)));
        v.push_back(double_key("aug.p_crop", SM_FIELD(augmentation.p_crop)));
        v.push_back(double_key("aug.crop_min_area", SM_FIELD(augmentation.crop_min_area)));
        v.push_back(double_key("aug.p_shift", SM_FIELD(augmentation.p_shift)));
        v.push_back(double_key("aug.max_shift", SM_FIELD(augmentation.max_shift)));
        v.push_back(double_key("aug.p_reflect_padding", SM_FIELD(augmentation.p_reflect_padding)));

        v.push_back({"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
                     [](RunConfig& c, const std::string& s) {
                         const int x = parse_int("seed", s);
                         if (x < 0) throw ConfigError("seed must be >= 0");
                         c.seed = static_cast<std::uint64_t>(x);
                     }});
        v.push_back(int_key("gen_count", SM_FIELD(gen_count)));
        v.push_back(int_key("n_train", SM_FIELD(n_train)));
        v.push_back(int_key("n_val", SM_FIELD(n_val)));
        v.push_back(int_key("n_test_normal", SM_FIELD(n_test_normal)));
        v.push_back(int_key("n_test_avulsion", SM_FIELD(n_test_avulsion)));
        v.push_back(int_key("phantom.artifact_max", SM_FIELD(phantom.artifact_max)));
        v.push_back(double_key("phantom.speckle", SM_FIELD(phantom.speckle)));
        v.push_back(int_key("phantom.gap_width_min", SM_FIELD(phantom.gap_width_min)));
        v.push_back(int_key("phantom.gap_width_max", SM_FIELD(phantom.gap_width_max)));
        v.push_back(int_key("phantom.fragment_length_min", SM_FIELD(phantom.fragment_length_min)));
        v.push_back(int_key("phantom.fragment_length_max", SM_FIELD(phantom.fragment_length_max)));
        v.push_back(int_key("phantom.gt_dilation", SM_FIELD(phantom.gt_dilation)));
        v.push_back(int_key("threads", SM_FIELD(threads)));
        return v;
    }();
    return b;
}

#undef SM_FIELD

void check_probability(double p, const char* key) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(key) + " must lie in [0,1]");
}

}  // namespace

void RunConfig::validate() const {
    model.validate();
    if (phantom.size != model.input_size) throw ConfigError("phantom size must equal input_size");
    phantom.validate();
    // The mask families must be constructible at the model resolution.
    enumerate_mask_set(model.input_size, model.input_size, square, train_stride);
    enumerate_mask_set(model.input_size, model.input_size, square, test_stride);
    if (!(fill >= 0.0f && fill <= 1.0f)) throw ConfigError("fill must lie in [0,1]");
    check_probability(tau, "tau");
    if (!(k_percent > 0.0 && k_percent <= 100.0)) throw ConfigError("k_percent must lie in (0,100]");
    if (roi_source == RoiSource::sidecar && roi_sidecar.empty()) {
        throw ConfigError("roi_source=sidecar requires roi_sidecar");
    }
    check_probability(naive_quantile, "naive_quantile");
    if (infer_batch < 1) throw ConfigError("infer_batch must be >= 1");
    if (!(adam.lr >= 0.0) || !std::isfinite(adam.lr)) throw ConfigError("lr must be finite and >= 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
        throw ConfigError("Adam betas must lie in [0,1)");
    }
    if (!(adam.eps > 0.0)) throw ConfigError("adam_eps must be > 0");
    check_probability(min_lr_ratio, "min_lr_ratio");
    if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (steps < 0) throw ConfigError("steps must be >= 0");
    if (val_every < 1) throw ConfigError("val_every must be >= 1");
    const auto& a = augmentation;
    for (double p : {a.p_rotate, a.p_scale, a.p_crop, a.p_shift, a.p_reflect_padding}) check_probability(p, "aug.p_*");
    if (!(a.scale_min > 0.0 && a.scale_min <= a.scale_max)) throw ConfigError("aug scale range invalid");
    if (!(a.crop_min_area > 0.0 && a.crop_min_area <= 1.0)) throw ConfigError("aug.crop_min_area must lie in (0,1]");
    if (a.max_shift < 0.0 || a.max_rotate_deg < 0.0) throw ConfigError("aug magnitudes must be >= 0");
    if (gen_count < 0) throw ConfigError("gen_count must be >= 0");
    for (int n : {n_train, n_val, n_test_normal, n_test_avulsion}) {
        if (n < -1) throw ConfigError("split counts must be >= 0 (or -1 to derive from gen_count)");
    }
    if (threads < 0) throw ConfigError("threads must be >= 0");
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    for (const auto& b : bindings()) os << b.key << '=' << b.get(*this) << '\n';
    return os.str();
}

void RunConfig::apply(const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) {
        bool found = false;
        for (const auto& b : bindings()) {
            if (b.key == k) {
                b.set(*this, v);
                found = true;
                break;
            }
        }
        if (!found) throw ConfigError("unknown config key '" + k + "'");
    }
    phantom.size = model.input_size;
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig c;
    c.apply(parse_key_values(text));
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

void RunConfig::save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_text();
}

SplitCounts resolve_split(const RunConfig& c) {
    SplitCounts s;
    const int n = c.gen_count;
    const int train = static_cast<int>(std::lround(0.70 * n));
    const int val = static_cast<int>(std::lround(0.15 * n));
    const int test = std::max(0, n - train - val);
    s.train = c.n_train >= 0 ? c.n_train : train;
    s.val = c.n_val >= 0 ? c.n_val : val;
    s.test_normal = c.n_test_normal >= 0 ? c.n_test_normal : test - test / 2;
    s.test_avulsion = c.n_test_avulsion >= 0 ? c.n_test_avulsion : test / 2;
    return s;
}

}  // namespace shiftmae
