#include "shiftmae/model.hpp"

#include "shiftmae/errors.hpp"
#include "shiftmae/keyvalue.hpp"
#include "shiftmae/ops.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace shiftmae {

namespace {

enum Init { kTruncNormal = 0, kZeros = 1, kOnes = 2 };

constexpr double kInitStd = 0.02;
constexpr double kLayerNormEps = 1e-6;

std::string block_prefix(std::size_t stage, int block) {
    return "stages." + std::to_string(stage) + ".blocks." + std::to_string(block) + ".";
}

}  // namespace

int MaeConfig::downsample_factor() const {
    return stem_stride * (stage_widths.empty() ? 1 : (1 << (stage_widths.size() - 1)));
}

void MaeConfig::validate() const {
    if (input_size < 1 || channels < 1 || stem_stride < 1 || mlp_ratio < 1) {
        throw ConfigError("model: input_size, channels, stem_stride and mlp_ratio must be positive");
    }
    if (stage_widths.empty() || stage_depths.size() != stage_widths.size()) {
        throw ConfigError("model: stage_depths and stage_widths must be non-empty and of equal length");
    }
    for (std::size_t i = 0; i < stage_widths.size(); ++i) {
        if (stage_widths[i] < 1 || stage_depths[i] < 0) throw ConfigError("model: invalid stage width/depth");
    }
    const int f = downsample_factor();
    if (input_size % f != 0) {
        throw ConfigError("model: input_size " + std::to_string(input_size) + " not divisible by downsample factor " +
                          std::to_string(f));
    }
}

std::string MaeConfig::to_text() const {
    std::ostringstream os;
    os << "input_size=" << input_size << '\n'
       << "channels=" << channels << '\n'
       << "stage_depths=" << join_ints(stage_depths) << '\n'
       << "stage_widths=" << join_ints(stage_widths) << '\n'
       << "stem_stride=" << stem_stride << '\n'
       << "mlp_ratio=" << mlp_ratio << '\n';
    return os.str();
}

MaeConfig MaeConfig::from_text(const std::string& text) {
    MaeConfig c;
    const auto kv = parse_key_values(text);
    auto get = [&](const char* key) -> const std::string* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto v = get("input_size")) c.input_size = parse_int("input_size", *v);
    if (auto v = get("channels")) c.channels = parse_int("channels", *v);
    if (auto v = get("stage_depths")) c.stage_depths = parse_int_list("stage_depths", *v);
    if (auto v = get("stage_widths")) c.stage_widths = parse_int_list("stage_widths", *v);
    if (auto v = get("stem_stride")) c.stem_stride = parse_int("stem_stride", *v);
    if (auto v = get("mlp_ratio")) c.mlp_ratio = parse_int("mlp_ratio", *v);
    c.validate();
    return c;
}

MaeConfig MaeConfig::toy16() {
    MaeConfig c;
    c.input_size = 16;
    c.channels = 1;
    c.stage_depths = {1, 1};
    c.stage_widths = {4, 6};
    c.stem_stride = 4;
    c.mlp_ratio = 2;
    return c;
}

template <typename T>
MaeModel<T>::MaeModel(MaeConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    auto rng = make_rng(seed, 0x4D414542);
    build(rng);
}

template <typename T>
typename MaeModel<T>::TensorT& MaeModel<T>::add_param(const std::string& name, Shape shape, int init, Rng& rng) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name " + name);
    auto t = TensorT::zeros(std::move(shape), true);
    auto data = t.data();
    if (init == kOnes) {
        std::fill(data.begin(), data.end(), T(1));
    } else if (init == kTruncNormal) {
        std::normal_distribution<double> normal(0.0, kInitStd);
        for (auto& v : data) {
            double x = normal(rng);
            while (std::abs(x) > 2.0 * kInitStd) x = normal(rng);
            v = static_cast<T>(x);
        }
    }
    index_[name] = params_.size();
    params_.emplace_back(name, std::move(t));
    return params_.back().second;
}

template <typename T>
void MaeModel<T>::build(Rng& rng) {
    const auto& c = config_;
    const auto w0 = c.stage_widths[0];
    add_param("stem.conv.weight", {w0, c.channels, c.stem_stride, c.stem_stride}, kTruncNormal, rng);
    add_param("stem.conv.bias", {w0}, kZeros, rng);
    add_param("stem.norm.weight", {w0}, kOnes, rng);
    add_param("stem.norm.bias", {w0}, kZeros, rng);
    for (std::size_t s = 0; s < c.stage_widths.size(); ++s) {
        const auto w = c.stage_widths[s];
        if (s > 0) {
            const auto wp = c.stage_widths[s - 1];
            const auto pre = "downsample." + std::to_string(s) + ".";
            add_param(pre + "norm.weight", {wp}, kOnes, rng);
            add_param(pre + "norm.bias", {wp}, kZeros, rng);
            add_param(pre + "conv.weight", {w, wp, 2, 2}, kTruncNormal, rng);
            add_param(pre + "conv.bias", {w}, kZeros, rng);
        }
        const auto hidden = w * c.mlp_ratio;
        for (int b = 0; b < c.stage_depths[s]; ++b) {
            const auto pre = block_prefix(s, b);
            add_param(pre + "dwconv.weight", {w, 1, 7, 7}, kTruncNormal, rng);
            add_param(pre + "dwconv.bias", {w}, kZeros, rng);
            add_param(pre + "norm.weight", {w}, kOnes, rng);
            add_param(pre + "norm.bias", {w}, kZeros, rng);
            add_param(pre + "pwconv1.weight", {hidden, w, 1, 1}, kTruncNormal, rng);
            add_param(pre + "pwconv1.bias", {hidden}, kZeros, rng);
            add_param(pre + "grn.gamma", {hidden}, kZeros, rng);
            add_param(pre + "grn.beta", {hidden}, kZeros, rng);
            add_param(pre + "pwconv2.weight", {w, hidden, 1, 1}, kTruncNormal, rng);
            add_param(pre + "pwconv2.bias", {w}, kZeros, rng);
        }
    }
    const auto wl = c.stage_widths.back();
    const auto f = c.decoder_patch();
    add_param("final_norm.weight", {wl}, kOnes, rng);
    add_param("final_norm.bias", {wl}, kZeros, rng);
    add_param("decoder.weight", {std::int64_t{f} * f * c.channels, wl, 1, 1}, kTruncNormal, rng);
    add_param("decoder.bias", {std::int64_t{f} * f * c.channels}, kZeros, rng);
}

template <typename T>
typename MaeModel<T>::TensorT MaeModel<T>::encode(const TensorT& x) const {
    const auto& c = config_;
    if (!x.defined() || x.rank() != 4 || x.dim(1) != c.channels || x.dim(2) != c.input_size ||
        x.dim(3) != c.input_size) {
        throw ConfigError("model expects input [B," + std::to_string(c.channels) + "," +
                          std::to_string(c.input_size) + "," + std::to_string(c.input_size) + "], got " +
                          (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
    }
    auto p = [this](const std::string& name) -> const TensorT& { return parameter(name); };

    auto h = conv2d(x, p("stem.conv.weight"), p("stem.conv.bias"), Conv2dOptions{c.stem_stride, 0, 1});
    h = layer_norm(h, p("stem.norm.weight"), p("stem.norm.bias"), kLayerNormEps);
    for (std::size_t s = 0; s < c.stage_widths.size(); ++s) {
        if (s > 0) {
            const auto pre = "downsample." + std::to_string(s) + ".";
            h = layer_norm(h, p(pre + "norm.weight"), p(pre + "norm.bias"), kLayerNormEps);
            h = conv2d(h, p(pre + "conv.weight"), p(pre + "conv.bias"), Conv2dOptions{2, 0, 1});
        }
        for (int b = 0; b < c.stage_depths[s]; ++b) {
            const auto pre = block_prefix(s, b);
            auto y = depthwise_conv7x7(h, p(pre + "dwconv.weight"), p(pre + "dwconv.bias"));
            y = layer_norm(y, p(pre + "norm.weight"), p(pre + "norm.bias"), kLayerNormEps);
            y = conv2d(y, p(pre + "pwconv1.weight"), p(pre + "pwconv1.bias"));
            y = gelu(y);
            y = grn(y, p(pre + "grn.gamma"), p(pre + "grn.beta"));
            y = conv2d(y, p(pre + "pwconv2.weight"), p(pre + "pwconv2.bias"));
            h = add(h, y);
        }
    }
    return layer_norm(h, p("final_norm.weight"), p("final_norm.bias"), kLayerNormEps);
}

template <typename T>
typename MaeModel<T>::TensorT MaeModel<T>::forward(const TensorT& x) const {
    auto features = encode(x);
    auto patches = conv2d(features, parameter("decoder.weight"), parameter("decoder.bias"));
    return unpatchify(patches, config_.decoder_patch(), config_.channels);
}

template <typename T>
std::vector<typename MaeModel<T>::TensorT> MaeModel<T>::parameters() const {
    std::vector<TensorT> out;
    out.reserve(params_.size());
    for (const auto& [name, t] : params_) out.push_back(t);
    return out;
}

template <typename T>
typename MaeModel<T>::TensorT& MaeModel<T>::parameter(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw UnknownTensorError("unknown parameter " + name);
    return params_[it->second].second;
}

template <typename T>
const typename MaeModel<T>::TensorT& MaeModel<T>::parameter(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UnknownTensorError("unknown parameter " + name);
    return params_[it->second].second;
}

template <typename T>
bool MaeModel<T>::has_parameter(const std::string& name) const {
    return index_.count(name) != 0;
}

template <typename T>
std::size_t MaeModel<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += static_cast<std::size_t>(t.numel());
    return n;
}

template <typename T>
void MaeModel<T>::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

template <typename T>
void MaeModel<T>::set_requires_grad(bool v) {
    for (auto& [name, t] : params_) t.set_requires_grad(v);
}

template <typename T>
MaeModel<T> MaeModel<T>::clone() const {
    MaeModel m;
    m.config_ = config_;
    m.index_ = index_;
    for (const auto& [name, t] : params_) m.params_.emplace_back(name, t.clone());
    return m;
}

template <typename T>
template <typename U>
MaeModel<T> MaeModel<T>::convert_from(const MaeModel<U>& other) {
    MaeModel m;
    m.config_ = other.config_;
    m.index_ = other.index_;
    for (const auto& [name, t] : other.params_) {
        std::vector<T> values(t.data().begin(), t.data().end());
        m.params_.emplace_back(name, TensorT::from(t.shape(), std::move(values), t.requires_grad()));
    }
    return m;
}

template <typename T>
BasicTensor<T> reconstruction_loss(const BasicTensor<T>& reconstruction, const BasicTensor<T>& target) {
    return mse_loss(reconstruction, target);
}

template class MaeModel<float>;
template class MaeModel<double>;
template MaeModel<double> MaeModel<double>::convert_from(const MaeModel<float>&);
template MaeModel<float> MaeModel<float>::convert_from(const MaeModel<double>&);
template BasicTensor<float> reconstruction_loss(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> reconstruction_loss(const BasicTensor<double>&, const BasicTensor<double>&);

// ---------------------------------------------------------------------------
// Checkpoint IO

namespace {

constexpr char kMagic[4] = {'M', 'A', 'E', 'B'};

template <typename U>
void put(std::ostream& os, U v) {
    static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");
    os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
bool get(std::istream& is, U& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(U));
    return static_cast<std::size_t>(is.gcount()) == sizeof(U);
}

const std::vector<std::string> kModelKeys = {"input_size", "channels", "stage_depths",
                                             "stage_widths", "stem_stride", "mlp_ratio"};

}  // namespace

void save_checkpoint(const MaeModel<float>& model, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& metadata) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path.string());
    std::string text = model.config().to_text();
    for (const auto& [k, v] : metadata) {
        if (std::find(kModelKeys.begin(), kModelKeys.end(), k) != kModelKeys.end()) {
            throw ConfigError("checkpoint metadata key collides with model config: " + k);
        }
        text += k + "=" + v + "\n";
    }
    os.write(kMagic, 4);
    put<std::uint32_t>(os, kCheckpointVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : model.named_parameters()) {
        put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        os.write(reinterpret_cast<const char*>(t.data().data()),
                 static_cast<std::streamsize>(t.data().size() * sizeof(float)));
    }
    if (!os) throw DataError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path.string());
    char magic[4] = {};
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw BadMagicError("not a checkpoint (bad magic): " + path.string());
    }
    std::uint32_t version = 0;
    if (!get(is, version)) throw TruncatedError("truncated checkpoint header");
    if (version != kCheckpointVersion) {
        throw VersionError("unsupported checkpoint version " + std::to_string(version));
    }
    std::uint32_t text_len = 0;
    if (!get(is, text_len)) throw TruncatedError("truncated checkpoint header");
    std::string text(text_len, '\0');
    is.read(text.data(), text_len);
    if (static_cast<std::uint32_t>(is.gcount()) != text_len) throw TruncatedError("truncated checkpoint config");

    const auto kv = parse_key_values(text);
    Checkpoint ck{MaeModel<float>(MaeConfig::from_text(text), 0), {}};
    for (const auto& [k, v] : kv) {
        if (std::find(kModelKeys.begin(), kModelKeys.end(), k) == kModelKeys.end()) ck.metadata[k] = v;
    }

    std::map<std::string, bool> loaded;
    while (true) {
        std::uint16_t name_len = 0;
        is.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (is.gcount() == 0) break;  // clean end of file
        if (is.gcount() != sizeof(name_len)) throw TruncatedError("truncated tensor record");
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (is.gcount() != name_len) throw TruncatedError("truncated tensor name");
        std::uint8_t ndim = 0;
        if (!get(is, ndim)) throw TruncatedError("truncated tensor record for " + name);
        Shape shape;
        for (int i = 0; i < ndim; ++i) {
            std::uint32_t d = 0;
            if (!get(is, d)) throw TruncatedError("truncated tensor dims for " + name);
            shape.push_back(d);
        }
        if (!ck.model.has_parameter(name)) throw UnknownTensorError("unknown tensor in checkpoint: " + name);
        auto& param = ck.model.parameter(name);
        if (param.shape() != shape) {
            throw FormatError("tensor " + name + " has shape " + shape_str(shape) + ", expected " +
                              shape_str(param.shape()));
        }
        auto data = param.data();
        is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
        if (static_cast<std::size_t>(is.gcount()) != data.size() * sizeof(float)) {
            throw TruncatedError("truncated payload for tensor " + name);
        }
        loaded[name] = true;
    }
    for (const auto& [name, t] : ck.model.named_parameters()) {
        if (!loaded.count(name)) throw TruncatedError("checkpoint is missing tensor " + name);
    }
    return ck;
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const MaeConfig& expected) {
    auto ck = load_checkpoint(path);
    if (!(ck.model.config() == expected)) {
        throw ConfigMismatchError("checkpoint architecture does not match the configured model:\n" +
                                  ck.model.config().to_text() + "vs\n" + expected.to_text());
    }
    return ck;
}

}  // namespace shiftmae
