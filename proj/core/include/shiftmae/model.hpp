#pragma once

#include "shiftmae/rng.hpp"
#include "shiftmae/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace shiftmae {

/// Architecture of the masked autoencoder: a ConvNeXt-V2-style encoder
/// (patchify stem, stages of dwconv7x7 -> LN -> 4x MLP with GELU and GRN,
/// 2x2 stride-2 downsampling between stages) followed by a per-position
/// linear decoder that emits one patch of f*f*C pixels per feature cell.
struct MaeConfig {
    int input_size = 128;
    int channels = 1;
    std::vector<int> stage_depths{2, 2, 4, 2};
    std::vector<int> stage_widths{40, 80, 160, 320};
    int stem_stride = 4;
    int mlp_ratio = 4;

    /// Product of the stem stride and the stage downsampling strides.
    int downsample_factor() const;
    int decoder_patch() const { return downsample_factor(); }
    int feature_size() const { return input_size / downsample_factor(); }

    /// Throws ConfigError when the invariants do not hold.
    void validate() const;

    std::string to_text() const;
    static MaeConfig from_text(const std::string& text);
    /// Canonical configuration used by the toy gradient checks (16x16, f = 8).
    static MaeConfig toy16();

    friend bool operator==(const MaeConfig&, const MaeConfig&) = default;
};

template <typename T>
class MaeModel {
public:
    using TensorT = BasicTensor<T>;

    /// Parameters initialised with truncated-normal(0.02) weights, zero
    /// biases, unit norm scales and zero GRN affine terms.
    MaeModel(MaeConfig config, std::uint64_t seed);

    const MaeConfig& config() const { return config_; }

    /// Xmasked [B,C,H,W] -> reconstruction R [B,C,H,W].
    TensorT forward(const TensorT& masked_input) const;

    /// Encoder features [B, width_last, H/f, W/f] (after the final norm).
    TensorT encode(const TensorT& masked_input) const;

    const std::vector<std::pair<std::string, TensorT>>& named_parameters() const { return params_; }
    std::vector<TensorT> parameters() const;
    TensorT& parameter(const std::string& name);
    const TensorT& parameter(const std::string& name) const;
    bool has_parameter(const std::string& name) const;
    std::size_t parameter_count() const;

    void zero_grad();
    void set_requires_grad(bool v);

    /// Deep copy with the same parameter values (gradients dropped).
    MaeModel clone() const;

    /// Copies values from a model of another precision with the same config.
    template <typename U>
    static MaeModel convert_from(const MaeModel<U>& other);

private:
    MaeModel() = default;
    void build(Rng& rng);
    TensorT& add_param(const std::string& name, Shape shape, int init, Rng& rng);

    MaeConfig config_;
    std::vector<std::pair<std::string, TensorT>> params_;
    std::map<std::string, std::size_t> index_;

    template <typename>
    friend class MaeModel;
};

/// Full-image reconstruction loss: mean of (R - X)^2 over every element,
/// masked and visible alike.
template <typename T>
BasicTensor<T> reconstruction_loss(const BasicTensor<T>& reconstruction, const BasicTensor<T>& target);

// ---------------------------------------------------------------------------
// Checkpoints
//
// "MAEB" | u32 version (1) | u32 n + n bytes UTF-8 config text |
// per tensor: u16 name length, name, u8 ndim, u32 dims..., f32 LE payload.

struct Checkpoint {
    MaeModel<float> model;
    std::map<std::string, std::string> metadata;  // extra key=value lines of the config block
};

constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const MaeModel<float>& model, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& metadata = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Rejects checkpoints whose architecture differs from `expected` (ConfigMismatchError).
Checkpoint load_checkpoint(const std::filesystem::path& path, const MaeConfig& expected);

extern template class MaeModel<float>;
extern template class MaeModel<double>;

}  // namespace shiftmae
