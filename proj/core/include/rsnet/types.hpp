#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rsnet/tensor.hpp"

namespace rsnet {

/// Linear wavelength grid carried as metadata next to every profile.
/// The network itself never consumes wavelengths; plots and spectrum files do.
struct WavelengthAxis {
  double lambda_min_nm = 350.0;
  double lambda_max_nm = 1000.0;
  std::size_t n_bins = 1550;

  double bin_center(std::size_t i) const {
    return lambda_min_nm +
           (lambda_max_nm - lambda_min_nm) * static_cast<double>(i) /
               static_cast<double>(n_bins - 1);
  }

  void validate() const;
  bool operator==(const WavelengthAxis&) const = default;
};

/// Fixed-length vector of normalized photon counts over a wavelength axis.
/// Ground truth lives in [0, 1]; predictions are unconstrained finite reals.
class SpectralProfile {
 public:
  static SpectralProfile ground_truth(std::vector<float> values, WavelengthAxis axis);
  static SpectralProfile prediction(std::vector<float> values, WavelengthAxis axis);

  const std::vector<float>& values() const { return values_; }
  const WavelengthAxis& axis() const { return axis_; }
  std::size_t n_bins() const { return values_.size(); }

 private:
  SpectralProfile(std::vector<float> values, WavelengthAxis axis)
      : values_(std::move(values)), axis_(axis) {}

  std::vector<float> values_;
  WavelengthAxis axis_;
};

/// RGB patch with channel-major storage (3, H, W), every value in [0, 1].
class ImagePatch {
 public:
  /// Takes a (3, H, W) tensor; validates range, finiteness and minimum size.
  explicit ImagePatch(Tensor<float> chw);

  std::size_t height() const { return chw_.dim(1); }
  std::size_t width() const { return chw_.dim(2); }
  const Tensor<float>& chw() const { return chw_; }

  static constexpr std::size_t kMinSide = 32;

 private:
  Tensor<float> chw_;
};

struct MaterialClass {
  int id = 0;
  std::string name;

  bool operator==(const MaterialClass&) const = default;
};

enum class BackboneMode { compact, pretrained_projected };
enum class TransitionPool { average, max };

/// Architecture hyperparameters. The compact mode reproduces every stated
/// layer width from scratch; pretrained-projected keeps the reference
/// DenseNet169 front end and projects its 640 fused channels down to 160.
struct ModelConfig {
  BackboneMode backbone_mode = BackboneMode::compact;
  std::size_t stem_channels = 16;
  std::size_t growth_rate = 8;
  std::size_t block1_layers = 6;
  std::size_t block2_layers = 12;
  double compression = 0.5;
  std::size_t fused_channels = 160;
  std::size_t pool_h = 12;
  std::size_t pool_w = 18;
  std::size_t n_bins = 1550;
  std::uint64_t seed = 0;
  TransitionPool transition_pool = TransitionPool::average;
  double head_dropout = 0.0;

  static ModelConfig compact();
  static ModelConfig pretrained_projected();

  /// Head flatten width: 9 channels over the pooled grid.
  std::size_t flatten_width() const { return 9 * pool_h * pool_w; }

  /// Channels of the first transition output in compact arithmetic.
  std::size_t compact_x8_channels() const {
    return static_cast<std::size_t>(
        compression * static_cast<double>(stem_channels + block1_layers * growth_rate));
  }

  bool operator==(const ModelConfig&) const = default;
};

/// Returns the list of violated constraints; empty means the config is valid.
std::vector<std::string> validate_config(const ModelConfig& config);

/// Returns the config unchanged or throws ConstraintViolation naming every
/// failed constraint.
ModelConfig ensure_valid(const ModelConfig& config);

/// One dataset row: an image patch on disk, its spectrum, label and
/// acquisition condition. property_value is present in co-learning datasets.
struct SampleRecord {
  std::filesystem::path image_path;
  std::filesystem::path spectrum_path;
  MaterialClass label;
  std::string condition;
  std::optional<double> property_value;
};

const char* to_string(BackboneMode mode);
const char* to_string(TransitionPool pool);
BackboneMode backbone_mode_from_string(const std::string& s);
TransitionPool transition_pool_from_string(const std::string& s);

}  // namespace rsnet
