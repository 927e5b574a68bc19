#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rsnet/types.hpp"

namespace rsnet {

/// Parsed dataset manifest: rows, class table, axis and the raw photon-count
/// divisor shared by every spectrum file.
struct DatasetIndex {
  std::vector<SampleRecord> records;
  std::vector<MaterialClass> classes;
  WavelengthAxis axis;
  double norm_constant = 1.0;

  const MaterialClass& class_by_name(const std::string& name) const;
};

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

/// Synthetic oracle dataset: per-class Gaussian-mixture templates, a
/// brightness knob that shifts whole profiles in y, box-response RGB
/// rendering, and an affine-in-class friction property.
struct SynthConfig {
  std::size_t n_classes = 6;
  std::size_t samples_per_class = 200;
  std::size_t n_gaussians_per_template = 3;
  double brightness_lo = 0.7;
  double brightness_hi = 1.0;
  double noise_sigma = 0.0;
  std::size_t patch_h = 64;
  std::size_t patch_w = 64;
  std::uint64_t seed = 0;
  WavelengthAxis axis;
  double texture_sigma = 0.02;
  bool with_property = true;
  /// Extra classes blended from two base templates: T = 0.5 (T_a + T_b).
  std::vector<std::pair<std::size_t, std::size_t>> blends;

  void validate() const;
};

/// Everything about one generated dataset the oracle tests need: the class
/// templates (sampled on the axis), base colors, and the manifest index.
struct SynthDataset {
  DatasetIndex index;
  std::vector<std::vector<float>> templates;   // per class, length n_bins
  std::vector<std::array<double, 3>> colors;   // per class, base RGB at b=1
  std::vector<double> friction;                // per class, noise-free value
};

/// Visible sub-range partitioned into three non-overlapping boxes; the RGB
/// value of a profile is its mean over each box's bins (R, G, B order).
struct BoxResponses {
  double blue_lo = 400.0, blue_hi = 500.0;
  double green_lo = 500.0, green_hi = 600.0;
  double red_lo = 600.0, red_hi = 700.0;

  std::array<double, 3> rgb_of(std::span<const float> profile, const WavelengthAxis& axis) const;
};

/// Manifest format:
///   # axis: <lambda_min>,<lambda_max>,<n_bins>
///   # norm: <norm_constant>
///   image_path,spectrum_path,label,condition,property
/// Paths are relative to the manifest file; property may be empty.
DatasetIndex load_manifest(const std::filesystem::path& manifest_path);

struct NormalizedProfile {
  SpectralProfile profile;
  std::size_t clipped = 0;
};

/// raw / norm_constant, clipped into [0, 1]; reports how many bins clipped.
NormalizedProfile normalize_profile(const std::vector<float>& raw, double norm_constant,
                                    const WavelengthAxis& axis);

/// 8-bit RGB frame as read from disk.
struct ImageU8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // H*W*3, row-major, interleaved
};

/// Window centered at (row, col); throws OutOfBounds if it leaves the frame.
ImagePatch extract_patch(const ImageU8& frame, std::pair<std::size_t, std::size_t> center,
                         std::pair<std::size_t, std::size_t> size);

/// Writes images, spectra and the manifest under out_dir and returns the
/// dataset plus its oracle quantities. Pure function of the config.
SynthDataset synth_generate(const SynthConfig& config, const std::filesystem::path& out_dir);

/// Stratified three-way split. Holdout classes appear only in the test
/// split; all splits keep the full class table so class ids stay aligned.
struct SplitResult {
  DatasetIndex train;
  DatasetIndex val;
  DatasetIndex test;
};
SplitResult split(const DatasetIndex& index, const SplitRatios& ratios, std::uint64_t seed,
                  const std::vector<std::string>& holdout_classes = {});

/// Fully materialized samples for training/evaluation.
struct LoadedDataset {
  Tensor<float> images;    // (N, 3, H, W)
  Tensor<float> profiles;  // (N, n_bins)
  std::vector<int> labels;
  std::vector<std::optional<double>> properties;
  std::vector<MaterialClass> classes;
  WavelengthAxis axis;

  std::size_t size() const { return labels.size(); }
};

/// Loads every record; throws DataError naming the offending row on failure.
LoadedDataset load_dataset(const DatasetIndex& index);

/// Two-column spectrum file (wavelength_nm, normalized_count).
std::vector<float> read_spectrum_csv(const std::filesystem::path& path,
                                     const WavelengthAxis& axis);
void write_spectrum_csv(const std::filesystem::path& path, std::span<const float> values,
                        const WavelengthAxis& axis);

}  // namespace rsnet
