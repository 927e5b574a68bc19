#include "rsnet/types.hpp"

#include <cmath>
#include <sstream>

namespace rsnet {

void WavelengthAxis::validate() const {
  if (!(lambda_min_nm < lambda_max_nm)) {
    throw ConstraintViolation("wavelength axis requires lambda_min < lambda_max");
  }
  if (n_bins < 2) {
    throw ConstraintViolation("wavelength axis requires n_bins >= 2");
  }
}

namespace {

std::vector<float> checked_profile(std::vector<float> values, const WavelengthAxis& axis,
                                   bool bounded) {
  axis.validate();
  if (values.size() != axis.n_bins) {
    throw LengthMismatch("profile has " + std::to_string(values.size()) +
                         " bins, axis declares " + std::to_string(axis.n_bins));
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw ConstraintViolation("profile contains NaN/Inf");
    if (bounded && (v < 0.0f || v > 1.0f)) {
      throw ConstraintViolation("ground-truth profile value " + std::to_string(v) +
                                " outside [0, 1]");
    }
  }
  return values;
}

}  // namespace

SpectralProfile SpectralProfile::ground_truth(std::vector<float> values, WavelengthAxis axis) {
  return SpectralProfile(checked_profile(std::move(values), axis, true), axis);
}

SpectralProfile SpectralProfile::prediction(std::vector<float> values, WavelengthAxis axis) {
  return SpectralProfile(checked_profile(std::move(values), axis, false), axis);
}

ImagePatch::ImagePatch(Tensor<float> chw) : chw_(std::move(chw)) {
  if (chw_.rank() != 3 || chw_.dim(0) != 3) {
    throw ConstraintViolation("image patch must be a (3, H, W) tensor");
  }
  if (chw_.dim(1) < kMinSide || chw_.dim(2) < kMinSide) {
    throw TooSmallInput("patch " + std::to_string(chw_.dim(1)) + "x" +
                        std::to_string(chw_.dim(2)) + " is below " +
                        std::to_string(kMinSide) + "px per side");
  }
  for (std::size_t i = 0; i < chw_.size(); ++i) {
    const float v = chw_[i];
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ConstraintViolation("patch pixel " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

ModelConfig ModelConfig::compact() { return ModelConfig{}; }

ModelConfig ModelConfig::pretrained_projected() {
  ModelConfig config;
  config.backbone_mode = BackboneMode::pretrained_projected;
  config.stem_channels = 64;
  config.growth_rate = 32;
  return config;
}

std::vector<std::string> validate_config(const ModelConfig& c) {
  std::vector<std::string> violations;
  auto require = [&](bool ok, const std::string& what) {
    if (!ok) violations.push_back(what);
  };

  require(c.stem_channels >= 1, "stem_channels >= 1");
  require(c.growth_rate >= 1, "growth_rate >= 1");
  require(c.n_bins >= 2, "n_bins >= 2");
  require(c.pool_h >= 1 && c.pool_w >= 1, "head_pool_grid >= 1x1");
  require(c.compression > 0.0 && c.compression <= 1.0, "compression in (0, 1]");
  require(c.head_dropout >= 0.0 && c.head_dropout < 1.0, "head_dropout in [0, 1)");
  require(c.block1_layers == 6, "block1_layers == 6");
  require(c.block2_layers == 12, "block2_layers == 12");
  require(c.flatten_width() == 9 * c.pool_h * c.pool_w,
          "flatten width == 9 * pool_h * pool_w");

  if (c.compression > 0.0 && c.compression <= 1.0 && c.stem_channels >= 1 &&
      c.growth_rate >= 1) {
    const std::size_t x8 = c.compact_x8_channels();
    if (c.backbone_mode == BackboneMode::compact) {
      require(x8 >= 1, "compressed transition channels >= 1");
      const std::size_t fused = x8 + x8 + c.block2_layers * c.growth_rate;
      if (fused != c.fused_channels) {
        std::ostringstream os;
        os << "compact fused-channel arithmetic: floor(" << c.compression << "*("
           << c.stem_channels << "+" << c.block1_layers << "*" << c.growth_rate
           << ")) + [" << x8 << "+" << c.block2_layers << "*" << c.growth_rate
           << "] = " << fused << " != fused_channels " << c.fused_channels;
        violations.push_back(os.str());
      }
    } else {
      require(c.stem_channels == 64, "pretrained-projected stem_channels == 64");
      require(c.growth_rate == 32, "pretrained-projected growth_rate == 32");
      require(c.compression == 0.5, "pretrained-projected compression == 0.5");
      require(c.fused_channels >= 1, "projection output channels >= 1");
    }
  }
  return violations;
}

ModelConfig ensure_valid(const ModelConfig& config) {
  const auto violations = validate_config(config);
  if (!violations.empty()) {
    std::string msg = "model config rejected:";
    for (const auto& v : violations) msg += "\n  - " + v;
    throw ConstraintViolation(msg);
  }
  return config;
}

const char* to_string(BackboneMode mode) {
  return mode == BackboneMode::compact ? "compact" : "pretrained-projected";
}

const char* to_string(TransitionPool pool) {
  return pool == TransitionPool::average ? "average" : "max";
}

BackboneMode backbone_mode_from_string(const std::string& s) {
  if (s == "compact") return BackboneMode::compact;
  if (s == "pretrained-projected") return BackboneMode::pretrained_projected;
  throw ConstraintViolation("unknown backbone mode '" + s + "'");
}

TransitionPool transition_pool_from_string(const std::string& s) {
  if (s == "average") return TransitionPool::average;
  if (s == "max") return TransitionPool::max;
  throw ConstraintViolation("unknown transition pool '" + s + "'");
}

}  // namespace rsnet
