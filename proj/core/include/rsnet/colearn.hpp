#pragma once

#include "rsnet/training.hpp"

namespace rsnet {

namespace nn {

/// Scalar terrain-property head S_G: 3x3 conv to 32 channels, pool to the
/// head grid, then two affine layers down to a single value.
template <typename T>
class PropertyHead {
 public:
  PropertyHead(const ModelConfig& config, Rng& rng)
      : conv_(config.fused_channels, 32, 3, 1, 1, true, rng),
        pool_(config.pool_h, config.pool_w),
        fc1_(32 * config.pool_h * config.pool_w, 64, rng),
        fc2_(64, 1, rng) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> h = act1_.forward(conv_.forward(x, mode), mode);
    h = pool_.forward(h, mode);
    pooled_shape_ = h.shape();
    h = h.reshaped({h.dim(0), h.dim(1) * h.dim(2) * h.dim(3)});
    h = act2_.forward(fc1_.forward(h, mode), mode);
    return fc2_.forward(h, mode);  // (N, 1)
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = fc1_.backward(act2_.backward(fc2_.backward(gy)));
    g = pool_.backward(g.reshaped(pooled_shape_));
    return conv_.backward(act1_.backward(g));
  }

  void collect(ParamRefs<T>& out, const std::string& prefix) {
    conv_.collect(out, prefix + ".conv");
    fc1_.collect(out, prefix + ".fc1");
    fc2_.collect(out, prefix + ".fc2");
  }

  void zero_grad() {
    conv_.zero_grad();
    fc1_.zero_grad();
    fc2_.zero_grad();
  }

 private:
  Conv2d<T> conv_;
  Act<T> act1_, act2_;
  AdaptiveAvgPool2d<T> pool_;
  Linear<T> fc1_, fc2_;
  std::vector<std::size_t> pooled_shape_;
};

}  // namespace nn

/// Shared trunk, two composite heads: S_F predicts the spectral profile,
/// S_G a scalar property. One backbone evaluation feeds both.
template <typename T>
class CoLearnNet {
 public:
  explicit CoLearnNet(const ModelConfig& config)
      : config_(ensure_valid(config)),
        init_rng_(config.seed),
        dropout_rng_(config.seed ^ 0x9e3779b97f4a7c15ull),
        backbone_(config_, init_rng_),
        spectral_head_(config_, init_rng_),
        property_head_(config_, init_rng_) {}

  CoLearnNet(const CoLearnNet&) = delete;
  CoLearnNet& operator=(const CoLearnNet&) = delete;

  struct Output {
    Tensor<T> profiles;    // (N, n_bins)
    Tensor<T> properties;  // (N, 1)
  };

  Output forward(const Tensor<T>& x, nn::Mode mode) {
    Tensor<T> fused = backbone_.forward(x, mode);
    if (capture_head_inputs_) {
      captured_sf_input_ = fused;
      captured_sg_input_ = fused;
    }
    return {spectral_head_.forward(fused, mode, dropout_rng_),
            property_head_.forward(fused, mode)};
  }

  Tensor<T> backward(const Tensor<T>& gprofiles, const Tensor<T>& gproperties) {
    Tensor<T> gfused = spectral_head_.backward(gprofiles);
    nn::detail::add_into(gfused, property_head_.backward(gproperties));
    return backbone_.backward(gfused);
  }

  nn::ParamRefs<T> params() {
    nn::ParamRefs<T> refs;
    backbone_.collect(refs, "backbone");
    spectral_head_.collect(refs, "head");
    property_head_.collect(refs, "property_head");
    return refs;
  }

  void zero_grad() {
    backbone_.zero_grad();
    spectral_head_.zero_grad();
    property_head_.zero_grad();
  }

  /// Instrumentation for the shared-trunk consistency check.
  void capture_head_inputs(bool on) { capture_head_inputs_ = on; }
  const Tensor<T>& captured_sf_input() const { return captured_sf_input_; }
  const Tensor<T>& captured_sg_input() const { return captured_sg_input_; }

  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  Rng init_rng_;
  Rng dropout_rng_;
  nn::Backbone<T> backbone_;
  nn::SpectralHead<T> spectral_head_;
  nn::PropertyHead<T> property_head_;
  bool capture_head_inputs_ = false;
  Tensor<T> captured_sf_input_, captured_sg_input_;
};

/// mse(spectral) + lambda * squared property error.
double joint_loss(const SpectralProfile& pred_profile, double pred_property,
                  const SpectralProfile& target_profile, double target_property,
                  double lambda = 1.0);

/// Joint Adam training; every record needs a property value (MissingProperty
/// names the offending rows otherwise).
TrainResult train_colearn(const ModelConfig& model_config, const LoadedDataset& train_data,
                          const LoadedDataset& val_data, const TrainConfig& train_config,
                          double lambda = 1.0, const Provenance& provenance = {});

/// Evaluation with property_rmse filled in.
EvalReport evaluate_colearn(const Checkpoint& ckpt, const LoadedDataset& data);

std::unique_ptr<CoLearnNet<float>> colearn_from_checkpoint(const Checkpoint& ckpt);

/// Single-patch co-learning inference.
std::pair<SpectralProfile, double> colearn_forward(CoLearnNet<float>& model,
                                                   const ImagePatch& patch,
                                                   const WavelengthAxis& axis = WavelengthAxis{});

}  // namespace rsnet
