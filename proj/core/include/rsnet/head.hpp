#pragma once

#include <map>
#include <string>

#include "rsnet/backbone.hpp"

namespace rsnet {

namespace nn {

/// Spectral regression head: 3x3 conv to 64 channels, 3x3 conv to 9,
/// adaptive average pool to the configured grid, then 1944 -> 1550 -> 1550
/// affine layers with a linear output.
template <typename T>
class SpectralHead {
 public:
  SpectralHead(const ModelConfig& config, Rng& rng, Activation activation = Activation::relu)
      : fused_channels_(config.fused_channels),
        conv1_(config.fused_channels, 64, 3, 1, 1, true, rng),
        conv2_(64, 9, 3, 1, 1, true, rng),
        pool_(config.pool_h, config.pool_w),
        fc1_(config.flatten_width(), config.n_bins, rng),
        fc2_(config.n_bins, config.n_bins, rng),
        act1_(activation),
        act2_(activation),
        act3_(activation),
        dropout_(config.head_dropout) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng& dropout_rng) {
    if (x.dim(1) != fused_channels_) {
      throw ChannelMismatch("head expects " + std::to_string(fused_channels_) +
                            " fused channels, got " + std::to_string(x.dim(1)));
    }
    Tensor<T> h = act1_.forward(conv1_.forward(x, mode), mode);
    h = act2_.forward(conv2_.forward(h, mode), mode);
    h = pool_.forward(h, mode);
    pooled_shape_ = h.shape();
    h = h.reshaped({h.dim(0), h.dim(1) * h.dim(2) * h.dim(3)});
    h = act3_.forward(fc1_.forward(h, mode), mode);
    h = dropout_.forward(h, mode, dropout_rng);
    return fc2_.forward(h, mode);
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = dropout_.backward(fc2_.backward(gy));
    g = fc1_.backward(act3_.backward(g));
    g = pool_.backward(act2_.backward(g.reshaped(pooled_shape_)));
    g = conv2_.backward(g);
    return conv1_.backward(act1_.backward(g));
  }

  void collect(ParamRefs<T>& out, const std::string& prefix) {
    conv1_.collect(out, prefix + ".conv1");
    conv2_.collect(out, prefix + ".conv2");
    fc1_.collect(out, prefix + ".fc1");
    fc2_.collect(out, prefix + ".fc2");
  }

  void zero_grad() {
    conv1_.zero_grad();
    conv2_.zero_grad();
    fc1_.zero_grad();
    fc2_.zero_grad();
  }

 private:
  std::size_t fused_channels_;
  Conv2d<T> conv1_, conv2_;
  AdaptiveAvgPool2d<T> pool_;
  Linear<T> fc1_, fc2_;
  Act<T> act1_, act2_, act3_;
  Dropout<T> dropout_;
  std::vector<std::size_t> pooled_shape_;
};

}  // namespace nn

/// End-to-end RGB -> spectral profile model.
template <typename T>
class RsNet {
 public:
  explicit RsNet(const ModelConfig& config)
      : config_(ensure_valid(config)),
        init_rng_(config.seed),
        dropout_rng_(config.seed ^ 0x9e3779b97f4a7c15ull),
        backbone_(config_, init_rng_),
        head_(config_, init_rng_) {}

  RsNet(const RsNet&) = delete;
  RsNet& operator=(const RsNet&) = delete;

  /// (N, 3, H, W) -> (N, n_bins)
  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode) {
    return head_.forward(backbone_.forward(x, mode), mode, dropout_rng_);
  }

  Tensor<T> backward(const Tensor<T>& gy) { return backbone_.backward(head_.backward(gy)); }

  nn::ParamRefs<T> params() {
    nn::ParamRefs<T> refs;
    backbone_.collect(refs, "backbone");
    head_.collect(refs, "head");
    return refs;
  }

  void zero_grad() {
    backbone_.zero_grad();
    head_.zero_grad();
  }

  const ModelConfig& config() const { return config_; }
  nn::Backbone<T>& backbone() { return backbone_; }
  nn::SpectralHead<T>& head() { return head_; }

 private:
  ModelConfig config_;
  Rng init_rng_;
  Rng dropout_rng_;
  nn::Backbone<T> backbone_;
  nn::SpectralHead<T> head_;
};

/// Single-patch inference; the axis is metadata for the returned profile.
inline SpectralProfile rsnet_forward(RsNet<float>& model, const ImagePatch& patch,
                                     const WavelengthAxis& axis = WavelengthAxis{}) {
  if (axis.n_bins != model.config().n_bins) {
    throw LengthMismatch("axis declares " + std::to_string(axis.n_bins) +
                         " bins, model outputs " + std::to_string(model.config().n_bins));
  }
  Tensor<float> batch = patch.chw().reshaped({1, 3, patch.height(), patch.width()});
  Tensor<float> out = model.forward(batch, nn::Mode::eval);
  std::vector<float> values(out.data(), out.data() + out.size());
  return SpectralProfile::prediction(std::move(values), axis);
}

struct ParamManifestEntry {
  std::string name;                // layer name, e.g. "head.fc1"
  std::vector<std::size_t> shape;  // primary weight shape
  std::size_t count = 0;           // learnable elements incl. bias
};

struct ParamManifest {
  std::vector<ParamManifestEntry> entries;
  std::size_t total = 0;
};

/// Per-layer listing of learnable tensors. Bias elements count into their
/// layer's entry; tracked statistics are excluded.
template <typename T>
ParamManifest param_manifest(nn::ParamRefs<T> refs) {
  ParamManifest manifest;
  std::map<std::string, std::size_t> index;
  for (const auto& ref : refs) {
    if (!ref.learnable) continue;
    const auto dot = ref.name.rfind('.');
    const std::string layer = ref.name.substr(0, dot);
    const std::string leaf = ref.name.substr(dot + 1);
    auto it = index.find(layer);
    if (it == index.end()) {
      index.emplace(layer, manifest.entries.size());
      manifest.entries.push_back({layer, {}, 0});
      it = index.find(layer);
    }
    auto& entry = manifest.entries[it->second];
    entry.count += ref.value->size();
    if (leaf == "weight" || leaf == "gamma") entry.shape = ref.value->shape();
    manifest.total += ref.value->size();
  }
  return manifest;
}

template <typename T>
ParamManifest param_manifest(RsNet<T>& model) {
  return param_manifest(model.params());
}

}  // namespace rsnet
