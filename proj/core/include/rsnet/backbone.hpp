#pragma once

#include <memory>
#include <optional>

#include "rsnet/layers.hpp"
#include "rsnet/types.hpp"

namespace rsnet {

/// Single-sample activation block (C, h, w); batches use rank-4 tensors.
using FeatureMap = Tensor<float>;

namespace nn {

namespace detail {

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t c0, std::size_t c1) {
  const std::size_t N = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor<T> out({N, c1 - c0, x.dim(2), x.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    std::copy(x.data() + (n * C + c0) * hw, x.data() + (n * C + c1) * hw,
              out.data() + n * (c1 - c0) * hw);
  }
  return out;
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  dst.as_vector() += src.as_vector();
}

}  // namespace detail

/// Stem: 7x7 stride-2 convolution, normalization, rectification, then a
/// 3x3 stride-2 max pool. Spatial dims shrink 4x.
template <typename T>
class Stem {
 public:
  Stem(std::size_t out_channels, Rng& rng)
      : conv_(3, out_channels, 7, 2, 3, false, rng), bn_(out_channels), pool_(3, 2, 1) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (x.dim(2) < kMinInput || x.dim(3) < kMinInput) {
      throw TooSmallInput("stem needs inputs of at least " + std::to_string(kMinInput) +
                          "px per side, got " + std::to_string(x.dim(2)) + "x" +
                          std::to_string(x.dim(3)));
    }
    return pool_.forward(act_.forward(bn_.forward(conv_.forward(x, mode), mode), mode), mode);
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    return conv_.backward(bn_.backward(act_.backward(pool_.backward(gy))));
  }

  void collect(ParamRefs<T>& out, const std::string& prefix) {
    conv_.collect(out, prefix + ".conv");
    bn_.collect(out, prefix + ".bn");
  }

  void zero_grad() {
    conv_.zero_grad();
    bn_.zero_grad();
  }

  static constexpr std::size_t kMinInput = 32;

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
  Act<T> act_;
  MaxPool2d<T> pool_;
};

/// One dense layer: norm -> rectify -> 3x3 conv producing `growth` new
/// channels, concatenated after the input. The pretrained block variant
/// inserts the reference 1x1 bottleneck (4x growth) before the 3x3.
template <typename T>
class DenseLayer {
 public:
  DenseLayer(std::size_t in_channels, std::size_t growth, bool bottleneck, Rng& rng)
      : in_channels_(in_channels), growth_(growth) {
    if (bottleneck) {
      const std::size_t mid = 4 * growth;
      bn1_ = std::make_unique<BatchNorm2d<T>>(in_channels);
      conv1_ = std::make_unique<Conv2d<T>>(in_channels, mid, 1, 1, 0, false, rng);
      bn2_ = std::make_unique<BatchNorm2d<T>>(mid);
      conv2_ = std::make_unique<Conv2d<T>>(mid, growth, 3, 1, 1, false, rng);
    } else {
      bn1_ = std::make_unique<BatchNorm2d<T>>(in_channels);
      conv2_ = std::make_unique<Conv2d<T>>(in_channels, growth, 3, 1, 1, false, rng);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> h = act1_.forward(bn1_->forward(x, mode), mode);
    if (conv1_) {
      h = conv1_->forward(h, mode);
      h = act2_.forward(bn2_->forward(h, mode), mode);
    }
    Tensor<T> fresh = conv2_->forward(h, mode);
    return concat_channels(x, fresh);
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> gx = detail::slice_channels(gy, std::size_t(0), in_channels_);
    Tensor<T> gnew = detail::slice_channels(gy, in_channels_, in_channels_ + growth_);
    Tensor<T> g = conv2_->backward(gnew);
    if (conv1_) {
      g = conv1_->backward(bn2_->backward(act2_.backward(g)));
    }
    detail::add_into(gx, bn1_->backward(act1_.backward(g)));
    return gx;
  }

  void collect(ParamRefs<T>& out, const std::string& prefix) {
    bn1_->collect(out, prefix + (conv1_ ? ".bn1" : ".bn"));
    if (conv1_) {
      conv1_->collect(out, prefix + ".conv1");
      bn2_->collect(out, prefix + ".bn2");
      conv2_->collect(out, prefix + ".conv2");
    } else {
      conv2_->collect(out, prefix + ".conv");
    }
  }

  void zero_grad() {
    bn1_->zero_grad();
    conv2_->zero_grad();
    if (conv1_) {
      conv1_->zero_grad();
      bn2_->zero_grad();
    }
  }

  std::size_t in_channels() const { return in_channels_; }
  std::size_t out_channels() const { return in_channels_ + growth_; }

 private:
  std::size_t in_channels_, growth_;
  std::unique_ptr<BatchNorm2d<T>> bn1_, bn2_;
  std::unique_ptr<Conv2d<T>> conv1_, conv2_;
  Act<T> act1_, act2_;
};

/// L stacked dense layers; channels grow by L * growth.
template <typename T>
class DenseBlock {
 public:
  DenseBlock(std::size_t in_channels, std::size_t layers, std::size_t growth, bool bottleneck,
             Rng& rng) {
    if (layers < 1) throw ConstraintViolation("dense block needs at least one layer");
    std::size_t c = in_channels;
    for (std::size_t i = 0; i < layers; ++i) {
      layers_.emplace_back(c, growth, bottleneck, rng);
      c += growth;
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> h = x;
    for (auto& layer : layers_) h = layer.forward(h, mode);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = gy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = it->backward(g);
    return g;
  }

  void collect(ParamRefs<T>& out, const std::string& prefix) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      layers_[i].collect(out, prefix + "." + std::to_string(i));
    }
  }

  void zero_grad() {
    for (auto& layer : layers_) layer.zero_grad();
  }

  std::size_t out_channels() const { return layers_.back().out_channels(); }

 private:
  std::vector<DenseLayer<T>> layers_;
};

/// Transition: norm -> rectify -> 1x1 conv compressing channels, then a
/// 2x2 stride-2 pool (average by default, max behind the config flag).
template <typename T>
class Transition {
 public:
  Transition(std::size_t in_channels, double compression, TransitionPool pool_kind, Rng& rng)
      : out_channels_(static_cast<std::size_t>(compression * static_cast<double>(in_channels))),
        bn_(in_channels),
        pool_kind_(pool_kind) {
    if (out_channels_ < 1) {
      throw DegenerateChannels("transition compresses " + std::to_string(in_channels) +
                               " channels to zero");
    }
    conv_ = std::make_unique<Conv2d<T>>(in_channels, out_channels_, 1, 1, 0, false, rng);
    if (pool_kind_ == TransitionPool::average) {
      avg_pool_ = std::make_unique<AvgPool2d<T>>(2, 2);
    } else {
      max_pool_ = std::make_unique<MaxPool2d<T>>(2, 2, 0);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> h = conv_->forward(act_.forward(bn_.forward(x, mode), mode), mode);
    return avg_pool_ ? avg_pool_->forward(h, mode) : max_pool_->forward(h, mode);
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    Tensor<T> g = avg_pool_ ? avg_pool_->backward(gy) : max_pool_->backward(gy);
    return bn_.backward(act_.backward(conv_->backward(g)));
  }

  void collect(ParamRefs<T>& out, const std::string& prefix) {
    bn_.collect(out, prefix + ".bn");
    conv_->collect(out, prefix + ".conv");
  }

  void zero_grad() {
    bn_.zero_grad();
    conv_->zero_grad();
  }

  std::size_t out_channels() const { return out_channels_; }

 private:
  std::size_t out_channels_;
  BatchNorm2d<T> bn_;
  Act<T> act_;
  std::unique_ptr<Conv2d<T>> conv_;
  TransitionPool pool_kind_;
  std::unique_ptr<AvgPool2d<T>> avg_pool_;
  std::unique_ptr<MaxPool2d<T>> max_pool_;
};

/// Channel-wise fusion of the first transition output with the second dense
/// block output, x8 channels first.
template <typename T>
Tensor<T> fuse(const Tensor<T>& x8, const Tensor<T>& x21) {
  return concat_channels(x8, x21);
}

/// Feature extractor: stem, dense block 1 (6 layers), transition, dense
/// block 2 (12 layers), fused representation. In pretrained-projected mode a
/// learned 1x1 projection maps the 640 fused channels onto fused_channels.
template <typename T>
class Backbone {
 public:
  Backbone(const ModelConfig& config, Rng& rng)
      : config_(ensure_valid(config)),
        stem_(config.stem_channels, rng),
        block1_(config.stem_channels, config.block1_layers, config.growth_rate,
                config.backbone_mode == BackboneMode::pretrained_projected, rng),
        transition_(block1_.out_channels(), config.compression, config.transition_pool, rng),
        block2_(transition_.out_channels(), config.block2_layers, config.growth_rate,
                config.backbone_mode == BackboneMode::pretrained_projected, rng) {
    const std::size_t concat_channels = transition_.out_channels() + block2_.out_channels();
    if (config.backbone_mode == BackboneMode::pretrained_projected) {
      projection_ =
          std::make_unique<Conv2d<T>>(concat_channels, config.fused_channels, 1, 1, 0, true, rng);
    } else if (concat_channels != config.fused_channels) {
      throw ConstraintViolation("compact fusion yields " + std::to_string(concat_channels) +
                                " channels, config declares " +
                                std::to_string(config.fused_channels));
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> x1 = stem_.forward(x, mode);
    Tensor<T> x7 = block1_.forward(x1, mode);
    Tensor<T> x8 = transition_.forward(x7, mode);
    Tensor<T> x21 = block2_.forward(x8, mode);
    Tensor<T> fused = fuse(x8, x21);
    if (projection_) fused = projection_->forward(fused, mode);
    x8_channels_ = x8.dim(1);
    return fused;
  }

  Tensor<T> backward(const Tensor<T>& gfused) {
    Tensor<T> g = gfused;
    if (projection_) g = projection_->backward(g);
    Tensor<T> g8 = detail::slice_channels(g, std::size_t(0), x8_channels_);
    Tensor<T> g21 = detail::slice_channels(g, x8_channels_, g.dim(1));
    // x8 feeds both the fusion and dense block 2; gradients sum.
    detail::add_into(g8, block2_.backward(g21));
    return stem_.backward(block1_.backward(transition_.backward(g8)));
  }

  void collect(ParamRefs<T>& out, const std::string& prefix) {
    stem_.collect(out, prefix + ".stem");
    block1_.collect(out, prefix + ".block1");
    transition_.collect(out, prefix + ".transition");
    block2_.collect(out, prefix + ".block2");
    if (projection_) projection_->collect(out, prefix + ".projection");
  }

  void zero_grad() {
    stem_.zero_grad();
    block1_.zero_grad();
    transition_.zero_grad();
    block2_.zero_grad();
    if (projection_) projection_->zero_grad();
  }

  const ModelConfig& config() const { return config_; }
  std::size_t fused_channels() const { return config_.fused_channels; }

 private:
  ModelConfig config_;
  Stem<T> stem_;
  DenseBlock<T> block1_;
  Transition<T> transition_;
  DenseBlock<T> block2_;
  std::unique_ptr<Conv2d<T>> projection_;
  std::size_t x8_channels_ = 0;
};

}  // namespace nn

/// Single-patch forward through a float backbone, inference mode.
inline FeatureMap backbone_forward(nn::Backbone<float>& net, const ImagePatch& patch) {
  const auto& chw = patch.chw();
  Tensor<float> batch = chw.reshaped({1, 3, patch.height(), patch.width()});
  Tensor<float> fused = net.forward(batch, nn::Mode::eval);
  return fused.reshaped({fused.dim(1), fused.dim(2), fused.dim(3)});
}

}  // namespace rsnet
