#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsnet/data.hpp"
#include "rsnet/head.hpp"

namespace rsnet {

/// MSE training protocol: 50 epochs of Adam at 1e-3, minibatch 16.
struct TrainConfig {
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    if (epochs < 1) throw ConstraintViolation("epochs >= 1");
    if (!(learning_rate > 0.0)) throw ConstraintViolation("learning_rate > 0");
    if (batch_size < 1) throw ConstraintViolation("batch_size >= 1");
  }
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> wall_time_s;
};

/// Mean over bins of the squared difference.
double mse_loss(std::span<const float> pred, std::span<const float> target);
double mse_loss(const SpectralProfile& pred, const SpectralProfile& target);

/// Batch MSE: mean over samples of the per-sample bin MSE. When grad is
/// non-null it receives d(loss)/d(pred).
double mse_batch(const Tensor<float>& pred, const Tensor<float>& target, Tensor<float>* grad);

namespace nn {

/// Adam with bias correction over a fixed parameter registry.
template <typename T>
class Adam {
 public:
  Adam(ParamRefs<T> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
      if (!p.learnable) continue;
      m_.emplace_back(p.value->shape());
      v_.emplace_back(p.value->shape());
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    std::size_t slot = 0;
    for (const auto& p : params_) {
      if (!p.learnable) continue;
      Tensor<T>& m = m_[slot];
      Tensor<T>& v = v_[slot];
      ++slot;
      T* w = p.value->data();
      const T* g = p.grad->data();
#pragma omp parallel for schedule(static)
      for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(p.value->size()); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double mi = beta1_ * static_cast<double>(m[i]) + (1.0 - beta1_) * gi;
        const double vi = beta2_ * static_cast<double>(v[i]) + (1.0 - beta2_) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        w[i] -= static_cast<T>(lr_ * (mi / bc1) / (std::sqrt(vi / bc2) + eps_));
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  ParamRefs<T> params_;
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor<T>> m_, v_;
};

}  // namespace nn

/// Dataset identity and split recipe a checkpoint was trained against,
/// enough to rebuild the exact evaluation splits later.
struct Provenance {
  std::vector<std::string> class_names;
  std::vector<std::string> holdout_classes;
  WavelengthAxis axis;
  double norm_constant = 1.0;
  SplitRatios split;
  std::uint64_t split_seed = 0;
};

struct CheckpointMetrics {
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  double best_val_loss = 0.0;
  std::size_t best_epoch = 0;
};

/// Named-tensor archive: every parameter and normalization statistic plus
/// the configs and provenance needed to rebuild the model.
struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::string model_kind = "rsnet";  // "rsnet" | "colearn"
  ModelConfig model_config;
  TrainConfig train_config;
  Provenance provenance;
  CheckpointMetrics metrics;
  std::map<std::string, Tensor<float>> tensors;
};

/// Zip container with manifest.json plus one little-endian float32 blob per
/// tensor. Round trips are bit-exact.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Copies current parameter/statistic tensors out of a parameter registry.
std::map<std::string, Tensor<float>> snapshot_tensors(const nn::ParamRefs<float>& refs);

/// Writes checkpoint tensors into an existing registry; the tensor-name sets
/// must match exactly.
void restore_tensors(const nn::ParamRefs<float>& refs,
                     const std::map<std::string, Tensor<float>>& tensors);

struct TrainResult {
  Checkpoint final;
  Checkpoint best;
  TrainHistory history;
};

/// Minibatch Adam on MSE. Deterministic under fixed seed and platform:
/// seeded init, seeded shuffling, fixed reduction order.
/// Throws DivergenceError when the loss stops being finite.
TrainResult train(const ModelConfig& model_config, const LoadedDataset& train_data,
                  const LoadedDataset& val_data, const TrainConfig& train_config,
                  const Provenance& provenance = {});

struct ClassEval {
  double mse = 0.0;
  std::size_t n = 0;
  bool unseen = false;
};

struct EvalReport {
  double mse = 0.0;
  double mse_seen = 0.0;
  std::size_t n_samples = 0;
  std::map<std::string, ClassEval> per_class;
  std::optional<double> property_rmse;
  Tensor<float> predictions;  // (N, n_bins), row order of the dataset
};

/// Inference-mode evaluation. Per-class MSE keys follow the dataset class
/// names; classes listed in the checkpoint's holdout set are flagged unseen.
EvalReport evaluate(const Checkpoint& ckpt, const LoadedDataset& data);

/// Rebuilds a float model from a checkpoint (weights included).
std::unique_ptr<RsNet<float>> model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace rsnet
