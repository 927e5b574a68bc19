#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rsnet/layers.hpp"
#include "rsnet/types.hpp"

namespace rsnet {

/// Four affine layers 1550 -> 512 -> 128 -> 32 -> K with rectification
/// between them; scores are unnormalized.
class SpectralClassifier {
 public:
  SpectralClassifier(std::size_t n_bins, std::size_t n_classes, std::uint64_t seed);

  /// (N, n_bins) -> (N, K)
  Tensor<float> forward(const Tensor<float>& profiles, nn::Mode mode);
  Tensor<float> backward(const Tensor<float>& gscores);

  std::vector<float> scores(const SpectralProfile& profile);
  int predict(const SpectralProfile& profile);

  nn::ParamRefs<float> params();
  void zero_grad();

  std::size_t n_bins() const { return n_bins_; }
  std::size_t n_classes() const { return n_classes_; }

 private:
  std::size_t n_bins_, n_classes_;
  Rng rng_;
  nn::Linear<float> fc1_, fc2_, fc3_, fc4_;
  nn::Act<float> act1_, act2_, act3_;
};

struct ClassifierTrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

/// Cross-entropy + Adam; deterministic under the seed. Throws
/// SingleClassError when fewer than two classes are present.
SpectralClassifier train_classifier(const Tensor<float>& profiles,
                                    const std::vector<int>& labels, std::size_t n_classes,
                                    const ClassifierTrainConfig& config = {});

/// Argmax predictions for a profile batch.
std::vector<int> predict_labels(SpectralClassifier& clf, const Tensor<float>& profiles);

/// K x K count matrix; rows are true classes, columns predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t k) : k_(k), counts_(k * k, 0) {}

  std::uint64_t& at(std::size_t truth, std::size_t predicted) {
    return counts_[truth * k_ + predicted];
  }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const {
    return counts_[truth * k_ + predicted];
  }
  std::size_t k() const { return k_; }
  std::uint64_t total() const;
  std::uint64_t row_sum(std::size_t truth) const;
  std::uint64_t col_sum(std::size_t predicted) const;

 private:
  std::size_t k_;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth,
                                 std::size_t k);

struct ClassifierMetrics {
  std::vector<double> per_class_accuracy;  // recall: diagonal over row sum
  std::vector<double> per_class_precision;
  std::vector<double> per_class_f1;
  double macro_f1 = 0.0;
  double overall_f = 0.0;  // macro mean
};

ClassifierMetrics metrics_from_matrix(const ConfusionMatrix& cm);

/// CSV with class-name header row and column.
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         const std::vector<std::string>& class_names);

}  // namespace rsnet
