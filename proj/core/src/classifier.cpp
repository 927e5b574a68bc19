#include "rsnet/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "rsnet/training.hpp"

namespace rsnet {

SpectralClassifier::SpectralClassifier(std::size_t n_bins, std::size_t n_classes,
                                       std::uint64_t seed)
    : n_bins_(n_bins),
      n_classes_(n_classes),
      rng_(seed),
      fc1_(n_bins, 512, rng_),
      fc2_(512, 128, rng_),
      fc3_(128, 32, rng_),
      fc4_(32, n_classes, rng_) {
  if (n_classes < 2) throw SingleClassError("classifier needs at least two classes");
}

Tensor<float> SpectralClassifier::forward(const Tensor<float>& profiles, nn::Mode mode) {
  Tensor<float> h = act1_.forward(fc1_.forward(profiles, mode), mode);
  h = act2_.forward(fc2_.forward(h, mode), mode);
  h = act3_.forward(fc3_.forward(h, mode), mode);
  return fc4_.forward(h, mode);
}

Tensor<float> SpectralClassifier::backward(const Tensor<float>& gscores) {
  Tensor<float> g = fc3_.backward(act3_.backward(fc4_.backward(gscores)));
  g = fc2_.backward(act2_.backward(g));
  return fc1_.backward(act1_.backward(g));
}

std::vector<float> SpectralClassifier::scores(const SpectralProfile& profile) {
  if (profile.n_bins() != n_bins_) {
    throw LengthMismatch("classifier expects " + std::to_string(n_bins_) + "-bin profiles, got " +
                         std::to_string(profile.n_bins()));
  }
  Tensor<float> batch({1, n_bins_});
  std::copy(profile.values().begin(), profile.values().end(), batch.data());
  Tensor<float> out = forward(batch, nn::Mode::eval);
  return std::vector<float>(out.data(), out.data() + out.size());
}

int SpectralClassifier::predict(const SpectralProfile& profile) {
  const auto s = scores(profile);
  return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

nn::ParamRefs<float> SpectralClassifier::params() {
  nn::ParamRefs<float> refs;
  fc1_.collect(refs, "classifier.fc1");
  fc2_.collect(refs, "classifier.fc2");
  fc3_.collect(refs, "classifier.fc3");
  fc4_.collect(refs, "classifier.fc4");
  return refs;
}

void SpectralClassifier::zero_grad() {
  fc1_.zero_grad();
  fc2_.zero_grad();
  fc3_.zero_grad();
  fc4_.zero_grad();
}

namespace {

/// Stable softmax cross-entropy; fills grad with d(loss)/d(scores).
double softmax_xent(const Tensor<float>& scores, std::span<const int> labels,
                    Tensor<float>* grad) {
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  if (grad) *grad = Tensor<float>({n, k});
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = scores.data() + i * k;
    const float peak = *std::max_element(row, row + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(static_cast<double>(row[j] - peak));
    const std::size_t label = static_cast<std::size_t>(labels[i]);
    loss -= static_cast<double>(row[label] - peak) - std::log(denom);
    if (grad) {
      float* g = grad->data() + i * k;
      for (std::size_t j = 0; j < k; ++j) {
        const double p = std::exp(static_cast<double>(row[j] - peak)) / denom;
        g[j] = static_cast<float>((p - (j == label ? 1.0 : 0.0)) / static_cast<double>(n));
      }
    }
  }
  return loss / static_cast<double>(n);
}

Tensor<float> gather_rows(const Tensor<float>& all, std::span<const std::size_t> rows) {
  const std::size_t width = all.dim(1);
  Tensor<float> out({rows.size(), width});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(all.data() + rows[i] * width, all.data() + (rows[i] + 1) * width,
              out.data() + i * width);
  }
  return out;
}

}  // namespace

SpectralClassifier train_classifier(const Tensor<float>& profiles,
                                    const std::vector<int>& labels, std::size_t n_classes,
                                    const ClassifierTrainConfig& config) {
  if (profiles.dim(0) != labels.size()) {
    throw LengthMismatch("profile and label counts differ");
  }
  std::set<int> distinct;
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= n_classes) {
      throw LabelOutOfRange("label " + std::to_string(label) + " outside 0.." +
                            std::to_string(n_classes - 1));
    }
    distinct.insert(label);
  }
  if (distinct.size() < 2) {
    throw SingleClassError("training labels cover " + std::to_string(distinct.size()) +
                           " class(es)");
  }

  SpectralClassifier clf(profiles.dim(1), n_classes, config.seed);
  nn::Adam<float> optimizer(clf.params(), config.learning_rate);
  Rng shuffle_rng(config.seed ^ 0x94D049BB133111EBull);

  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<int> batch_labels;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      batch_labels.clear();
      for (std::size_t r : rows) batch_labels.push_back(labels[r]);

      Tensor<float> scores = clf.forward(gather_rows(profiles, rows), nn::Mode::train);
      Tensor<float> grad;
      const double loss = softmax_xent(scores, batch_labels, &grad);
      if (!std::isfinite(loss)) {
        throw DivergenceError("classifier loss is not finite at epoch " +
                              std::to_string(epoch + 1));
      }
      clf.zero_grad();
      clf.backward(grad);
      optimizer.step();
    }
  }
  return clf;
}

std::vector<int> predict_labels(SpectralClassifier& clf, const Tensor<float>& profiles) {
  const std::size_t n = profiles.dim(0), k = clf.n_classes();
  Tensor<float> scores = clf.forward(profiles, nn::Mode::eval);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = scores.data() + i * k;
    out[i] = static_cast<int>(std::max_element(row, row + k) - row);
  }
  return out;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t acc = 0;
  for (auto v : counts_) acc += v;
  return acc;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::uint64_t acc = 0;
  for (std::size_t p = 0; p < k_; ++p) acc += at(truth, p);
  return acc;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t predicted) const {
  std::uint64_t acc = 0;
  for (std::size_t t = 0; t < k_; ++t) acc += at(t, predicted);
  return acc;
}

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> truth,
                                 std::size_t k) {
  if (predicted.size() != truth.size()) {
    throw LengthMismatch("prediction and truth label counts differ");
  }
  ConfusionMatrix cm(k);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= k ||
        predicted[i] < 0 || static_cast<std::size_t>(predicted[i]) >= k) {
      throw LabelOutOfRange("sample " + std::to_string(i) + " has label outside 0.." +
                            std::to_string(k - 1));
    }
    ++cm.at(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(predicted[i]));
  }
  return cm;
}

ClassifierMetrics metrics_from_matrix(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw EmptyMatrix("confusion matrix has no samples");
  const std::size_t k = cm.k();
  ClassifierMetrics metrics;
  metrics.per_class_accuracy.resize(k);
  metrics.per_class_precision.resize(k);
  metrics.per_class_f1.resize(k);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(cm.at(c, c));
    const double row = static_cast<double>(cm.row_sum(c));
    const double col = static_cast<double>(cm.col_sum(c));
    const double recall = row > 0 ? tp / row : 0.0;
    const double precision = col > 0 ? tp / col : 0.0;
    metrics.per_class_accuracy[c] = recall;
    metrics.per_class_precision[c] = precision;
    metrics.per_class_f1[c] =
        (precision + recall) > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    f1_sum += metrics.per_class_f1[c];
  }
  metrics.macro_f1 = f1_sum / static_cast<double>(k);
  metrics.overall_f = metrics.macro_f1;
  return metrics;
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         const std::vector<std::string>& class_names) {
  if (class_names.size() != cm.k()) {
    throw LengthMismatch("class-name count does not match matrix size");
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot create " + path.string());
  for (const auto& name : class_names) out << ',' << name;
  out << '\n';
  for (std::size_t t = 0; t < cm.k(); ++t) {
    out << class_names[t];
    for (std::size_t p = 0; p < cm.k(); ++p) out << ',' << cm.at(t, p);
    out << '\n';
  }
}

}  // namespace rsnet
