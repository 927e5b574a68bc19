#include "rsnet/training.hpp"

#include <chrono>
#include <cmath>

namespace rsnet {

double mse_loss(std::span<const float> pred, std::span<const float> target) {
  if (pred.size() != target.size()) {
    throw LengthMismatch("profiles of " + std::to_string(pred.size()) + " and " +
                         std::to_string(target.size()) + " bins");
  }
  if (pred.empty()) throw LengthMismatch("empty profiles");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

double mse_loss(const SpectralProfile& pred, const SpectralProfile& target) {
  return mse_loss(std::span<const float>(pred.values()), std::span<const float>(target.values()));
}

double mse_batch(const Tensor<float>& pred, const Tensor<float>& target, Tensor<float>* grad) {
  if (!pred.same_shape(target)) {
    throw LengthMismatch("prediction and target batch shapes differ");
  }
  const std::size_t total = pred.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < total; ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  const double loss = acc / static_cast<double>(total);
  if (grad) {
    *grad = Tensor<float>(pred.shape());
    const float scale = 2.0f / static_cast<float>(total);
    for (std::size_t i = 0; i < total; ++i) {
      (*grad)[i] = scale * (pred[i] - target[i]);
    }
  }
  return loss;
}

namespace {

Tensor<float> gather_images(const LoadedDataset& data, std::span<const std::size_t> rows) {
  const std::size_t h = data.images.dim(2), w = data.images.dim(3);
  Tensor<float> out({rows.size(), 3, h, w});
  const std::size_t stride = 3 * h * w;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(data.images.data() + rows[i] * stride, data.images.data() + (rows[i] + 1) * stride,
              out.data() + i * stride);
  }
  return out;
}

Tensor<float> gather_profiles(const LoadedDataset& data, std::span<const std::size_t> rows) {
  const std::size_t nb = data.profiles.dim(1);
  Tensor<float> out({rows.size(), nb});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(data.profiles.data() + rows[i] * nb, data.profiles.data() + (rows[i] + 1) * nb,
              out.data() + i * nb);
  }
  return out;
}

/// Full-dataset inference in moderate batches, eval mode.
Tensor<float> predict_all(RsNet<float>& model, const LoadedDataset& data) {
  const std::size_t n = data.size();
  const std::size_t nb = model.config().n_bins;
  Tensor<float> out({n, nb});
  const std::size_t chunk = 64;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t stop = std::min(n, start + chunk);
    rows.clear();
    for (std::size_t i = start; i < stop; ++i) rows.push_back(i);
    Tensor<float> pred = model.forward(gather_images(data, rows), nn::Mode::eval);
    std::copy(pred.data(), pred.data() + pred.size(), out.data() + start * nb);
  }
  return out;
}

double mean_mse_rows(const Tensor<float>& pred, const Tensor<float>& target) {
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const LoadedDataset& train_data,
                  const LoadedDataset& val_data, const TrainConfig& train_config,
                  const Provenance& provenance) {
  train_config.validate();
  if (train_data.size() == 0) throw DataError("training split is empty");
  if (train_data.profiles.dim(1) != model_config.n_bins) {
    throw LengthMismatch("dataset profiles have " + std::to_string(train_data.profiles.dim(1)) +
                         " bins, model outputs " + std::to_string(model_config.n_bins));
  }

  RsNet<float> model(model_config);
  nn::Adam<float> optimizer(model.params(), train_config.learning_rate, train_config.adam_beta1,
                            train_config.adam_beta2, train_config.adam_eps);
  Rng shuffle_rng(train_config.seed ^ 0xC2B2AE3D27D4EB4Full);

  TrainResult result;
  result.history.train_loss.reserve(train_config.epochs);

  std::vector<std::size_t> order(train_data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_val = std::numeric_limits<double>::infinity();
  std::map<std::string, Tensor<float>> best_tensors;
  std::size_t best_epoch = 0;
  double final_train = 0.0, final_val = 0.0;

  for (std::size_t epoch = 0; epoch < train_config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += train_config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + train_config.batch_size);
      const std::span<const std::size_t> rows(order.data() + start, stop - start);
      Tensor<float> input = gather_images(train_data, rows);
      Tensor<float> target = gather_profiles(train_data, rows);

      Tensor<float> pred = model.forward(input, nn::Mode::train);
      Tensor<float> grad;
      const double loss = mse_batch(pred, target, &grad);
      if (!std::isfinite(loss)) {
        throw DivergenceError("loss is not finite at epoch " + std::to_string(epoch + 1) +
                              ", step " + std::to_string(start / train_config.batch_size));
      }
      model.zero_grad();
      model.backward(grad);
      optimizer.step();
      epoch_loss += loss * static_cast<double>(rows.size());
      seen += rows.size();
    }
    const double train_loss = epoch_loss / static_cast<double>(seen);

    // Empty validation sets fall back to tracking the train loss.
    double val_loss = train_loss;
    if (val_data.size() > 0) {
      Tensor<float> val_pred = predict_all(model, val_data);
      val_loss = mean_mse_rows(val_pred, val_data.profiles);
    }
    if (!std::isfinite(val_loss)) {
      throw DivergenceError("validation loss is not finite at epoch " + std::to_string(epoch + 1));
    }

    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch + 1;
      best_tensors = snapshot_tensors(model.params());
    }
    final_train = train_loss;
    final_val = val_loss;

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.train_loss.push_back(train_loss);
    result.history.val_loss.push_back(val_loss);
    result.history.wall_time_s.push_back(wall);
  }

  Checkpoint final_ckpt;
  final_ckpt.model_kind = "rsnet";
  final_ckpt.model_config = model_config;
  final_ckpt.train_config = train_config;
  final_ckpt.provenance = provenance;
  final_ckpt.metrics = {final_train, final_val, best_val, best_epoch};
  final_ckpt.tensors = snapshot_tensors(model.params());

  Checkpoint best_ckpt = final_ckpt;
  best_ckpt.tensors = std::move(best_tensors);

  result.final = std::move(final_ckpt);
  result.best = std::move(best_ckpt);
  return result;
}

std::unique_ptr<RsNet<float>> model_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.model_kind != "rsnet") {
    throw CorruptArchive("checkpoint holds a '" + ckpt.model_kind + "' model, expected rsnet");
  }
  auto model = std::make_unique<RsNet<float>>(ckpt.model_config);
  restore_tensors(model->params(), ckpt.tensors);
  return model;
}

EvalReport evaluate(const Checkpoint& ckpt, const LoadedDataset& data) {
  if (data.size() == 0) throw DataError("evaluation split is empty");
  auto model = model_from_checkpoint(ckpt);

  EvalReport report;
  report.n_samples = data.size();
  report.predictions = predict_all(*model, data);

  const std::size_t nb = data.profiles.dim(1);
  std::vector<double> per_sample(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    per_sample[i] = mse_loss(
        std::span<const float>(report.predictions.data() + i * nb, nb),
        std::span<const float>(data.profiles.data() + i * nb, nb));
  }

  double total = 0.0;
  std::map<int, ClassEval> by_id;
  for (std::size_t i = 0; i < data.size(); ++i) {
    total += per_sample[i];
    auto& slot = by_id[data.labels[i]];
    slot.mse += per_sample[i];
    slot.n += 1;
  }
  report.mse = total / static_cast<double>(data.size());

  double seen_total = 0.0;
  std::size_t seen_n = 0;
  for (auto& [id, slot] : by_id) {
    slot.mse /= static_cast<double>(slot.n);
    const std::string& name = data.classes.at(static_cast<std::size_t>(id)).name;
    slot.unseen = std::find(ckpt.provenance.holdout_classes.begin(),
                            ckpt.provenance.holdout_classes.end(),
                            name) != ckpt.provenance.holdout_classes.end();
    if (!slot.unseen) {
      seen_total += slot.mse * static_cast<double>(slot.n);
      seen_n += slot.n;
    }
    report.per_class[name] = slot;
  }
  report.mse_seen = seen_n > 0 ? seen_total / static_cast<double>(seen_n) : report.mse;
  return report;
}

}  // namespace rsnet
