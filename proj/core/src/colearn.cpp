#include "rsnet/colearn.hpp"

#include <chrono>
#include <cmath>

namespace rsnet {

double joint_loss(const SpectralProfile& pred_profile, double pred_property,
                  const SpectralProfile& target_profile, double target_property, double lambda) {
  if (lambda < 0.0) throw ConstraintViolation("lambda must be non-negative");
  const double perr = pred_property - target_property;
  return mse_loss(pred_profile, target_profile) + lambda * perr * perr;
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

Tensor<float> gather_properties(const LoadedDataset& data, std::span<const std::size_t> rows) {
  Tensor<float> out({rows.size(), 1});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out[i] = static_cast<float>(*data.properties[rows[i]]);
  }
  return out;
}

void require_properties(const LoadedDataset& data, const char* split_name) {
  std::string missing;
  std::size_t n_missing = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!data.properties[i].has_value()) {
      ++n_missing;
      if (n_missing <= 5) missing += (missing.empty() ? "" : ", ") + std::to_string(i);
    }
  }
  if (n_missing > 0) {
    throw MissingProperty(std::string(split_name) + " split lacks property values on " +
                          std::to_string(n_missing) + " row(s): " + missing +
                          (n_missing > 5 ? ", ..." : ""));
  }
}

/// Batch joint loss; fills both gradients.
double joint_batch(const Tensor<float>& pred_profiles, const Tensor<float>& target_profiles,
                   const Tensor<float>& pred_props, const Tensor<float>& target_props,
                   double lambda, Tensor<float>* gprofiles, Tensor<float>* gprops) {
  const double spectral = mse_batch(pred_profiles, target_profiles, gprofiles);
  const std::size_t n = pred_props.dim(0);
  double acc = 0.0;
  if (gprops) *gprops = Tensor<float>({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred_props[i]) - static_cast<double>(target_props[i]);
    acc += d * d;
    if (gprops) {
      (*gprops)[i] = static_cast<float>(lambda * 2.0 * d / static_cast<double>(n));
    }
  }
  return spectral + lambda * acc / static_cast<double>(n);
}

struct ColearnEval {
  double joint = 0.0;
  double spectral = 0.0;
  double property_rmse = 0.0;
  Tensor<float> predictions;
};

ColearnEval eval_colearn(CoLearnNet<float>& model, const LoadedDataset& data, double lambda) {
  const std::size_t n = data.size();
  const std::size_t nb = model.config().n_bins;
  ColearnEval out;
  out.predictions = Tensor<float>({n, nb});
  double sq_prop = 0.0, sq_spec = 0.0;
  std::size_t n_prop = 0;
  const std::size_t chunk = 64;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t stop = std::min(n, start + chunk);
    rows.clear();
    for (std::size_t i = start; i < stop; ++i) rows.push_back(i);
    auto pred = model.forward(gather_images(data, rows), nn::Mode::eval);
    std::copy(pred.profiles.data(), pred.profiles.data() + pred.profiles.size(),
              out.predictions.data() + start * nb);
    const Tensor<float> target = gather_profiles(data, rows);
    for (std::size_t i = 0; i < pred.profiles.size(); ++i) {
      const double d =
          static_cast<double>(pred.profiles[i]) - static_cast<double>(target[i]);
      sq_spec += d * d;
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (data.properties[rows[i]].has_value()) {
        const double d = static_cast<double>(pred.properties[i]) - *data.properties[rows[i]];
        sq_prop += d * d;
        ++n_prop;
      }
    }
  }
  out.spectral = sq_spec / static_cast<double>(n * nb);
  out.property_rmse = n_prop > 0 ? std::sqrt(sq_prop / static_cast<double>(n_prop)) : 0.0;
  out.joint = out.spectral + (n_prop > 0 ? lambda * sq_prop / static_cast<double>(n_prop) : 0.0);
  return out;
}

}  // namespace

TrainResult train_colearn(const ModelConfig& model_config, const LoadedDataset& train_data,
                          const LoadedDataset& val_data, const TrainConfig& train_config,
                          double lambda, const Provenance& provenance) {
  train_config.validate();
  if (lambda < 0.0) throw ConstraintViolation("lambda must be non-negative");
  if (train_data.size() == 0) throw DataError("training split is empty");
  require_properties(train_data, "train");
  if (val_data.size() > 0) require_properties(val_data, "val");

  CoLearnNet<float> model(model_config);
  nn::Adam<float> optimizer(model.params(), train_config.learning_rate, train_config.adam_beta1,
                            train_config.adam_beta2, train_config.adam_eps);
  Rng shuffle_rng(train_config.seed ^ 0xC2B2AE3D27D4EB4Full);

  TrainResult result;
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

      auto pred = model.forward(gather_images(train_data, rows), nn::Mode::train);
      Tensor<float> gprofiles, gprops;
      const double loss =
          joint_batch(pred.profiles, gather_profiles(train_data, rows), pred.properties,
                      gather_properties(train_data, rows), lambda, &gprofiles, &gprops);
      if (!std::isfinite(loss)) {
        throw DivergenceError("joint loss is not finite at epoch " + std::to_string(epoch + 1));
      }
      model.zero_grad();
      model.backward(gprofiles, gprops);
      optimizer.step();
      epoch_loss += loss * static_cast<double>(rows.size());
      seen += rows.size();
    }
    const double train_loss = epoch_loss / static_cast<double>(seen);

    double val_loss = train_loss;
    if (val_data.size() > 0) {
      val_loss = eval_colearn(model, val_data, lambda).joint;
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
    result.history.train_loss.push_back(train_loss);
    result.history.val_loss.push_back(val_loss);
    result.history.wall_time_s.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }

  Checkpoint final_ckpt;
  final_ckpt.model_kind = "colearn";
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

std::unique_ptr<CoLearnNet<float>> colearn_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.model_kind != "colearn") {
    throw CorruptArchive("checkpoint holds a '" + ckpt.model_kind + "' model, expected colearn");
  }
  auto model = std::make_unique<CoLearnNet<float>>(ckpt.model_config);
  restore_tensors(model->params(), ckpt.tensors);
  return model;
}

EvalReport evaluate_colearn(const Checkpoint& ckpt, const LoadedDataset& data) {
  if (data.size() == 0) throw DataError("evaluation split is empty");
  auto model = colearn_from_checkpoint(ckpt);
  const auto eval = eval_colearn(*model, data, 0.0);

  EvalReport report;
  report.n_samples = data.size();
  report.predictions = eval.predictions;

  const std::size_t nb = data.profiles.dim(1);
  double total = 0.0;
  std::map<int, ClassEval> by_id;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double mse = mse_loss(
        std::span<const float>(report.predictions.data() + i * nb, nb),
        std::span<const float>(data.profiles.data() + i * nb, nb));
    total += mse;
    auto& slot = by_id[data.labels[i]];
    slot.mse += mse;
    slot.n += 1;
  }
  report.mse = total / static_cast<double>(data.size());

  double seen_total = 0.0;
  std::size_t seen_n = 0;
  bool any_property = false;
  for (const auto& p : data.properties) any_property = any_property || p.has_value();
  if (any_property) report.property_rmse = eval.property_rmse;

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

std::pair<SpectralProfile, double> colearn_forward(CoLearnNet<float>& model,
                                                   const ImagePatch& patch,
                                                   const WavelengthAxis& axis) {
  if (axis.n_bins != model.config().n_bins) {
    throw LengthMismatch("axis declares " + std::to_string(axis.n_bins) +
                         " bins, model outputs " + std::to_string(model.config().n_bins));
  }
  Tensor<float> batch = patch.chw().reshaped({1, 3, patch.height(), patch.width()});
  auto out = model.forward(batch, nn::Mode::eval);
  std::vector<float> values(out.profiles.data(), out.profiles.data() + out.profiles.size());
  return {SpectralProfile::prediction(std::move(values), axis),
          static_cast<double>(out.properties[0])};
}

}  // namespace rsnet
