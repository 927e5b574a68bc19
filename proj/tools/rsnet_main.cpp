#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "rsnet/classifier.hpp"
#include "rsnet/colearn.hpp"
#include "rsnet/plot.hpp"
#include "rsnet/png_io.hpp"
#include "rsnet/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void emit_status(const json& status) { std::cout << status.dump() << std::endl; }

/// "<lo>:<hi>" -> pair of doubles
std::pair<double, double> parse_range(const std::string& s, const char* what) {
  const auto pos = s.find(':');
  if (pos == std::string::npos) {
    throw rsnet::ConstraintViolation(std::string(what) + " expects '<lo>:<hi>', got '" + s + "'");
  }
  return {std::stod(s.substr(0, pos)), std::stod(s.substr(pos + 1))};
}

std::pair<std::size_t, std::size_t> parse_size(const std::string& s, const char* what) {
  const auto pos = s.find('x');
  if (pos == std::string::npos) {
    throw rsnet::ConstraintViolation(std::string(what) + " expects '<H>x<W>', got '" + s + "'");
  }
  return {static_cast<std::size_t>(std::stoul(s.substr(0, pos))),
          static_cast<std::size_t>(std::stoul(s.substr(pos + 1)))};
}

void write_resolved_config(CLI::App* sub, const fs::path& out_dir) {
  std::ofstream out(out_dir / "resolved.cfg");
  out << sub->config_to_str(true, false);
}

void write_history_csv(const fs::path& path, const rsnet::TrainHistory& history) {
  std::ofstream out(path);
  out << "epoch,train_loss,val_loss,wall_time_s\n";
  for (std::size_t i = 0; i < history.train_loss.size(); ++i) {
    out << (i + 1) << ',' << history.train_loss[i] << ',' << history.val_loss[i] << ','
        << history.wall_time_s[i] << '\n';
  }
}

json census(const rsnet::DatasetIndex& index) {
  json counts = json::object();
  for (const auto& cls : index.classes) counts[cls.name] = 0;
  for (const auto& rec : index.records) {
    counts[rec.label.name] = counts[rec.label.name].get<int>() + 1;
  }
  return counts;
}

json report_to_json(const rsnet::EvalReport& report) {
  json per_class = json::object();
  for (const auto& [name, slot] : report.per_class) {
    per_class[name] = {{"mse", slot.mse}, {"n", slot.n}, {"unseen", slot.unseen}};
  }
  json out = {{"mse", report.mse},
              {"mse_seen", report.mse_seen},
              {"n_samples", report.n_samples},
              {"per_class_mse", per_class}};
  if (report.property_rmse) out["property_rmse"] = *report.property_rmse;
  return out;
}

/// Re-derives the splits a checkpoint was trained with and returns the
/// requested one ("train" | "val" | "test" | "all").
rsnet::DatasetIndex select_split(const rsnet::DatasetIndex& index,
                                 const rsnet::Provenance& provenance,
                                 const std::string& which) {
  if (which == "all") return index;
  auto splits = rsnet::split(index, provenance.split, provenance.split_seed,
                             provenance.holdout_classes);
  if (which == "train") return splits.train;
  if (which == "val") return splits.val;
  if (which == "test") return splits.test;
  throw rsnet::ConstraintViolation("unknown split '" + which + "'");
}

struct ProfileFile {
  rsnet::WavelengthAxis axis;
  std::vector<float> values;
};

/// Reads a two-column spectrum file, deriving the axis from its rows.
ProfileFile read_profile_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw rsnet::MissingFile(path.string());
  std::vector<double> lambdas;
  std::vector<float> values;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw rsnet::SchemaError(path.string() + ":" + std::to_string(row) + " expects 2 columns");
    }
    lambdas.push_back(std::stod(line.substr(0, comma)));
    values.push_back(std::stof(line.substr(comma + 1)));
  }
  if (values.size() < 2) throw rsnet::SchemaError(path.string() + " has fewer than 2 rows");
  return {{lambdas.front(), lambdas.back(), values.size()}, std::move(values)};
}

int run(int argc, char** argv) {
  CLI::App app{"RS-Net: RGB-to-spectral-profile estimation pipeline"};
  app.require_subcommand(1);

  // ---- gen-data ----------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic oracle dataset");
  gen->set_config("--config");
  std::size_t gd_classes = 6, gd_per_class = 200, gd_gaussians = 3;
  double gd_noise = 0.0, gd_texture = 0.02;
  std::string gd_brightness = "0.7:1.0", gd_patch = "64x64", gd_axis = "350:1000:1550";
  std::uint64_t gd_seed = 0;
  std::string gd_out;
  std::vector<std::string> gd_blends;
  bool gd_no_property = false;
  gen->add_option("--classes", gd_classes, "Number of material classes")->check(CLI::PositiveNumber);
  gen->add_option("--per-class", gd_per_class, "Samples per class")->check(CLI::PositiveNumber);
  gen->add_option("--noise", gd_noise, "Per-bin spectral noise sigma")->check(CLI::NonNegativeNumber);
  gen->add_option("--brightness", gd_brightness, "Brightness range lo:hi");
  gen->add_option("--seed", gd_seed, "Generator seed");
  gen->add_option("--out", gd_out, "Output directory")->required();
  gen->add_option("--patch", gd_patch, "Patch size HxW");
  gen->add_option("--gaussians", gd_gaussians, "Gaussians per class template")->check(CLI::PositiveNumber);
  gen->add_option("--axis", gd_axis, "Wavelength axis lo:hi:n_bins");
  gen->add_option("--texture", gd_texture, "Per-pixel texture noise sigma")->check(CLI::NonNegativeNumber);
  gen->add_option("--blend", gd_blends, "Append a blend class 'a:b' (repeatable)");
  gen->add_flag("--no-property", gd_no_property, "Omit the friction property column");

  gen->callback([&] {
    rsnet::SynthConfig config;
    config.n_classes = gd_classes;
    config.samples_per_class = gd_per_class;
    config.n_gaussians_per_template = gd_gaussians;
    std::tie(config.brightness_lo, config.brightness_hi) =
        parse_range(gd_brightness, "--brightness");
    config.noise_sigma = gd_noise;
    std::tie(config.patch_h, config.patch_w) = parse_size(gd_patch, "--patch");
    config.seed = gd_seed;
    config.texture_sigma = gd_texture;
    config.with_property = !gd_no_property;
    {
      std::stringstream ss(gd_axis);
      std::string lo, hi, n;
      std::getline(ss, lo, ':');
      std::getline(ss, hi, ':');
      std::getline(ss, n, ':');
      if (n.empty()) throw rsnet::ConstraintViolation("--axis expects lo:hi:n_bins");
      config.axis = {std::stod(lo), std::stod(hi), static_cast<std::size_t>(std::stoul(n))};
    }
    for (const auto& b : gd_blends) {
      const auto [a, c] = parse_range(b, "--blend");
      config.blends.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(c));
    }

    fs::create_directories(gd_out);
    const auto dataset = rsnet::synth_generate(config, gd_out);
    write_resolved_config(gen, gd_out);
    emit_status({{"status", "ok"},
                 {"command", "gen-data"},
                 {"manifest", (fs::path(gd_out) / "manifest.csv").string()},
                 {"n_samples", dataset.index.records.size()},
                 {"n_classes", dataset.index.classes.size()}});
  });

  // ---- train -------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Train RS-Net on a dataset manifest");
  train_cmd->set_config("--config");
  std::string tr_data, tr_out, tr_mode = "compact", tr_ratios = "", tr_pool = "average";
  std::size_t tr_epochs = 50, tr_batch = 16;
  double tr_lr = 1e-3, tr_dropout = 0.0;
  std::uint64_t tr_seed = 0;
  std::int64_t tr_split_seed = -1;
  std::vector<std::string> tr_holdout;
  train_cmd->add_option("--data", tr_data, "Dataset manifest")->required();
  train_cmd->add_option("--epochs", tr_epochs, "Training epochs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr_lr, "Adam learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", tr_batch, "Minibatch size")->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", tr_seed, "Init/shuffle seed");
  train_cmd->add_option("--mode", tr_mode, "Backbone mode: compact | pretrained-projected");
  train_cmd->add_option("--holdout", tr_holdout, "Class names held out into the test split");
  train_cmd->add_option("--out", tr_out, "Output directory")->required();
  train_cmd->add_option("--ratios", tr_ratios, "Split ratios train:val:test (default 0.8:0.1:0.1)");
  train_cmd->add_option("--split-seed", tr_split_seed, "Split seed (defaults to --seed)");
  train_cmd->add_option("--transition-pool", tr_pool, "Transition pooling: average | max");
  train_cmd->add_option("--dropout", tr_dropout, "Head dropout rate")->check(CLI::Range(0.0, 0.999));

  train_cmd->callback([&] {
    const auto index = rsnet::load_manifest(tr_data);
    rsnet::SplitRatios ratios;
    if (!tr_ratios.empty()) {
      std::stringstream ss(tr_ratios);
      std::string a, b, c;
      std::getline(ss, a, ':');
      std::getline(ss, b, ':');
      std::getline(ss, c, ':');
      if (c.empty()) throw rsnet::RatioError("--ratios expects train:val:test");
      ratios = {std::stod(a), std::stod(b), std::stod(c)};
    }
    const std::uint64_t split_seed =
        tr_split_seed >= 0 ? static_cast<std::uint64_t>(tr_split_seed) : tr_seed;
    const auto splits = rsnet::split(index, ratios, split_seed, tr_holdout);

    rsnet::ModelConfig model_config =
        rsnet::backbone_mode_from_string(tr_mode) == rsnet::BackboneMode::compact
            ? rsnet::ModelConfig::compact()
            : rsnet::ModelConfig::pretrained_projected();
    model_config.n_bins = index.axis.n_bins;
    model_config.seed = tr_seed;
    model_config.transition_pool = rsnet::transition_pool_from_string(tr_pool);
    model_config.head_dropout = tr_dropout;

    rsnet::TrainConfig train_config;
    train_config.epochs = tr_epochs;
    train_config.learning_rate = tr_lr;
    train_config.batch_size = tr_batch;
    train_config.seed = tr_seed;

    rsnet::Provenance provenance;
    for (const auto& cls : index.classes) provenance.class_names.push_back(cls.name);
    provenance.holdout_classes = tr_holdout;
    provenance.axis = index.axis;
    provenance.norm_constant = index.norm_constant;
    provenance.split = ratios;
    provenance.split_seed = split_seed;

    const auto train_data = rsnet::load_dataset(splits.train);
    rsnet::LoadedDataset val_data;
    if (!splits.val.records.empty()) val_data = rsnet::load_dataset(splits.val);

    fs::create_directories(tr_out);
    const auto result =
        rsnet::train(model_config, train_data, val_data, train_config, provenance);

    const fs::path out_dir(tr_out);
    rsnet::save_checkpoint(result.final, out_dir / "ckpt_final.zip");
    rsnet::save_checkpoint(result.best, out_dir / "ckpt_best.zip");
    write_history_csv(out_dir / "history.csv", result.history);
    {
      json metrics = {{"final_train_loss", result.final.metrics.final_train_loss},
                      {"final_val_loss", result.final.metrics.final_val_loss},
                      {"best_val_loss", result.final.metrics.best_val_loss},
                      {"best_epoch", result.final.metrics.best_epoch},
                      {"train_class_census", census(splits.train)},
                      {"val_class_census", census(splits.val)},
                      {"test_class_census", census(splits.test)}};
      std::ofstream out(out_dir / "metrics.json");
      out << metrics.dump(2) << '\n';
    }
    write_resolved_config(train_cmd, out_dir);
    emit_status({{"status", "ok"},
                 {"command", "train"},
                 {"checkpoint", (out_dir / "ckpt_final.zip").string()},
                 {"best_checkpoint", (out_dir / "ckpt_best.zip").string()},
                 {"final_val_loss", result.final.metrics.final_val_loss},
                 {"best_val_loss", result.final.metrics.best_val_loss}});
  });

  // ---- eval --------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval_cmd->set_config("--config");
  std::string ev_ckpt, ev_data, ev_out, ev_split = "test";
  std::size_t ev_dump = 0;
  eval_cmd->add_option("--ckpt", ev_ckpt, "Checkpoint archive")->required();
  eval_cmd->add_option("--data", ev_data, "Dataset manifest")->required();
  eval_cmd->add_option("--out", ev_out, "Output directory")->required();
  eval_cmd->add_option("--split", ev_split, "Split to evaluate: train | val | test | all");
  eval_cmd->add_option("--dump-predictions", ev_dump,
                       "Write the first N predicted/ground-truth profile pairs");

  eval_cmd->callback([&] {
    const auto ckpt = rsnet::load_checkpoint(ev_ckpt);
    const auto index = rsnet::load_manifest(ev_data);
    const auto part = select_split(index, ckpt.provenance, ev_split);
    if (part.records.empty()) throw rsnet::DataError("selected split is empty");
    const auto data = rsnet::load_dataset(part);

    const auto report = ckpt.model_kind == "colearn" ? rsnet::evaluate_colearn(ckpt, data)
                                                     : rsnet::evaluate(ckpt, data);
    const fs::path out_dir(ev_out);
    fs::create_directories(out_dir);
    {
      std::ofstream out(out_dir / "metrics.json");
      out << report_to_json(report).dump(2) << '\n';
    }

    if (ev_dump > 0) {
      fs::create_directories(out_dir / "predictions");
      std::ofstream listing(out_dir / "predictions" / "listing.csv");
      listing << "row,label,mse,pred_file,gt_file\n";
      const std::size_t nb = data.profiles.dim(1);
      for (std::size_t i = 0; i < std::min<std::size_t>(ev_dump, data.size()); ++i) {
        char pred_name[32], gt_name[32];
        std::snprintf(pred_name, sizeof(pred_name), "pred_%04zu.csv", i);
        std::snprintf(gt_name, sizeof(gt_name), "gt_%04zu.csv", i);
        rsnet::write_spectrum_csv(
            out_dir / "predictions" / pred_name,
            std::span<const float>(report.predictions.data() + i * nb, nb), data.axis);
        rsnet::write_spectrum_csv(out_dir / "predictions" / gt_name,
                                  std::span<const float>(data.profiles.data() + i * nb, nb),
                                  data.axis);
        const double mse =
            rsnet::mse_loss(std::span<const float>(report.predictions.data() + i * nb, nb),
                            std::span<const float>(data.profiles.data() + i * nb, nb));
        listing << i << ',' << data.classes.at(static_cast<std::size_t>(data.labels[i])).name
                << ',' << mse << ',' << pred_name << ',' << gt_name << '\n';
      }
    }
    write_resolved_config(eval_cmd, out_dir);
    json status = {{"status", "ok"},
                   {"command", "eval"},
                   {"split", ev_split},
                   {"mse", report.mse},
                   {"mse_seen", report.mse_seen},
                   {"n_samples", report.n_samples},
                   {"metrics", (out_dir / "metrics.json").string()}};
    if (report.property_rmse) status["property_rmse"] = *report.property_rmse;
    emit_status(status);
  });

  // ---- classify ----------------------------------------------------------
  auto* classify_cmd =
      app.add_subcommand("classify", "Train/evaluate the spectral-profile material classifier");
  classify_cmd->set_config("--config");
  std::string cl_ckpt, cl_data, cl_out;
  std::size_t cl_epochs = 10, cl_batch = 32;
  double cl_lr = 1e-3;
  std::uint64_t cl_seed = 0;
  bool cl_use_gt = false;
  classify_cmd->add_option("--ckpt", cl_ckpt, "RS-Net checkpoint")->required();
  classify_cmd->add_option("--data", cl_data, "Dataset manifest")->required();
  classify_cmd->add_option("--out", cl_out, "Output directory")->required();
  classify_cmd->add_option("--epochs", cl_epochs, "Classifier epochs")->check(CLI::PositiveNumber);
  classify_cmd->add_option("--batch", cl_batch, "Classifier batch size")->check(CLI::PositiveNumber);
  classify_cmd->add_option("--lr", cl_lr, "Classifier learning rate")->check(CLI::PositiveNumber);
  classify_cmd->add_option("--seed", cl_seed, "Classifier seed");
  classify_cmd->add_flag("--use-gt", cl_use_gt,
                         "Train on ground-truth spectra instead of RS-Net predictions");

  classify_cmd->callback([&] {
    const auto ckpt = rsnet::load_checkpoint(cl_ckpt);
    const auto index = rsnet::load_manifest(cl_data);
    const auto splits =
        rsnet::split(index, ckpt.provenance.split, ckpt.provenance.split_seed,
                     ckpt.provenance.holdout_classes);

    // The classifier covers the trained (seen) classes; held-out classes
    // have no training rows by construction.
    std::vector<std::string> seen_names;
    std::vector<int> id_map(index.classes.size(), -1);
    for (const auto& cls : index.classes) {
      const bool held = std::find(ckpt.provenance.holdout_classes.begin(),
                                  ckpt.provenance.holdout_classes.end(),
                                  cls.name) != ckpt.provenance.holdout_classes.end();
      if (!held) {
        id_map[static_cast<std::size_t>(cls.id)] = static_cast<int>(seen_names.size());
        seen_names.push_back(cls.name);
      }
    }

    auto model = rsnet::model_from_checkpoint(ckpt);
    auto profiles_of = [&](const rsnet::LoadedDataset& data) {
      if (cl_use_gt) return data.profiles;
      rsnet::Checkpoint tmp = ckpt;  // reuse the loaded weights
      return rsnet::evaluate(tmp, data).predictions;
    };

    const auto train_data = rsnet::load_dataset(splits.train);
    rsnet::Tensor<float> train_profiles = profiles_of(train_data);
    std::vector<int> train_labels;
    for (int label : train_data.labels) {
      train_labels.push_back(id_map[static_cast<std::size_t>(label)]);
    }

    rsnet::ClassifierTrainConfig clf_config;
    clf_config.epochs = cl_epochs;
    clf_config.batch_size = cl_batch;
    clf_config.learning_rate = cl_lr;
    clf_config.seed = cl_seed;
    auto clf = rsnet::train_classifier(train_profiles, train_labels, seen_names.size(),
                                       clf_config);

    // Seen-class rows of the test split.
    const auto test_data = rsnet::load_dataset(splits.test);
    rsnet::Tensor<float> test_profiles = profiles_of(test_data);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < test_data.size(); ++i) {
      if (id_map[static_cast<std::size_t>(test_data.labels[i])] >= 0) keep.push_back(i);
    }
    rsnet::Tensor<float> kept({keep.size(), test_profiles.dim(1)});
    std::vector<int> truth(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) {
      std::copy(test_profiles.data() + keep[i] * test_profiles.dim(1),
                test_profiles.data() + (keep[i] + 1) * test_profiles.dim(1),
                kept.data() + i * test_profiles.dim(1));
      truth[i] = id_map[static_cast<std::size_t>(test_data.labels[keep[i]])];
    }

    const auto predicted = rsnet::predict_labels(clf, kept);
    const auto cm = rsnet::confusion_matrix(predicted, truth, seen_names.size());
    const auto metrics = rsnet::metrics_from_matrix(cm);
    double correct = 0.0;
    for (std::size_t c = 0; c < cm.k(); ++c) correct += static_cast<double>(cm.at(c, c));
    const double accuracy = correct / static_cast<double>(cm.total());

    const fs::path out_dir(cl_out);
    fs::create_directories(out_dir);
    rsnet::write_confusion_csv(out_dir / "confusion.csv", cm, seen_names);
    {
      json per_class = json::object();
      for (std::size_t c = 0; c < seen_names.size(); ++c) {
        per_class[seen_names[c]] = {{"accuracy", metrics.per_class_accuracy[c]},
                                    {"precision", metrics.per_class_precision[c]},
                                    {"f1", metrics.per_class_f1[c]}};
      }
      json out_json = {{"macro_f1", metrics.macro_f1},
                       {"overall_f", metrics.overall_f},
                       {"accuracy", accuracy},
                       {"n_samples", cm.total()},
                       {"source", cl_use_gt ? "ground-truth" : "rsnet-predictions"},
                       {"per_class", per_class}};
      std::ofstream out(out_dir / "metrics.json");
      out << out_json.dump(2) << '\n';
    }
    write_resolved_config(classify_cmd, out_dir);
    emit_status({{"status", "ok"},
                 {"command", "classify"},
                 {"macro_f1", metrics.macro_f1},
                 {"accuracy", accuracy},
                 {"confusion", (out_dir / "confusion.csv").string()}});
  });

  // ---- colearn -----------------------------------------------------------
  auto* colearn_cmd =
      app.add_subcommand("colearn", "Joint spectral + terrain-property training");
  colearn_cmd->set_config("--config");
  std::string co_data, co_out, co_mode = "compact", co_ratios = "";
  std::size_t co_epochs = 50, co_batch = 16;
  double co_lr = 1e-3, co_lambda = 1.0;
  std::uint64_t co_seed = 0;
  std::int64_t co_split_seed = -1;
  std::vector<std::string> co_holdout;
  colearn_cmd->add_option("--data", co_data, "Dataset manifest with property values")->required();
  colearn_cmd->add_option("--epochs", co_epochs, "Training epochs")->check(CLI::PositiveNumber);
  colearn_cmd->add_option("--lr", co_lr, "Adam learning rate")->check(CLI::PositiveNumber);
  colearn_cmd->add_option("--batch", co_batch, "Minibatch size")->check(CLI::PositiveNumber);
  colearn_cmd->add_option("--seed", co_seed, "Init/shuffle seed");
  colearn_cmd->add_option("--lambda", co_lambda, "Property loss weight")
      ->check(CLI::NonNegativeNumber);
  colearn_cmd->add_option("--mode", co_mode, "Backbone mode");
  colearn_cmd->add_option("--holdout", co_holdout, "Holdout class names");
  colearn_cmd->add_option("--out", co_out, "Output directory")->required();
  colearn_cmd->add_option("--ratios", co_ratios, "Split ratios train:val:test");
  colearn_cmd->add_option("--split-seed", co_split_seed, "Split seed (defaults to --seed)");

  colearn_cmd->callback([&] {
    const auto index = rsnet::load_manifest(co_data);
    rsnet::SplitRatios ratios;
    if (!co_ratios.empty()) {
      std::stringstream ss(co_ratios);
      std::string a, b, c;
      std::getline(ss, a, ':');
      std::getline(ss, b, ':');
      std::getline(ss, c, ':');
      if (c.empty()) throw rsnet::RatioError("--ratios expects train:val:test");
      ratios = {std::stod(a), std::stod(b), std::stod(c)};
    }
    const std::uint64_t split_seed =
        co_split_seed >= 0 ? static_cast<std::uint64_t>(co_split_seed) : co_seed;
    const auto splits = rsnet::split(index, ratios, split_seed, co_holdout);

    rsnet::ModelConfig model_config =
        rsnet::backbone_mode_from_string(co_mode) == rsnet::BackboneMode::compact
            ? rsnet::ModelConfig::compact()
            : rsnet::ModelConfig::pretrained_projected();
    model_config.n_bins = index.axis.n_bins;
    model_config.seed = co_seed;

    rsnet::TrainConfig train_config;
    train_config.epochs = co_epochs;
    train_config.learning_rate = co_lr;
    train_config.batch_size = co_batch;
    train_config.seed = co_seed;

    rsnet::Provenance provenance;
    for (const auto& cls : index.classes) provenance.class_names.push_back(cls.name);
    provenance.holdout_classes = co_holdout;
    provenance.axis = index.axis;
    provenance.norm_constant = index.norm_constant;
    provenance.split = ratios;
    provenance.split_seed = split_seed;

    const auto train_data = rsnet::load_dataset(splits.train);
    rsnet::LoadedDataset val_data;
    if (!splits.val.records.empty()) val_data = rsnet::load_dataset(splits.val);

    fs::create_directories(co_out);
    const auto result = rsnet::train_colearn(model_config, train_data, val_data, train_config,
                                             co_lambda, provenance);
    const fs::path out_dir(co_out);
    rsnet::save_checkpoint(result.final, out_dir / "ckpt_final.zip");
    rsnet::save_checkpoint(result.best, out_dir / "ckpt_best.zip");
    write_history_csv(out_dir / "history.csv", result.history);

    const auto test_data = rsnet::load_dataset(splits.test);
    const auto report = rsnet::evaluate_colearn(result.final, test_data);
    {
      std::ofstream out(out_dir / "metrics.json");
      out << report_to_json(report).dump(2) << '\n';
    }
    write_resolved_config(colearn_cmd, out_dir);
    json status = {{"status", "ok"},
                   {"command", "colearn"},
                   {"checkpoint", (out_dir / "ckpt_final.zip").string()},
                   {"test_mse", report.mse}};
    if (report.property_rmse) status["property_rmse"] = *report.property_rmse;
    emit_status(status);
  });

  // ---- plot --------------------------------------------------------------
  auto* plot_cmd = app.add_subcommand("plot", "Overlay predicted vs ground-truth profiles");
  plot_cmd->set_config("--config");
  std::string pl_pred, pl_gt, pl_labels = "ground truth,prediction", pl_out;
  plot_cmd->add_option("--pred", pl_pred, "Predicted profile CSV")->required();
  plot_cmd->add_option("--gt", pl_gt, "Ground-truth profile CSV")->required();
  plot_cmd->add_option("--labels", pl_labels, "Legend labels 'gt,pred'");
  plot_cmd->add_option("--out", pl_out, "Figure path (.png or .svg)")->required();

  plot_cmd->callback([&] {
    const auto gt = read_profile_file(pl_gt);
    const auto pred = read_profile_file(pl_pred);
    if (pred.values.size() != gt.values.size()) {
      throw rsnet::LengthMismatch("prediction has " + std::to_string(pred.values.size()) +
                                  " bins, ground truth " + std::to_string(gt.values.size()));
    }
    std::string gt_label = pl_labels, pred_label = "prediction";
    if (const auto comma = pl_labels.find(','); comma != std::string::npos) {
      gt_label = pl_labels.substr(0, comma);
      pred_label = pl_labels.substr(comma + 1);
    }
    const double mse = rsnet::mse_loss(std::span<const float>(pred.values),
                                       std::span<const float>(gt.values));
    rsnet::render_profile_figure(
        pl_out, gt.axis,
        {{gt_label, gt.values, {31, 119, 180}}, {pred_label, pred.values, {214, 39, 40}}});
    {
      std::ofstream out(pl_out + ".json");
      out << json{{"mse", mse}, {"n_bins", gt.values.size()}}.dump(2) << '\n';
    }
    emit_status({{"status", "ok"},
                 {"command", "plot"},
                 {"figure", pl_out},
                 {"sidecar", pl_out + ".json"},
                 {"mse", mse}});
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const rsnet::Error& e) {
    std::cerr << e.what() << std::endl;
    std::string what = e.what();
    std::string kind = "Error";
    if (const auto colon = what.find(':'); colon != std::string::npos) {
      kind = what.substr(0, colon);
    }
    emit_status({{"status", "error"}, {"error", kind}, {"message", what}});
    return 1;
  } catch (const std::exception& e) {
    std::cerr << e.what() << std::endl;
    emit_status({{"status", "error"}, {"error", "Exception"}, {"message", e.what()}});
    return 1;
  }
}
