#include <cstring>

#include <json.hpp>

#include "rsnet/training.hpp"
#include "rsnet/zip.hpp"

namespace rsnet {

using nlohmann::json;

namespace {

json config_to_json(const ModelConfig& c) {
  return json{{"backbone_mode", to_string(c.backbone_mode)},
              {"stem_channels", c.stem_channels},
              {"growth_rate", c.growth_rate},
              {"block1_layers", c.block1_layers},
              {"block2_layers", c.block2_layers},
              {"compression", c.compression},
              {"fused_channels", c.fused_channels},
              {"pool_h", c.pool_h},
              {"pool_w", c.pool_w},
              {"n_bins", c.n_bins},
              {"seed", c.seed},
              {"transition_pool", to_string(c.transition_pool)},
              {"head_dropout", c.head_dropout}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.backbone_mode = backbone_mode_from_string(j.at("backbone_mode").get<std::string>());
  c.stem_channels = j.at("stem_channels").get<std::size_t>();
  c.growth_rate = j.at("growth_rate").get<std::size_t>();
  c.block1_layers = j.at("block1_layers").get<std::size_t>();
  c.block2_layers = j.at("block2_layers").get<std::size_t>();
  c.compression = j.at("compression").get<double>();
  c.fused_channels = j.at("fused_channels").get<std::size_t>();
  c.pool_h = j.at("pool_h").get<std::size_t>();
  c.pool_w = j.at("pool_w").get<std::size_t>();
  c.n_bins = j.at("n_bins").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.transition_pool = transition_pool_from_string(j.at("transition_pool").get<std::string>());
  c.head_dropout = j.at("head_dropout").get<double>();
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"epochs", c.epochs},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"seed", c.seed},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"loss", "mse"},
              {"optimizer", "adam"}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<std::size_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.adam_eps = j.at("adam_eps").get<double>();
  return c;
}

json provenance_to_json(const Provenance& p) {
  return json{{"class_names", p.class_names},
              {"holdout_classes", p.holdout_classes},
              {"axis",
               {{"lambda_min_nm", p.axis.lambda_min_nm},
                {"lambda_max_nm", p.axis.lambda_max_nm},
                {"n_bins", p.axis.n_bins}}},
              {"norm_constant", p.norm_constant},
              {"split", {{"train", p.split.train}, {"val", p.split.val}, {"test", p.split.test}}},
              {"split_seed", p.split_seed}};
}

Provenance provenance_from_json(const json& j) {
  Provenance p;
  p.class_names = j.at("class_names").get<std::vector<std::string>>();
  p.holdout_classes = j.at("holdout_classes").get<std::vector<std::string>>();
  p.axis.lambda_min_nm = j.at("axis").at("lambda_min_nm").get<double>();
  p.axis.lambda_max_nm = j.at("axis").at("lambda_max_nm").get<double>();
  p.axis.n_bins = j.at("axis").at("n_bins").get<std::size_t>();
  p.norm_constant = j.at("norm_constant").get<double>();
  p.split.train = j.at("split").at("train").get<double>();
  p.split.val = j.at("split").at("val").get<double>();
  p.split.test = j.at("split").at("test").get<double>();
  p.split_seed = j.at("split_seed").get<std::uint64_t>();
  return p;
}

std::string tensor_entry_name(const std::string& name) { return "tensors/" + name + ".bin"; }

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json manifest;
  manifest["format_version"] = ckpt.format_version;
  manifest["model_kind"] = ckpt.model_kind;
  manifest["model_config"] = config_to_json(ckpt.model_config);
  manifest["train_config"] = train_config_to_json(ckpt.train_config);
  manifest["provenance"] = provenance_to_json(ckpt.provenance);
  manifest["metrics"] = json{{"final_train_loss", ckpt.metrics.final_train_loss},
                             {"final_val_loss", ckpt.metrics.final_val_loss},
                             {"best_val_loss", ckpt.metrics.best_val_loss},
                             {"best_epoch", ckpt.metrics.best_epoch}};
  json tensors = json::array();
  for (const auto& [name, tensor] : ckpt.tensors) {
    tensors.push_back(json{{"name", name},
                           {"shape", tensor.shape()},
                           {"dtype", "f32"},
                           {"file", tensor_entry_name(name)},
                           {"offset", 0},
                           {"nbytes", tensor.size() * sizeof(float)}});
  }
  manifest["tensors"] = std::move(tensors);

  ZipWriter writer(path);
  writer.add_entry("manifest.json", manifest.dump(2));
  for (const auto& [name, tensor] : ckpt.tensors) {
    writer.add_entry(tensor_entry_name(name), tensor.data(), tensor.size() * sizeof(float));
  }
  writer.finish();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingFile("checkpoint " + path.string());
  ZipReader reader(path);

  json manifest;
  try {
    manifest = json::parse(reader.read_text("manifest.json"));
  } catch (const json::exception& e) {
    throw CorruptArchive("manifest.json unreadable in " + path.string() + ": " + e.what());
  }

  Checkpoint ckpt;
  try {
    ckpt.format_version = manifest.at("format_version").get<int>();
    if (ckpt.format_version != Checkpoint::kFormatVersion) {
      throw VersionMismatch("checkpoint format " + std::to_string(ckpt.format_version) +
                            ", this build reads " + std::to_string(Checkpoint::kFormatVersion));
    }
    ckpt.model_kind = manifest.at("model_kind").get<std::string>();
    ckpt.model_config = config_from_json(manifest.at("model_config"));
    ckpt.train_config = train_config_from_json(manifest.at("train_config"));
    ckpt.provenance = provenance_from_json(manifest.at("provenance"));
    const auto& metrics = manifest.at("metrics");
    ckpt.metrics.final_train_loss = metrics.at("final_train_loss").get<double>();
    ckpt.metrics.final_val_loss = metrics.at("final_val_loss").get<double>();
    ckpt.metrics.best_val_loss = metrics.at("best_val_loss").get<double>();
    ckpt.metrics.best_epoch = metrics.at("best_epoch").get<std::size_t>();

    for (const auto& entry : manifest.at("tensors")) {
      const std::string name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      const std::size_t nbytes = entry.at("nbytes").get<std::size_t>();
      if (entry.at("dtype").get<std::string>() != "f32") {
        throw CorruptArchive("tensor '" + name + "' has unsupported dtype");
      }
      const std::size_t expected = Tensor<float>::count(shape) * sizeof(float);
      if (nbytes != expected) {
        throw CorruptArchive("tensor '" + name + "' declares " + std::to_string(nbytes) +
                             " bytes but its shape needs " + std::to_string(expected));
      }
      const auto bytes = reader.read(entry.at("file").get<std::string>());
      if (bytes.size() != expected) {
        throw CorruptArchive("tensor '" + name + "' payload is " +
                             std::to_string(bytes.size()) + " bytes, expected " +
                             std::to_string(expected));
      }
      Tensor<float> tensor(shape);
      std::memcpy(tensor.data(), bytes.data(), bytes.size());
      ckpt.tensors.emplace(name, std::move(tensor));
    }
  } catch (const json::exception& e) {
    throw CorruptArchive("manifest.json malformed in " + path.string() + ": " + e.what());
  }
  return ckpt;
}

std::map<std::string, Tensor<float>> snapshot_tensors(const nn::ParamRefs<float>& refs) {
  std::map<std::string, Tensor<float>> out;
  for (const auto& ref : refs) out.emplace(ref.name, *ref.value);
  return out;
}

void restore_tensors(const nn::ParamRefs<float>& refs,
                     const std::map<std::string, Tensor<float>>& tensors) {
  if (refs.size() != tensors.size()) {
    throw CorruptArchive("checkpoint holds " + std::to_string(tensors.size()) +
                         " tensors, model expects " + std::to_string(refs.size()));
  }
  for (const auto& ref : refs) {
    auto it = tensors.find(ref.name);
    if (it == tensors.end()) throw CorruptArchive("checkpoint lacks tensor '" + ref.name + "'");
    if (!(it->second.shape() == ref.value->shape())) {
      throw CorruptArchive("tensor '" + ref.name + "' shape mismatch");
    }
    *ref.value = it->second;
  }
}

}  // namespace rsnet
