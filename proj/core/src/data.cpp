#include "rsnet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rsnet/png_io.hpp"
#include "rsnet/rng.hpp"

namespace rsnet {

namespace {

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string format_float(float v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw SchemaError("cannot parse number '" + std::string(s) + "' in " + context);
  }
  return v;
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

constexpr const char* kManifestColumns = "image_path,spectrum_path,label,condition,property";

}  // namespace

const MaterialClass& DatasetIndex::class_by_name(const std::string& name) const {
  for (const auto& c : classes) {
    if (c.name == name) return c;
  }
  throw UnknownClass("'" + name + "' not in the dataset class table");
}

void SynthConfig::validate() const {
  if (n_classes < 1) throw ConstraintViolation("synthetic dataset needs n_classes >= 1");
  if (samples_per_class < 1) throw ConstraintViolation("samples_per_class >= 1");
  if (n_gaussians_per_template < 1) throw ConstraintViolation("n_gaussians_per_template >= 1");
  if (!(brightness_lo > 0.0 && brightness_lo <= brightness_hi && brightness_hi <= 1.0)) {
    throw ConstraintViolation("brightness range must satisfy 0 < lo <= hi <= 1");
  }
  if (noise_sigma < 0.0) throw ConstraintViolation("noise_sigma >= 0");
  if (texture_sigma < 0.0) throw ConstraintViolation("texture_sigma >= 0");
  if (patch_h < ImagePatch::kMinSide || patch_w < ImagePatch::kMinSide) {
    throw ConstraintViolation("patch size below the " +
                              std::to_string(ImagePatch::kMinSide) + "px backbone minimum");
  }
  axis.validate();
  for (const auto& [a, b] : blends) {
    if (a >= n_classes || b >= n_classes) {
      throw ConstraintViolation("blend references class beyond n_classes");
    }
  }
}

std::array<double, 3> BoxResponses::rgb_of(std::span<const float> profile,
                                           const WavelengthAxis& axis) const {
  if (profile.size() != axis.n_bins) {
    throw LengthMismatch("profile has " + std::to_string(profile.size()) + " bins, axis " +
                         std::to_string(axis.n_bins));
  }
  std::array<double, 3> sums{0.0, 0.0, 0.0};
  std::array<std::size_t, 3> counts{0, 0, 0};
  for (std::size_t i = 0; i < axis.n_bins; ++i) {
    const double lambda = axis.bin_center(i);
    if (lambda >= red_lo && lambda < red_hi) {
      sums[0] += profile[i];
      ++counts[0];
    } else if (lambda >= green_lo && lambda < green_hi) {
      sums[1] += profile[i];
      ++counts[1];
    } else if (lambda >= blue_lo && lambda < blue_hi) {
      sums[2] += profile[i];
      ++counts[2];
    }
  }
  std::array<double, 3> rgb{0.0, 0.0, 0.0};
  for (std::size_t c = 0; c < 3; ++c) {
    if (counts[c] == 0) {
      throw ConstraintViolation("axis has no bins inside one of the RGB response boxes");
    }
    rgb[c] = sums[c] / static_cast<double>(counts[c]);
  }
  return rgb;
}

void write_spectrum_csv(const std::filesystem::path& path, std::span<const float> values,
                        const WavelengthAxis& axis) {
  if (values.size() != axis.n_bins) {
    throw LengthMismatch("spectrum length " + std::to_string(values.size()) +
                         " does not match axis " + std::to_string(axis.n_bins));
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot create " + path.string());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << format_double(axis.bin_center(i)) << ',' << format_float(values[i]) << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<float> read_spectrum_csv(const std::filesystem::path& path,
                                     const WavelengthAxis& axis) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<float> values;
  values.reserve(axis.n_bins);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line, ',');
    if (fields.size() != 2) {
      throw SchemaError(path.string() + ":" + std::to_string(row) + " expects 2 columns");
    }
    values.push_back(static_cast<float>(
        parse_double(trim(fields[1]), path.string() + ":" + std::to_string(row))));
  }
  if (values.size() != axis.n_bins) {
    throw LengthMismatch(path.string() + " has " + std::to_string(values.size()) +
                         " rows, axis declares " + std::to_string(axis.n_bins));
  }
  return values;
}

DatasetIndex load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw MissingFile("manifest " + manifest_path.string());
  const auto base_dir = manifest_path.parent_path();

  DatasetIndex index;
  bool have_axis = false, have_norm = false, have_columns = false;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::string where = manifest_path.string() + ":" + std::to_string(row);

    if (stripped.rfind("# axis:", 0) == 0) {
      const auto fields = split_fields(trim(stripped.substr(7)), ',');
      if (fields.size() != 3) throw SchemaError(where + " axis header needs lo,hi,n_bins");
      index.axis.lambda_min_nm = parse_double(trim(fields[0]), where);
      index.axis.lambda_max_nm = parse_double(trim(fields[1]), where);
      index.axis.n_bins = static_cast<std::size_t>(parse_double(trim(fields[2]), where));
      index.axis.validate();
      have_axis = true;
      continue;
    }
    if (stripped.rfind("# norm:", 0) == 0) {
      index.norm_constant = parse_double(trim(stripped.substr(7)), where);
      if (!(index.norm_constant > 0.0)) throw SchemaError(where + " norm must be positive");
      have_norm = true;
      continue;
    }
    if (stripped.rfind('#', 0) == 0) continue;

    if (!have_columns) {
      if (stripped != kManifestColumns) {
        throw SchemaError(where + " expected column header '" + kManifestColumns + "'");
      }
      have_columns = true;
      continue;
    }

    const auto fields = split_fields(line, ',');
    if (fields.size() != 5) {
      throw SchemaError(where + " has " + std::to_string(fields.size()) +
                        " columns, expected 5");
    }
    SampleRecord record;
    record.image_path = base_dir / trim(fields[0]);
    record.spectrum_path = base_dir / trim(fields[1]);
    const std::string label = trim(fields[2]);
    if (label.empty()) throw SchemaError(where + " empty label");
    record.condition = trim(fields[3]);
    const std::string property = trim(fields[4]);
    if (!property.empty()) record.property_value = parse_double(property, where);

    if (!std::filesystem::exists(record.image_path)) {
      throw MissingFile(where + " image " + record.image_path.string());
    }
    if (!std::filesystem::exists(record.spectrum_path)) {
      throw MissingFile(where + " spectrum " + record.spectrum_path.string());
    }

    auto it = std::find_if(index.classes.begin(), index.classes.end(),
                           [&](const MaterialClass& c) { return c.name == label; });
    if (it == index.classes.end()) {
      index.classes.push_back({static_cast<int>(index.classes.size()), label});
      it = index.classes.end() - 1;
    }
    record.label = *it;
    index.records.push_back(std::move(record));
  }

  if (!have_axis || !have_norm || !have_columns) {
    throw SchemaError(manifest_path.string() + " is missing axis/norm/column headers");
  }
  if (index.records.empty()) throw EmptyManifest(manifest_path.string() + " has no data rows");
  return index;
}

NormalizedProfile normalize_profile(const std::vector<float>& raw, double norm_constant,
                                    const WavelengthAxis& axis) {
  if (!(norm_constant > 0.0)) throw ConstraintViolation("norm_constant must be positive");
  if (raw.size() != axis.n_bins) {
    throw LengthMismatch("raw spectrum has " + std::to_string(raw.size()) + " bins, axis " +
                         std::to_string(axis.n_bins));
  }
  std::vector<float> values(raw.size());
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] < 0.0f) {
      throw NegativeCount("bin " + std::to_string(i) + " is negative: " +
                          std::to_string(raw[i]));
    }
    const double v = static_cast<double>(raw[i]) / norm_constant;
    if (v > 1.0) {
      values[i] = 1.0f;
      ++clipped;
    } else {
      values[i] = static_cast<float>(v);
    }
  }
  return {SpectralProfile::ground_truth(std::move(values), axis), clipped};
}

ImagePatch extract_patch(const ImageU8& frame, std::pair<std::size_t, std::size_t> center,
                         std::pair<std::size_t, std::size_t> size) {
  const auto [crow, ccol] = center;
  const auto [h, w] = size;
  const std::ptrdiff_t r0 = static_cast<std::ptrdiff_t>(crow) - static_cast<std::ptrdiff_t>(h / 2);
  const std::ptrdiff_t c0 = static_cast<std::ptrdiff_t>(ccol) - static_cast<std::ptrdiff_t>(w / 2);
  if (r0 < 0 || c0 < 0 || r0 + static_cast<std::ptrdiff_t>(h) > static_cast<std::ptrdiff_t>(frame.height) ||
      c0 + static_cast<std::ptrdiff_t>(w) > static_cast<std::ptrdiff_t>(frame.width)) {
    throw OutOfBounds("window " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                      std::to_string(crow) + "," + std::to_string(ccol) + ") leaves the " +
                      std::to_string(frame.height) + "x" + std::to_string(frame.width) +
                      " frame");
  }
  Tensor<float> chw({3, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t src =
          ((static_cast<std::size_t>(r0) + y) * frame.width + static_cast<std::size_t>(c0) + x) * 3;
      for (std::size_t c = 0; c < 3; ++c) {
        chw[(c * h + y) * w + x] = static_cast<float>(frame.rgb[src + c]) / 255.0f;
      }
    }
  }
  return ImagePatch(std::move(chw));
}

namespace {

struct ClassTemplate {
  std::vector<float> values;  // sampled on the axis, max 1.0
};

std::vector<float> gaussian_mixture(const WavelengthAxis& axis,
                                    const std::vector<std::array<double, 3>>& components) {
  std::vector<float> out(axis.n_bins, 0.0f);
  for (std::size_t i = 0; i < axis.n_bins; ++i) {
    const double lambda = axis.bin_center(i);
    double v = 0.0;
    for (const auto& [amp, mu, sigma] : components) {
      const double z = (lambda - mu) / sigma;
      v += amp * std::exp(-0.5 * z * z);
    }
    out[i] = static_cast<float>(v);
  }
  return out;
}

void scale_to_unit_max(std::vector<float>& v) {
  const float peak = *std::max_element(v.begin(), v.end());
  if (peak <= 0.0f) throw ConstraintViolation("degenerate template with non-positive peak");
  for (float& x : v) x /= peak;
}

}  // namespace

SynthDataset synth_generate(const SynthConfig& config, const std::filesystem::path& out_dir) {
  config.validate();
  const WavelengthAxis& axis = config.axis;

  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  std::filesystem::create_directories(out_dir / "spectra", ec);
  if (ec) throw IoError("cannot create output directories under " + out_dir.string());

  // Template parameters come from their own stream so they do not depend on
  // sample counts. The dominant peak of each class sweeps the visible range,
  // which keeps class colors apart; secondary humps land anywhere.
  Rng template_rng(config.seed);
  const double span = axis.lambda_max_nm - axis.lambda_min_nm;
  double vis_lo = std::max(axis.lambda_min_nm, 400.0);
  double vis_hi = std::min(axis.lambda_max_nm, 700.0);
  if (!(vis_lo < vis_hi)) {
    vis_lo = axis.lambda_min_nm;
    vis_hi = axis.lambda_max_nm;
  }

  SynthDataset dataset;
  const std::size_t total_classes = config.n_classes + config.blends.size();
  for (std::size_t m = 0; m < config.n_classes; ++m) {
    std::vector<std::array<double, 3>> components;  // amp, mu, sigma
    const double slot = (vis_hi - vis_lo) / static_cast<double>(config.n_classes);
    const double mu0 = vis_lo + (static_cast<double>(m) + 0.5) * slot +
                       template_rng.uniform(-0.2, 0.2) * slot;
    components.push_back({1.0, mu0, span * template_rng.uniform(0.04, 0.08)});
    for (std::size_t k = 1; k < config.n_gaussians_per_template; ++k) {
      components.push_back({template_rng.uniform(0.2, 0.7),
                            template_rng.uniform(axis.lambda_min_nm, axis.lambda_max_nm),
                            span * template_rng.uniform(0.03, 0.12)});
    }
    auto t = gaussian_mixture(axis, components);
    scale_to_unit_max(t);
    dataset.templates.push_back(std::move(t));
  }
  for (const auto& [a, b] : config.blends) {
    std::vector<float> t(axis.n_bins);
    for (std::size_t i = 0; i < axis.n_bins; ++i) {
      t[i] = 0.5f * (dataset.templates[a][i] + dataset.templates[b][i]);
    }
    dataset.templates.push_back(std::move(t));
  }

  const BoxResponses boxes;
  for (std::size_t m = 0; m < total_classes; ++m) {
    dataset.colors.push_back(boxes.rgb_of(dataset.templates[m], axis));
    dataset.friction.push_back(0.2 + 0.1 * static_cast<double>(m));
  }

  // Class colors must stay distinguishable both in absolute value and in
  // direction, since brightness scales colors along a ray.
  for (std::size_t i = 0; i < total_classes; ++i) {
    for (std::size_t j = i + 1; j < total_classes; ++j) {
      double d2 = 0.0, di2 = 0.0, dj2 = 0.0, dn2 = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        d2 += (dataset.colors[i][c] - dataset.colors[j][c]) *
              (dataset.colors[i][c] - dataset.colors[j][c]);
        di2 += dataset.colors[i][c] * dataset.colors[i][c];
        dj2 += dataset.colors[j][c] * dataset.colors[j][c];
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const double ni = dataset.colors[i][c] / std::sqrt(std::max(di2, 1e-30));
        const double nj = dataset.colors[j][c] / std::sqrt(std::max(dj2, 1e-30));
        dn2 += (ni - nj) * (ni - nj);
      }
      if (!(d2 > 1e-6) || !(dn2 > 1e-6)) {
        throw ConstraintViolation("classes " + std::to_string(i) + " and " + std::to_string(j) +
                                  " render to indistinguishable colors; pick another seed");
      }
    }
  }

  auto class_name = [&](std::size_t m) {
    if (m < config.n_classes) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "mat%02zu", m);
      return std::string(buf);
    }
    const auto& [a, b] = config.blends[m - config.n_classes];
    return "blend" + std::to_string(a) + "_" + std::to_string(b);
  };

  std::ostringstream manifest;
  manifest << "# axis: " << format_double(axis.lambda_min_nm) << ','
           << format_double(axis.lambda_max_nm) << ',' << axis.n_bins << '\n';
  manifest << "# norm: 1\n";
  manifest << kManifestColumns << '\n';

  Rng sample_rng(config.seed ^ 0xA5A5A5A5DEADBEEFull);
  const std::size_t hw = config.patch_h * config.patch_w;
  std::vector<float> profile(axis.n_bins);
  ImageU8 image{config.patch_h, config.patch_w,
                std::vector<std::uint8_t>(hw * 3, 0)};

  for (std::size_t m = 0; m < total_classes; ++m) {
    const std::string name = class_name(m);
    for (std::size_t s = 0; s < config.samples_per_class; ++s) {
      const double b = sample_rng.uniform(config.brightness_lo, config.brightness_hi);
      for (std::size_t i = 0; i < axis.n_bins; ++i) {
        const double v = b * static_cast<double>(dataset.templates[m][i]) +
                         sample_rng.normal(0.0, config.noise_sigma);
        profile[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
      const double property = sample_rng.normal(dataset.friction[m], 0.01);
      for (std::size_t p = 0; p < hw; ++p) {
        for (std::size_t c = 0; c < 3; ++c) {
          const double v = dataset.colors[m][c] * b +
                           sample_rng.normal(0.0, config.texture_sigma);
          image.rgb[p * 3 + c] =
              static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
      }

      char stem[48];
      std::snprintf(stem, sizeof(stem), "%s_%04zu", name.c_str(), s);
      const std::string image_rel = std::string("images/") + stem + ".png";
      const std::string spectrum_rel = std::string("spectra/") + stem + ".csv";
      write_png(out_dir / image_rel, image);
      write_spectrum_csv(out_dir / spectrum_rel, profile, axis);
      manifest << image_rel << ',' << spectrum_rel << ',' << name << ",synthetic,";
      if (config.with_property) manifest << format_double(property);
      manifest << '\n';
    }
  }

  const auto manifest_path = out_dir / "manifest.csv";
  {
    std::ofstream out(manifest_path);
    if (!out) throw IoError("cannot create " + manifest_path.string());
    out << manifest.str();
  }
  dataset.index = load_manifest(manifest_path);
  return dataset;
}

SplitResult split(const DatasetIndex& index, const SplitRatios& ratios, std::uint64_t seed,
                  const std::vector<std::string>& holdout_classes) {
  if (!(ratios.train > 0.0 && ratios.val > 0.0 && ratios.test > 0.0)) {
    throw RatioError("split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw RatioError("split ratios sum to " +
                     std::to_string(ratios.train + ratios.val + ratios.test) + ", expected 1");
  }
  std::vector<bool> held(index.classes.size(), false);
  for (const auto& name : holdout_classes) {
    held[static_cast<std::size_t>(index.class_by_name(name).id)] = true;
  }

  SplitResult out;
  for (DatasetIndex* part : {&out.train, &out.val, &out.test}) {
    part->classes = index.classes;
    part->axis = index.axis;
    part->norm_constant = index.norm_constant;
  }

  Rng rng(seed ^ 0x5851F42D4C957F2Dull);
  for (const auto& cls : index.classes) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < index.records.size(); ++i) {
      if (index.records[i].label.id == cls.id) rows.push_back(i);
    }
    if (rows.empty()) continue;
    if (held[static_cast<std::size_t>(cls.id)]) {
      for (std::size_t r : rows) out.test.records.push_back(index.records[r]);
      continue;
    }
    rng.shuffle(rows);
    const std::size_t n = rows.size();
    std::size_t n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
    std::size_t n_val = static_cast<std::size_t>(std::llround(ratios.val * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);
    for (std::size_t i = 0; i < n; ++i) {
      const SampleRecord& rec = index.records[rows[i]];
      if (i < n_train) {
        out.train.records.push_back(rec);
      } else if (i < n_train + n_val) {
        out.val.records.push_back(rec);
      } else {
        out.test.records.push_back(rec);
      }
    }
  }
  return out;
}

LoadedDataset load_dataset(const DatasetIndex& index) {
  if (index.records.empty()) throw DataError("dataset index has no records");
  LoadedDataset data;
  data.classes = index.classes;
  data.axis = index.axis;

  const std::size_t n = index.records.size();
  data.labels.resize(n);
  data.properties.resize(n);
  data.profiles = Tensor<float>({n, index.axis.n_bins});

  std::size_t h = 0, w = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const SampleRecord& rec = index.records[i];
    try {
      const ImageU8 image = read_png(rec.image_path);
      if (i == 0) {
        h = image.height;
        w = image.width;
        data.images = Tensor<float>({n, 3, h, w});
      } else if (image.height != h || image.width != w) {
        throw DataError("image size " + std::to_string(image.height) + "x" +
                        std::to_string(image.width) + " differs from first sample");
      }
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          for (std::size_t c = 0; c < 3; ++c) {
            data.images(i, c, y, x) =
                static_cast<float>(image.rgb[(y * w + x) * 3 + c]) / 255.0f;
          }
        }
      }
      const auto raw = read_spectrum_csv(rec.spectrum_path, index.axis);
      const auto normalized = normalize_profile(raw, index.norm_constant, index.axis);
      std::copy(normalized.profile.values().begin(), normalized.profile.values().end(),
                data.profiles.data() + i * index.axis.n_bins);
      data.labels[i] = rec.label.id;
      data.properties[i] = rec.property_value;
    } catch (const DataError&) {
      throw;
    } catch (const Error& e) {
      throw DataError("row " + std::to_string(i) + " (" + rec.image_path.string() +
                      "): " + e.what());
    }
  }
  return data;
}

}  // namespace rsnet
