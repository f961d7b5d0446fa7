#include "mmsev/checkpoint.hpp"

#include <fmt/format.h>

#include <cmath>

#include "mmsev/csv.hpp"
#include "mmsev/errors.hpp"
#include "mmsev/mesh.hpp"

namespace mmsev {

FeatureScaler FeatureScaler::fit(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw InputError("FeatureScaler::fit: no rows");
  const std::size_t m = rows.front().size();
  FeatureScaler s;
  s.mean.assign(m, 0.0);
  s.scale.assign(m, 0.0);
  for (const auto& r : rows) {
    if (r.size() != m) throw ShapeError("FeatureScaler::fit: ragged rows");
    for (std::size_t j = 0; j < m; ++j) s.mean[j] += r[j];
  }
  const double n = static_cast<double>(rows.size());
  for (double& v : s.mean) v /= n;
  for (const auto& r : rows)
    for (std::size_t j = 0; j < m; ++j) s.scale[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
  for (double& v : s.scale) {
    v = std::sqrt(v / n);
    if (!(v > 1e-12)) v = 1.0;
  }
  return s;
}

std::vector<double> FeatureScaler::apply(std::span<const double> row) const {
  if (row.size() != mean.size())
    throw ShapeError(fmt::format("scaler expects {} features, got {}", mean.size(), row.size()));
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = (row[j] - mean[j]) / scale[j];
  return out;
}

std::vector<double> FeatureScaler::invert(std::span<const double> row) const {
  if (row.size() != mean.size())
    throw ShapeError(fmt::format("scaler expects {} features, got {}", mean.size(), row.size()));
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = row[j] * scale[j] + mean[j];
  return out;
}

ModelSpec Checkpoint::spec() const {
  return make_model_spec(config, 3 * keypoints.size(), vocab.size(), imported_text);
}

Model Checkpoint::model() const { return Model(spec(), params); }

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json j;
  j["format"] = "mmsev-checkpoint";
  j["version"] = Checkpoint::kVersion;
  j["config"] = to_json(ckpt.config);
  j["seed"] = ckpt.seed;
  j["keypoints"] = ckpt.keypoints;
  j["scaler"] = {{"mean", ckpt.scaler.mean}, {"scale", ckpt.scaler.scale}};
  j["vocab"] = ckpt.vocab.words();
  j["imported_text"] = ckpt.imported_text;
  j["temperature"] = ckpt.temperature;
  j["epoch"] = ckpt.epoch;
  j["best_validation_accuracy"] = ckpt.best_validation_accuracy;
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, p] : ckpt.params) {
    if (!p.value.all_finite()) throw DivergenceError(fmt::format("checkpoint: parameter {} is not finite", name));
    params[name] = {{"rows", p.value.rows()}, {"cols", p.value.cols()}, {"data", p.value.storage()}};
  }
  j["params"] = std::move(params);
  auto out = csv::open_output(path);
  out << j.dump() << '\n';
  if (!out) throw FormatError(fmt::format("{}: write failed", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: not a checkpoint ({})", path.string(), e.what()));
  }
  if (!j.is_object() || j.value("format", "") != "mmsev-checkpoint")
    throw FormatError(fmt::format("{}: not a checkpoint", path.string()));
  if (j.value("version", 0) != Checkpoint::kVersion)
    throw CompatibilityError(fmt::format("{}: checkpoint version {} is not supported (expected {})", path.string(),
                                         j.value("version", 0), Checkpoint::kVersion));
  Checkpoint c;
  try {
    c.config = run_config_from_json(j.at("config"));
    c.seed = j.at("seed").get<std::uint64_t>();
    c.keypoints = j.at("keypoints").get<std::vector<std::size_t>>();
    c.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
    c.scaler.scale = j.at("scaler").at("scale").get<std::vector<double>>();
    c.vocab = Vocabulary::from_words(j.at("vocab").get<std::vector<std::string>>());
    c.imported_text = j.at("imported_text").get<bool>();
    c.temperature = j.at("temperature").get<double>();
    c.epoch = j.at("epoch").get<std::size_t>();
    c.best_validation_accuracy = j.at("best_validation_accuracy").get<double>();
    for (const auto& [name, p] : j.at("params").items()) {
      const auto rows = p.at("rows").get<std::size_t>();
      const auto cols = p.at("cols").get<std::size_t>();
      auto data = p.at("data").get<std::vector<double>>();
      if (data.size() != rows * cols)
        throw FormatError(fmt::format("{}: parameter {} has {} values for shape {}x{}", path.string(), name,
                                      data.size(), rows, cols));
      c.params.add(name, Matrix(rows, cols, std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("{}: malformed checkpoint ({})", path.string(), e.what()));
  }
  KeypointSelection check(c.keypoints);
  if (c.scaler.mean.size() != check.feature_count() || c.scaler.scale.size() != check.feature_count())
    throw CompatibilityError(fmt::format("{}: scaler width does not match {} keypoint features", path.string(),
                                         check.feature_count()));
  // Parameter names and shapes must be exactly those of a fresh model.
  const Model fresh(c.spec(), std::uint64_t{0});
  for (const auto& [name, p] : fresh.params()) {
    if (!c.params.contains(name))
      throw CompatibilityError(fmt::format("{}: missing parameter {}", path.string(), name));
    const Matrix& v = c.params.value(name);
    if (v.rows() != p.value.rows() || v.cols() != p.value.cols())
      throw CompatibilityError(fmt::format("{}: parameter {} is {}, model expects {}", path.string(), name,
                                           v.shape_string(), p.value.shape_string()));
  }
  if (c.params.size() != fresh.params().size())
    throw CompatibilityError(fmt::format("{}: unexpected extra parameters", path.string()));
  return c;
}

}  // namespace mmsev
