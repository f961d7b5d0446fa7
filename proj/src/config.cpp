#include "mmsev/config.hpp"

#include <fmt/format.h>

#include <fstream>
#include <set>

#include "mmsev/csv.hpp"
#include "mmsev/errors.hpp"

namespace mmsev {

FusionMode parse_fusion(std::string_view s) {
  if (s == "xattn" || s == "cross_attention") return FusionMode::kCrossAttention;
  if (s == "ae" || s == "autoencoder") return FusionMode::kAutoencoder;
  throw ConfigError(fmt::format("unknown fusion mode '{}' (xattn|ae)", s));
}

ModalityMode parse_modality(std::string_view s) {
  if (s == "text") return ModalityMode::kText;
  if (s == "visual") return ModalityMode::kVisual;
  if (s == "multimodal") return ModalityMode::kMultimodal;
  throw ConfigError(fmt::format("unknown modality '{}' (text|visual|multimodal)", s));
}

LossMode parse_loss(std::string_view s) {
  if (s == "ordinal") return LossMode::kOrdinal;
  if (s == "ce" || s == "cross_entropy") return LossMode::kCrossEntropy;
  throw ConfigError(fmt::format("unknown loss '{}' (ordinal|ce)", s));
}

OversampleMode parse_oversample(std::string_view s) {
  if (s == "none") return OversampleMode::kNone;
  if (s == "ros") return OversampleMode::kRos;
  if (s == "smote") return OversampleMode::kSmote;
  throw ConfigError(fmt::format("unknown oversampling '{}' (none|ros|smote)", s));
}

std::string_view to_string(FusionMode m) { return m == FusionMode::kCrossAttention ? "xattn" : "ae"; }
std::string_view to_string(ModalityMode m) {
  switch (m) {
    case ModalityMode::kText: return "text";
    case ModalityMode::kVisual: return "visual";
    case ModalityMode::kMultimodal: return "multimodal";
  }
  return "multimodal";
}
std::string_view to_string(LossMode m) { return m == LossMode::kOrdinal ? "ordinal" : "ce"; }
std::string_view to_string(OversampleMode m) {
  switch (m) {
    case OversampleMode::kNone: return "none";
    case OversampleMode::kRos: return "ros";
    case OversampleMode::kSmote: return "smote";
  }
  return "none";
}

void RunConfig::validate() const {
  auto fail = [](std::string msg) { throw ConfigError(std::move(msg)); };
  if (d_model == 0) fail("d_model must be positive");
  if (n_image_tokens == 0) fail("n_image_tokens must be positive");
  if (gate_neurons == 0) fail("gate_neurons must be positive");
  if (!(gate_temperature > 0.0)) fail("gate_temperature must be positive");
  if (gate_temperature_final && !(*gate_temperature_final > 0.0)) fail("gate_temperature_final must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(fmt::format("dropout {} outside [0, 1)", dropout));
  if (epochs == 0) fail("epochs must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (seeds.empty()) fail("at least one seed is required");
  if (!(adam.learning_rate > 0.0)) fail("learning_rate must be positive");
  if (!(adam.weight_decay >= 0.0)) fail("weight_decay must be non-negative");
  if (fusion == FusionMode::kAutoencoder && modality == ModalityMode::kMultimodal &&
      (ae_bottleneck == 0 || ae_bottleneck >= 2 * d_model))
    fail(fmt::format("ae_bottleneck {} must be in [1, {})", ae_bottleneck, 2 * d_model));
  if (max_text_len == 0) fail("max_text_len must be positive");
  if (!(word_dropout >= 0.0 && word_dropout < 1.0)) fail(fmt::format("word_dropout {} outside [0, 1)", word_dropout));
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["patients"] = c.patients.string();
  j["meshes"] = c.meshes.string();
  j["thetas"] = c.thetas.string();
  j["text_embeddings"] = c.text_embeddings.string();
  j["keypoints"] = c.keypoints;
  j["d_model"] = c.d_model;
  j["d_k"] = c.d_k;
  j["n_image_tokens"] = c.n_image_tokens;
  j["gate_neurons"] = c.gate_neurons;
  j["gate_temperature"] = c.gate_temperature;
  j["gate_temperature_final"] = c.gate_temperature_final ? nlohmann::json(*c.gate_temperature_final) : nlohmann::json();
  j["harden_k"] = c.harden_k;
  j["fusion"] = to_string(c.fusion);
  j["modality"] = to_string(c.modality);
  j["ae_bottleneck"] = c.ae_bottleneck;
  j["ae_recon_weight"] = c.ae_recon_weight;
  j["hidden"] = c.hidden;
  j["activation"] = to_string(c.activation);
  j["dropout"] = c.dropout;
  j["max_text_len"] = c.max_text_len;
  j["word_dropout"] = c.word_dropout;
  j["loss"] = to_string(c.loss);
  j["oversample"] = to_string(c.oversample);
  j["smote_k"] = c.smote_k;
  j["learning_rate"] = c.adam.learning_rate;
  j["adam_beta1"] = c.adam.beta1;
  j["adam_beta2"] = c.adam.beta2;
  j["adam_epsilon"] = c.adam.epsilon;
  j["weight_decay"] = c.adam.weight_decay;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr_patience"] = c.lr_patience;
  j["early_stop_patience"] = c.early_stop_patience;
  j["seeds"] = c.seeds;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  static const std::set<std::string> known = [] {
    std::set<std::string> k;
    const nlohmann::json defaults = to_json(RunConfig{});
    for (const auto& [key, _] : defaults.items()) k.insert(key);
    return k;
  }();
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError(fmt::format("unknown config key '{}'", key));

  RunConfig c;
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key) && !j[key].is_null()) j[key].get_to(field);
    };
    auto get_path = [&](const char* key, std::filesystem::path& field) {
      if (j.contains(key) && !j[key].is_null()) field = j[key].get<std::string>();
    };
    auto get_enum = [&](const char* key, auto& field, auto parse) {
      if (j.contains(key) && !j[key].is_null()) field = parse(j[key].get<std::string>());
    };
    get_path("patients", c.patients);
    get_path("meshes", c.meshes);
    get_path("thetas", c.thetas);
    get_path("text_embeddings", c.text_embeddings);
    get("keypoints", c.keypoints);
    get("d_model", c.d_model);
    get("d_k", c.d_k);
    get("n_image_tokens", c.n_image_tokens);
    get("gate_neurons", c.gate_neurons);
    get("gate_temperature", c.gate_temperature);
    if (j.contains("gate_temperature_final") && !j["gate_temperature_final"].is_null())
      c.gate_temperature_final = j["gate_temperature_final"].get<double>();
    get("harden_k", c.harden_k);
    get_enum("fusion", c.fusion, parse_fusion);
    get_enum("modality", c.modality, parse_modality);
    get("ae_bottleneck", c.ae_bottleneck);
    get("ae_recon_weight", c.ae_recon_weight);
    get("hidden", c.hidden);
    get_enum("activation", c.activation, parse_activation);
    get("dropout", c.dropout);
    get("max_text_len", c.max_text_len);
    get("word_dropout", c.word_dropout);
    get_enum("loss", c.loss, parse_loss);
    get_enum("oversample", c.oversample, parse_oversample);
    get("smote_k", c.smote_k);
    get("learning_rate", c.adam.learning_rate);
    get("adam_beta1", c.adam.beta1);
    get("adam_beta2", c.adam.beta2);
    get("adam_epsilon", c.adam.epsilon);
    get("weight_decay", c.adam.weight_decay);
    get("epochs", c.epochs);
    get("batch_size", c.batch_size);
    get("lr_patience", c.lr_patience);
    get("early_stop_patience", c.early_stop_patience);
    get("seeds", c.seeds);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("invalid config value: {}", e.what()));
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  RunConfig c = run_config_from_json(j);
  // relative data paths resolve against the config file's directory
  const auto base = path.parent_path();
  for (auto* p : {&c.patients, &c.meshes, &c.thetas, &c.text_embeddings})
    if (!p->empty() && p->is_relative()) *p = base / *p;
  return c;
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  auto out = csv::open_output(path);
  out << to_json(cfg).dump(2) << '\n';
}

}  // namespace mmsev
