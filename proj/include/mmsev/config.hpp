#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mmsev/activation.hpp"
#include "mmsev/params.hpp"

namespace mmsev {

enum class FusionMode { kCrossAttention, kAutoencoder };
enum class ModalityMode { kText, kVisual, kMultimodal };
enum class LossMode { kOrdinal, kCrossEntropy };
enum class OversampleMode { kNone, kRos, kSmote };

FusionMode parse_fusion(std::string_view s);        // xattn | ae (long names accepted)
ModalityMode parse_modality(std::string_view s);    // text | visual | multimodal
LossMode parse_loss(std::string_view s);            // ordinal | ce
OversampleMode parse_oversample(std::string_view s);  // none | ros | smote
std::string_view to_string(FusionMode m);
std::string_view to_string(ModalityMode m);
std::string_view to_string(LossMode m);
std::string_view to_string(OversampleMode m);

struct RunConfig {
  // data
  std::filesystem::path patients;
  std::filesystem::path meshes;
  std::filesystem::path thetas;           // optional
  std::filesystem::path text_embeddings;  // optional; replaces the learned text embedding
  std::vector<std::size_t> keypoints;     // empty → default selection

  // model
  std::size_t d_model = 16;
  std::size_t d_k = 0;  // 0 → d_model
  std::size_t n_image_tokens = 4;
  std::size_t gate_neurons = 16;
  double gate_temperature = 2.0;
  std::optional<double> gate_temperature_final;  // linear anneal target
  std::size_t harden_k = 8;
  FusionMode fusion = FusionMode::kCrossAttention;
  ModalityMode modality = ModalityMode::kMultimodal;
  std::size_t ae_bottleneck = 16;
  double ae_recon_weight = 0.1;
  std::vector<std::size_t> hidden = {64, 64};
  Activation activation = Activation::kTanh;
  double dropout = 0.4;
  std::size_t max_text_len = 96;
  double word_dropout = 0.0;

  // training
  LossMode loss = LossMode::kOrdinal;
  OversampleMode oversample = OversampleMode::kRos;
  std::size_t smote_k = 5;
  AdamConfig adam{.learning_rate = 1e-2, .weight_decay = 2.0};
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::size_t lr_patience = 5;
  std::size_t early_stop_patience = 10;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  /// Throws ConfigError on invalid enumerations or ranges.
  void validate() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace mmsev
