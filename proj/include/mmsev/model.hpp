#pragma once

// The composed classifier: gated keypoint encoder and image tokens, text
// tokens, fusion, MLP head, and the training objective.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmsev/config.hpp"
#include "mmsev/fusion.hpp"
#include "mmsev/gates.hpp"
#include "mmsev/head.hpp"
#include "mmsev/params.hpp"

namespace mmsev {

struct ModelSpec {
  std::size_t feature_count = 0;  // standardized keypoint features
  std::size_t vocab_size = 0;     // 0 when text comes from imported embeddings
  std::size_t max_text_len = 96;
  double word_dropout = 0.0;       // training-time chance of replacing a token id with UNK
  std::size_t d_model = 16;
  std::size_t d_k = 16;
  std::size_t n_image_tokens = 4;
  std::size_t gate_neurons = 16;
  FusionMode fusion = FusionMode::kCrossAttention;
  ModalityMode modality = ModalityMode::kMultimodal;
  bool imported_text = false;
  std::size_t ae_bottleneck = 16;
  double ae_recon_weight = 0.1;
  LossMode loss = LossMode::kOrdinal;
  MlpHeadConfig head;

  bool uses_image() const { return modality != ModalityMode::kText; }
  bool uses_text() const { return modality != ModalityMode::kVisual; }
};

ModelSpec make_model_spec(const RunConfig& cfg, std::size_t feature_count, std::size_t vocab_size,
                          bool imported_text);

/// One subject as the model sees it.
struct Example {
  std::string id;
  std::size_t label = 0;
  std::vector<double> features;         // standardized keypoint features
  std::vector<std::int32_t> token_ids;  // learned-embedding path
  Matrix imported;                      // imported-embedding path
};

struct ForwardCache {
  Matrix x;            // 1 × m features
  Matrix gated;        // 1 × n gate-layer output
  TokenSequence image;
  TokenSequence text;
  std::vector<std::int32_t> token_ids;  // ids fed to the embedding, after clipping and word dropout
  CrossAttentionCache attention;
  AutoencoderCache autoencoder;
  Matrix representation;  // head input
  MlpCache head;
};

class Model {
 public:
  Model(ModelSpec spec, std::uint64_t init_seed);
  Model(ModelSpec spec, ParamStore params);

  const ModelSpec& spec() const { return spec_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Gumbel noise for one mini-batch (empty when the image path is off).
  Matrix draw_noise(Rng& rng) const;
  GateSample gates(const Matrix& noise, double temperature) const;
  /// Noise-free gates; with harden_k only the top-k features keep mass.
  GateSample eval_gates(double temperature, std::optional<std::size_t> harden_k = std::nullopt) const;

  ClassDistribution forward(const Example& ex, const GateSample& gates, bool train_mode,
                            Rng* dropout_rng = nullptr, ForwardCache* cache = nullptr) const;

  /// Loss of one example (head objective plus weighted reconstruction term).
  double loss(const ForwardCache& cache, std::size_t label) const;

  /// Accumulates scale·∂loss/∂θ for one cached example and returns its loss.
  double backward(const Example& ex, const ForwardCache& cache, const GateSample& gates, double temperature,
                  double scale);

  /// Mean loss over the examples with gradients accumulated (not zeroed).
  double batch_loss_and_grad(std::span<const Example* const> batch, const GateSample& gates, double temperature,
                             bool train_mode, Rng* dropout_rng);
  /// As above with an independent gate noise draw per example.
  double batch_loss_and_grad(std::span<const Example* const> batch, Rng& noise_rng, double temperature,
                             bool train_mode, Rng* dropout_rng);

  /// Cross-attention weights (image rows × text rows) for one example.
  Matrix attention_map(const Example& ex, const GateSample& gates) const;

 private:
  ModelSpec spec_;
  ParamStore params_;
};

}  // namespace mmsev
