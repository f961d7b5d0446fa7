#include "mmsev/model.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "mmsev/errors.hpp"
#include "mmsev/mesh.hpp"
#include "mmsev/text.hpp"

namespace mmsev {

namespace {

constexpr Activation kGateActivation = Activation::kTanh;

std::span<const std::int32_t> clipped(const Example& ex, std::size_t max_len) {
  std::span<const std::int32_t> ids(ex.token_ids);
  return ids.first(std::min(ids.size(), max_len));
}

Matrix first_row_only(std::size_t rows, std::size_t cols, const Matrix& row0) {
  Matrix m(rows, cols, 0.0);
  std::copy(row0.values().begin(), row0.values().end(), m.row(0).begin());
  return m;
}

}  // namespace

ModelSpec make_model_spec(const RunConfig& cfg, std::size_t feature_count, std::size_t vocab_size,
                          bool imported_text) {
  ModelSpec s;
  s.feature_count = feature_count;
  s.vocab_size = imported_text ? 0 : vocab_size;
  s.max_text_len = cfg.max_text_len;
  s.word_dropout = cfg.word_dropout;
  s.d_model = cfg.d_model;
  s.d_k = cfg.d_k == 0 ? cfg.d_model : cfg.d_k;
  s.n_image_tokens = cfg.n_image_tokens;
  s.gate_neurons = cfg.gate_neurons;
  s.fusion = cfg.fusion;
  s.modality = cfg.modality;
  s.imported_text = imported_text;
  s.ae_bottleneck = cfg.ae_bottleneck;
  s.ae_recon_weight = cfg.ae_recon_weight;
  s.loss = cfg.loss;
  s.head.hidden = cfg.hidden;
  s.head.activation = cfg.activation;
  s.head.dropout = cfg.dropout;
  s.head.num_classes = kNumClasses;
  if (s.modality != ModalityMode::kMultimodal)
    s.head.input_width = s.d_model;
  else if (s.fusion == FusionMode::kAutoencoder)
    s.head.input_width = 2 * s.d_model;
  else
    s.head.input_width = s.d_k;
  return s;
}

Model::Model(ModelSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
  Rng rng(init_seed);
  if (spec_.uses_image()) {
    if (spec_.feature_count == 0) throw ParameterError("model: image path needs at least one feature");
    init_gates(params_, spec_.gate_neurons, spec_.feature_count, rng);
    init_image_tokenizer(params_, spec_.gate_neurons, spec_.n_image_tokens, spec_.d_model, rng);
  }
  if (spec_.uses_text()) {
    if (spec_.imported_text)
      params_.add(text_params::kCls, random_normal(1, spec_.d_model, 0.02, rng));
    else
      init_text_embedding(params_, spec_.vocab_size, spec_.max_text_len, spec_.d_model, rng);
  }
  if (spec_.modality == ModalityMode::kMultimodal) {
    if (spec_.fusion == FusionMode::kCrossAttention)
      init_cross_attention(params_, spec_.d_model, spec_.d_k, rng);
    else
      init_autoencoder(params_, spec_.d_model, spec_.ae_bottleneck, rng);
  }
  init_mlp_head(params_, spec_.head, rng);
}

Model::Model(ModelSpec spec, ParamStore params) : spec_(std::move(spec)), params_(std::move(params)) {}

Matrix Model::draw_noise(Rng& rng) const {
  if (!spec_.uses_image()) return Matrix();
  return sample_gumbel(spec_.gate_neurons, spec_.feature_count, rng);
}

GateSample Model::gates(const Matrix& noise, double temperature) const {
  if (!spec_.uses_image()) return {};
  return relax_gates(params_.value(gate_params::kLogits), noise, temperature);
}

GateSample Model::eval_gates(double temperature, std::optional<std::size_t> harden_k) const {
  if (!spec_.uses_image()) return {};
  const Matrix& logits = params_.value(gate_params::kLogits);
  GateSample g = relax_gates(logits, Matrix(logits.rows(), logits.cols(), 0.0), temperature);
  if (!harden_k) return g;
  std::vector<bool> keep(logits.cols(), false);
  for (std::size_t j : harden_gates(logits, *harden_k)) keep[j] = true;
  for (std::size_t i = 0; i < g.probabilities.rows(); ++i) {
    auto row = g.probabilities.row(i);
    double total = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (!keep[j]) row[j] = 0.0;
      total += row[j];
    }
    for (double& v : row) v /= total;
  }
  return g;
}

ClassDistribution Model::forward(const Example& ex, const GateSample& gates, bool train_mode, Rng* dropout_rng,
                                 ForwardCache* cache) const {
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;

  if (spec_.uses_image()) {
    if (ex.features.size() != spec_.feature_count)
      throw ShapeError(fmt::format("subject {}: {} image features, model expects {}", ex.id, ex.features.size(),
                                   spec_.feature_count));
    c.x = Matrix(1, ex.features.size(), ex.features);
    c.gated = gated_forward(c.x, params_.value(gate_params::kWeights), gates, kGateActivation);
    c.image = tokenize_image(c.gated.values(), params_, spec_.n_image_tokens, spec_.d_model);
  }
  if (spec_.uses_text()) {
    if (spec_.imported_text) {
      if (ex.imported.cols() != spec_.d_model)
        throw ShapeError(fmt::format("subject {}: imported text width {} does not match d_model {}", ex.id,
                                     ex.imported.cols(), spec_.d_model));
      c.text = wrap_imported(ex.imported, params_);
    } else {
      const auto ids = clipped(ex, spec_.max_text_len);
      c.token_ids.assign(ids.begin(), ids.end());
      if (train_mode && dropout_rng && spec_.word_dropout > 0.0) {
        std::bernoulli_distribution drop(spec_.word_dropout);
        for (auto& id : c.token_ids)
          if (drop(*dropout_rng)) id = Vocabulary::kUnk;
      }
      c.text = tokenize_text(c.token_ids, params_, spec_.d_model);
    }
  }

  switch (spec_.modality) {
    case ModalityMode::kVisual:
      c.representation = c.image.cls();
      break;
    case ModalityMode::kText:
      c.representation = c.text.cls();
      break;
    case ModalityMode::kMultimodal:
      if (spec_.fusion == FusionMode::kCrossAttention)
        c.representation = cross_attend(c.image, c.text, params_, {}, &c.attention).cls();
      else
        c.representation = autoencoder_fuse(c.image, c.text, params_, &c.autoencoder).cls();
      break;
  }
  return mlp_forward(c.representation, params_, spec_.head, train_mode, dropout_rng, &c.head);
}

double Model::loss(const ForwardCache& cache, std::size_t label) const {
  const auto& logits = cache.head.logits.values();
  double l = spec_.loss == LossMode::kOrdinal ? ordinal_loss_grad(logits, label).loss
                                              : cross_entropy_loss_grad(logits, label).loss;
  if (spec_.modality == ModalityMode::kMultimodal && spec_.fusion == FusionMode::kAutoencoder)
    l += spec_.ae_recon_weight * reconstruction_loss(cache.autoencoder);
  return l;
}

double Model::backward(const Example& ex, const ForwardCache& c, const GateSample& gates, double temperature,
                       double scale) {
  const auto& logits = c.head.logits.values();
  LossGrad lg = spec_.loss == LossMode::kOrdinal ? ordinal_loss_grad(logits, ex.label)
                                                 : cross_entropy_loss_grad(logits, ex.label);
  double total = lg.loss;
  Matrix d_logits(1, lg.d_logits.size(), lg.d_logits);
  d_logits *= scale;
  Matrix d_rep = mlp_backward(c.head, params_, spec_.head, d_logits);

  Matrix d_image, d_text;
  switch (spec_.modality) {
    case ModalityMode::kVisual:
      d_image = first_row_only(c.image.length(), spec_.d_model, d_rep);
      break;
    case ModalityMode::kText:
      d_text = first_row_only(c.text.length(), spec_.d_model, d_rep);
      break;
    case ModalityMode::kMultimodal:
      if (spec_.fusion == FusionMode::kCrossAttention) {
        Matrix d_fused = first_row_only(c.image.length(), spec_.d_k, d_rep);
        auto g = cross_attend_backward(c.attention, params_, {}, d_fused);
        d_image = std::move(g.d_image);
        d_text = std::move(g.d_text);
      } else {
        total += spec_.ae_recon_weight * reconstruction_loss(c.autoencoder);
        auto g = autoencoder_backward(c.autoencoder, params_, d_rep, spec_.ae_recon_weight * scale);
        d_image = first_row_only(c.image.length(), spec_.d_model, g.d_image_cls);
        d_text = first_row_only(c.text.length(), spec_.d_model, g.d_text_cls);
      }
      break;
  }

  if (spec_.uses_image()) {
    auto d_gated = tokenize_image_backward(c.gated.values(), params_, spec_.n_image_tokens, d_image);
    const std::size_t width = d_gated.size();
    Matrix d_out(1, width, std::move(d_gated));
    auto g = gated_backward(c.x, params_.value(gate_params::kWeights), gates, temperature, kGateActivation,
                            c.gated, d_out);
    params_.grad(gate_params::kWeights) += g.d_weights;
    params_.grad(gate_params::kLogits) += g.d_logits;
  }
  if (spec_.uses_text()) {
    if (spec_.imported_text)
      wrap_imported_backward(params_, d_text);
    else
      tokenize_text_backward(c.token_ids, params_, d_text);
  }
  return total;
}

double Model::batch_loss_and_grad(std::span<const Example* const> batch, const GateSample& gates,
                                  double temperature, bool train_mode, Rng* dropout_rng) {
  if (batch.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  double sum = 0.0;
  for (const Example* ex : batch) {
    ForwardCache cache;
    forward(*ex, gates, train_mode, dropout_rng, &cache);
    sum += backward(*ex, cache, gates, temperature, scale);
  }
  return sum * scale;
}

double Model::batch_loss_and_grad(std::span<const Example* const> batch, Rng& noise_rng, double temperature,
                                  bool train_mode, Rng* dropout_rng) {
  if (batch.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(batch.size());
  double sum = 0.0;
  for (const Example* ex : batch) {
    const GateSample g = gates(draw_noise(noise_rng), temperature);
    ForwardCache cache;
    forward(*ex, g, train_mode, dropout_rng, &cache);
    sum += backward(*ex, cache, g, temperature, scale);
  }
  return sum * scale;
}

Matrix Model::attention_map(const Example& ex, const GateSample& gates) const {
  if (spec_.modality != ModalityMode::kMultimodal || spec_.fusion != FusionMode::kCrossAttention)
    throw CompatibilityError("attention weights exist only for multimodal cross-attention models");
  ForwardCache cache;
  forward(ex, gates, false, nullptr, &cache);
  return cache.attention.weights;
}

}  // namespace mmsev
