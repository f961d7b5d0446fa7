#pragma once

// MLP severity head and the two training objectives.

#include <cstdint>
#include <span>
#include <vector>

#include "mmsev/activation.hpp"
#include "mmsev/matrix.hpp"
#include "mmsev/params.hpp"

namespace mmsev {

/// Probabilities over the C ordered classes.
struct ClassDistribution {
  std::vector<double> p;

  std::size_t num_classes() const { return p.size(); }
  /// Ties go to the lower class index.
  std::size_t argmax() const;
  /// Throws InputError unless entries are ≥ 0 and sum to 1 within tol.
  void validate(double tol = 1e-9) const;
};

struct MlpHeadConfig {
  std::size_t input_width = 0;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t num_classes = 4;
  Activation activation = Activation::kTanh;
  double dropout = 0.4;
};

namespace head_params {
std::string weight(std::size_t layer);  // "head.w<l>", in × out
std::string bias(std::size_t layer);    // "head.b<l>", 1 × out
}  // namespace head_params

void init_mlp_head(ParamStore& params, const MlpHeadConfig& cfg, Rng& rng);

struct MlpCache {
  std::vector<Matrix> inputs;  // a^{l-1} for each layer (after dropout)
  std::vector<Matrix> pre;     // z^l
  std::vector<Matrix> post;    // σ(z^l) before dropout, hidden layers only
  std::vector<Matrix> masks;   // inverted-dropout masks, hidden layers only (empty when off)
  Matrix logits;
  ClassDistribution dist;
};

/// z^l = a^{l-1}·W^l + b^l; tanh (or configured σ) on hidden layers, softmax
/// on the last. Dropout on hidden activations only when train_mode is set.
ClassDistribution mlp_forward(const Matrix& input, const ParamStore& params, const MlpHeadConfig& cfg,
                              bool train_mode, Rng* dropout_rng = nullptr, MlpCache* cache = nullptr);

/// Backward from d logits; accumulates parameter gradients and returns d input.
Matrix mlp_backward(const MlpCache& cache, ParamStore& params, const MlpHeadConfig& cfg,
                    const Matrix& d_logits);

/// P(y ≤ j) for j = 1..C.
std::vector<double> cumulative_probs(const ClassDistribution& dist);

inline constexpr double kLogClamp = 1e-12;

/// −Σ_{j=1}^{C−1} [1(y≤j)·log P(y≤j) + 1(y>j)·log P(y>j)] with probabilities
/// clamped to [1e-12, 1−1e-12]. `label` is the 0-based class index.
double ordinal_loss(const ClassDistribution& dist, std::size_t label);
/// −log p_y with the same clamp.
double cross_entropy_loss(const ClassDistribution& dist, std::size_t label);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> d_logits;
};

/// Loss and its gradient w.r.t. the pre-softmax logits.
LossGrad ordinal_loss_grad(std::span<const double> logits, std::size_t label);
LossGrad cross_entropy_loss_grad(std::span<const double> logits, std::size_t label);

ClassDistribution softmax_distribution(std::span<const double> logits);

}  // namespace mmsev
