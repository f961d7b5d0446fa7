#include "mmsev/fusion.hpp"

#include <fmt/format.h>

#include <cmath>

#include "mmsev/errors.hpp"

namespace mmsev {

namespace {

constexpr double kNormEps = 1e-5;

void require_d_model(const TokenSequence& image, const TokenSequence& text, const Matrix& wq) {
  if (image.d_model() != text.d_model())
    throw ShapeError(fmt::format("cross-attention: image d_model {} differs from text d_model {}",
                                 image.d_model(), text.d_model()));
  if (wq.rows() != image.d_model())
    throw ShapeError(fmt::format("cross-attention: projections expect d_model {}, got {}", wq.rows(),
                                 image.d_model()));
}

}  // namespace

void init_cross_attention(ParamStore& params, std::size_t d_model, std::size_t d_k, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(d_model));
  params.add(fusion_params::kQuery, random_normal(d_model, d_k, s, rng));
  params.add(fusion_params::kKey, random_normal(d_model, d_k, s, rng));
  params.add(fusion_params::kValue, random_normal(d_model, d_k, s, rng));
  if (d_k != d_model) params.add(fusion_params::kResidual, random_normal(d_model, d_k, s, rng));
  params.add(fusion_params::kNormGain, Matrix(1, d_k, 1.0));
  params.add(fusion_params::kNormBias, Matrix(1, d_k, 0.0));
}

Matrix attention_weights(const TokenSequence& image, const TokenSequence& text, const ParamStore& params) {
  const Matrix& wq = params.value(fusion_params::kQuery);
  require_d_model(image, text, wq);
  const Matrix q = matmul(image.tokens, wq);
  const Matrix k = matmul(text.tokens, params.value(fusion_params::kKey));
  Matrix scores = matmul_nt(q, k);
  scores *= 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return softmax_rows(scores);
}

TokenSequence cross_attend(const TokenSequence& image, const TokenSequence& text, const ParamStore& params,
                           const CrossAttentionOptions& opts, CrossAttentionCache* cache) {
  const Matrix& wq = params.value(fusion_params::kQuery);
  require_d_model(image, text, wq);
  CrossAttentionCache local;
  CrossAttentionCache& c = cache ? *cache : local;
  c.image = image.tokens;
  c.text = text.tokens;
  c.q = matmul(image.tokens, wq);
  c.k = matmul(text.tokens, params.value(fusion_params::kKey));
  c.v = matmul(text.tokens, params.value(fusion_params::kValue));
  const std::size_t d_k = c.q.cols();
  Matrix scores = matmul_nt(c.q, c.k);
  scores *= 1.0 / std::sqrt(static_cast<double>(d_k));
  c.weights = softmax_rows(scores);
  c.pre_norm = matmul(c.weights, c.v);
  if (opts.residual) {
    if (params.contains(fusion_params::kResidual))
      c.pre_norm += matmul(image.tokens, params.value(fusion_params::kResidual));
    else
      c.pre_norm += image.tokens;
  }
  if (!opts.layer_norm) return {c.pre_norm, Modality::kFused};

  const Matrix& gain = params.value(fusion_params::kNormGain);
  const Matrix& bias = params.value(fusion_params::kNormBias);
  c.normalized = Matrix(c.pre_norm.rows(), d_k);
  c.inv_std.assign(c.pre_norm.rows(), 0.0);
  Matrix out(c.pre_norm.rows(), d_k);
  for (std::size_t i = 0; i < c.pre_norm.rows(); ++i) {
    const auto r = c.pre_norm.row(i);
    double mean = 0.0;
    for (double v : r) mean += v;
    mean /= static_cast<double>(d_k);
    double var = 0.0;
    for (double v : r) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d_k);
    const double inv = 1.0 / std::sqrt(var + kNormEps);
    c.inv_std[i] = inv;
    for (std::size_t j = 0; j < d_k; ++j) {
      c.normalized(i, j) = (r[j] - mean) * inv;
      out(i, j) = gain(0, j) * c.normalized(i, j) + bias(0, j);
    }
  }
  return {std::move(out), Modality::kFused};
}

CrossAttentionGrad cross_attend_backward(const CrossAttentionCache& c, ParamStore& params,
                                         const CrossAttentionOptions& opts, const Matrix& d_out) {
  const std::size_t d_k = c.q.cols();
  Matrix d_pre = d_out;
  if (opts.layer_norm) {
    const Matrix& gain = params.value(fusion_params::kNormGain);
    Matrix& d_gain = params.grad(fusion_params::kNormGain);
    Matrix& d_bias = params.grad(fusion_params::kNormBias);
    const double n = static_cast<double>(d_k);
    for (std::size_t i = 0; i < d_out.rows(); ++i) {
      double sum_dx = 0.0;
      double sum_dx_xhat = 0.0;
      std::vector<double> dxhat(d_k);
      for (std::size_t j = 0; j < d_k; ++j) {
        d_gain(0, j) += d_out(i, j) * c.normalized(i, j);
        d_bias(0, j) += d_out(i, j);
        dxhat[j] = d_out(i, j) * gain(0, j);
        sum_dx += dxhat[j];
        sum_dx_xhat += dxhat[j] * c.normalized(i, j);
      }
      for (std::size_t j = 0; j < d_k; ++j)
        d_pre(i, j) = c.inv_std[i] / n * (n * dxhat[j] - sum_dx - c.normalized(i, j) * sum_dx_xhat);
    }
  }

  CrossAttentionGrad g;
  g.d_image = Matrix(c.image.rows(), c.image.cols());
  if (opts.residual) {
    if (params.contains(fusion_params::kResidual)) {
      params.grad(fusion_params::kResidual) += matmul_tn(c.image, d_pre);
      g.d_image += matmul_nt(d_pre, params.value(fusion_params::kResidual));
    } else {
      g.d_image += d_pre;
    }
  }

  const Matrix d_weights = matmul_nt(d_pre, c.v);
  const Matrix d_v = matmul_tn(c.weights, d_pre);
  Matrix d_scores = softmax_rows_backward(c.weights, d_weights);
  d_scores *= 1.0 / std::sqrt(static_cast<double>(d_k));
  const Matrix d_q = matmul(d_scores, c.k);
  const Matrix d_k_mat = matmul_tn(d_scores, c.q);

  const Matrix& wq = params.value(fusion_params::kQuery);
  const Matrix& wk = params.value(fusion_params::kKey);
  const Matrix& wv = params.value(fusion_params::kValue);
  params.grad(fusion_params::kQuery) += matmul_tn(c.image, d_q);
  params.grad(fusion_params::kKey) += matmul_tn(c.text, d_k_mat);
  params.grad(fusion_params::kValue) += matmul_tn(c.text, d_v);
  g.d_image += matmul_nt(d_q, wq);
  g.d_text = matmul_nt(d_k_mat, wk) + matmul_nt(d_v, wv);
  return g;
}

void init_autoencoder(ParamStore& params, std::size_t d_model, std::size_t bottleneck, Rng& rng) {
  const std::size_t width = 2 * d_model;
  if (bottleneck == 0 || bottleneck >= width)
    throw ParameterError(fmt::format("autoencoder bottleneck {} must be in [1, {})", bottleneck, width));
  params.add(ae_params::kEncW, random_normal(width, bottleneck, 1.0 / std::sqrt(double(width)), rng));
  params.add(ae_params::kEncB, Matrix(1, bottleneck, 0.0));
  params.add(ae_params::kDecW, random_normal(bottleneck, width, 1.0 / std::sqrt(double(bottleneck)), rng));
  params.add(ae_params::kDecB, Matrix(1, width, 0.0));
}

TokenSequence autoencoder_fuse(const TokenSequence& image, const TokenSequence& text, const ParamStore& params,
                               AutoencoderCache* cache) {
  if (image.d_model() != text.d_model())
    throw ShapeError(fmt::format("autoencoder fusion: image d_model {} differs from text d_model {}",
                                 image.d_model(), text.d_model()));
  const std::size_t d = image.d_model();
  const Matrix& enc_w = params.value(ae_params::kEncW);
  if (enc_w.rows() != 2 * d)
    throw ShapeError(fmt::format("autoencoder fusion: encoder expects width {}, got {}", enc_w.rows(), 2 * d));
  AutoencoderCache local;
  AutoencoderCache& c = cache ? *cache : local;
  c.input = Matrix(1, 2 * d);
  for (std::size_t j = 0; j < d; ++j) {
    c.input(0, j) = image.tokens(0, j);
    c.input(0, d + j) = text.tokens(0, j);
  }
  c.hidden = add_row(matmul(c.input, enc_w), params.value(ae_params::kEncB));
  for (auto& v : c.hidden.values()) v = std::tanh(v);
  c.output = add_row(matmul(c.hidden, params.value(ae_params::kDecW)), params.value(ae_params::kDecB));
  return {c.output, Modality::kFused};
}

double reconstruction_loss(const AutoencoderCache& c) {
  double s = 0.0;
  for (std::size_t j = 0; j < c.input.cols(); ++j) {
    const double e = c.output(0, j) - c.input(0, j);
    s += e * e;
  }
  return s / static_cast<double>(c.input.cols());
}

AutoencoderGrad autoencoder_backward(const AutoencoderCache& c, ParamStore& params, const Matrix& d_out,
                                     double recon_weight) {
  const std::size_t width = c.input.cols();
  Matrix d_r = d_out;
  for (std::size_t j = 0; j < width; ++j)
    d_r(0, j) += recon_weight * 2.0 * (c.output(0, j) - c.input(0, j)) / static_cast<double>(width);
  params.grad(ae_params::kDecW) += matmul_tn(c.hidden, d_r);
  params.grad(ae_params::kDecB) += d_r;
  Matrix d_pre = matmul_nt(d_r, params.value(ae_params::kDecW));
  for (std::size_t j = 0; j < d_pre.cols(); ++j) d_pre(0, j) *= 1.0 - c.hidden(0, j) * c.hidden(0, j);
  params.grad(ae_params::kEncW) += matmul_tn(c.input, d_pre);
  params.grad(ae_params::kEncB) += d_pre;
  Matrix d_in = matmul_nt(d_pre, params.value(ae_params::kEncW));
  // the input is also the reconstruction target
  for (std::size_t j = 0; j < width; ++j)
    d_in(0, j) -= recon_weight * 2.0 * (c.output(0, j) - c.input(0, j)) / static_cast<double>(width);
  const std::size_t d = width / 2;
  AutoencoderGrad g{Matrix(1, d), Matrix(1, d)};
  for (std::size_t j = 0; j < d; ++j) {
    g.d_image_cls(0, j) = d_in(0, j);
    g.d_text_cls(0, j) = d_in(0, d + j);
  }
  return g;
}

}  // namespace mmsev
