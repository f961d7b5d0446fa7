#pragma once

// Image-query / text-key-value cross-attention with a residual connection and
// post-attention layer norm, plus the autoencoder fusion baseline.

#include "mmsev/matrix.hpp"
#include "mmsev/params.hpp"
#include "mmsev/tokens.hpp"

namespace mmsev {

namespace fusion_params {
inline constexpr const char* kQuery = "fusion.wq";         // d_model × d_k
inline constexpr const char* kKey = "fusion.wk";           // d_model × d_k
inline constexpr const char* kValue = "fusion.wv";         // d_model × d_k
inline constexpr const char* kResidual = "fusion.wr";      // d_model × d_k, only when d_k != d_model
inline constexpr const char* kNormGain = "fusion.ln_gain"; // 1 × d_k
inline constexpr const char* kNormBias = "fusion.ln_bias"; // 1 × d_k
}  // namespace fusion_params

struct CrossAttentionOptions {
  bool residual = true;
  bool layer_norm = true;
};

void init_cross_attention(ParamStore& params, std::size_t d_model, std::size_t d_k, Rng& rng);

struct CrossAttentionCache {
  Matrix image, text;
  Matrix q, k, v;
  Matrix weights;     // softmax(QKᵀ/√d_k)
  Matrix pre_norm;    // attention output (+ residual)
  Matrix normalized;  // (pre_norm − μ)/σ per row
  std::vector<double> inv_std;
};

/// softmax(QKᵀ/√d_k) with Q = image·W_q, K = text·W_k.
Matrix attention_weights(const TokenSequence& image, const TokenSequence& text, const ParamStore& params);

/// Fused sequence with the image's row count.
TokenSequence cross_attend(const TokenSequence& image, const TokenSequence& text, const ParamStore& params,
                           const CrossAttentionOptions& opts = {}, CrossAttentionCache* cache = nullptr);

struct CrossAttentionGrad {
  Matrix d_image;
  Matrix d_text;
};

/// Accumulates parameter gradients and returns input gradients.
CrossAttentionGrad cross_attend_backward(const CrossAttentionCache& cache, ParamStore& params,
                                         const CrossAttentionOptions& opts, const Matrix& d_out);

namespace ae_params {
inline constexpr const char* kEncW = "ae.enc_w";  // 2d × bottleneck
inline constexpr const char* kEncB = "ae.enc_b";
inline constexpr const char* kDecW = "ae.dec_w";  // bottleneck × 2d
inline constexpr const char* kDecB = "ae.dec_b";
}  // namespace ae_params

/// Throws ParameterError unless bottleneck < 2·d_model.
void init_autoencoder(ParamStore& params, std::size_t d_model, std::size_t bottleneck, Rng& rng);

struct AutoencoderCache {
  Matrix input;   // 1 × 2d concatenated CLS rows
  Matrix hidden;  // 1 × bottleneck, tanh output
  Matrix output;  // 1 × 2d reconstruction
};

/// Single fused row: the decoder output for [image CLS, text CLS].
TokenSequence autoencoder_fuse(const TokenSequence& image, const TokenSequence& text, const ParamStore& params,
                               AutoencoderCache* cache = nullptr);
/// Mean squared reconstruction error of the cached forward pass.
double reconstruction_loss(const AutoencoderCache& cache);

struct AutoencoderGrad {
  Matrix d_image_cls;
  Matrix d_text_cls;
};

/// d_out is the gradient w.r.t. the fused row; recon_weight scales the
/// reconstruction term, differentiated through both output and target.
AutoencoderGrad autoencoder_backward(const AutoencoderCache& cache, ParamStore& params, const Matrix& d_out,
                                     double recon_weight);

}  // namespace mmsev
