#pragma once

#include <string_view>

#include "mmsev/matrix.hpp"

namespace mmsev {

enum class Modality { kImage, kText, kFused };

std::string_view to_string(Modality m);

/// (n+1) × d_model token matrix; row 0 is the classification token.
struct TokenSequence {
  Matrix tokens;
  Modality modality = Modality::kImage;

  std::size_t length() const { return tokens.rows(); }
  std::size_t d_model() const { return tokens.cols(); }
  Matrix cls() const { return Matrix::row_vector(tokens.row(0)); }
};

/// Prepends the classification row: cls_param + mean(content rows).
/// Without an encoder stack the learnable token alone would carry no input
/// information, so its output summarizes the content rows.
Matrix prepend_cls(const Matrix& content, const Matrix& cls_param);

/// Splits d(prepend_cls output) into (d content, d cls_param).
struct ClsBackward {
  Matrix d_content;
  Matrix d_cls;
};
ClsBackward prepend_cls_backward(const Matrix& d_tokens);

}  // namespace mmsev
