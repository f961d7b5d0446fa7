#include "mmsev/tokens.hpp"

#include <fmt/format.h>

#include "mmsev/errors.hpp"

namespace mmsev {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::kImage: return "image";
    case Modality::kText: return "text";
    case Modality::kFused: return "fused";
  }
  return "image";
}

Matrix prepend_cls(const Matrix& content, const Matrix& cls_param) {
  if (cls_param.rows() != 1 || cls_param.cols() != content.cols()) {
    throw ShapeError(fmt::format("prepend_cls: cls token {} does not fit content {}",
                                 cls_param.shape_string(), content.shape_string()));
  }
  const std::size_t n = content.rows();
  const std::size_t d = content.cols();
  Matrix out(n + 1, d);
  for (std::size_t j = 0; j < d; ++j) out(0, j) = cls_param(0, j);
  if (n > 0) {
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        out(i + 1, j) = content(i, j);
        out(0, j) += content(i, j) * inv;
      }
  }
  return out;
}

ClsBackward prepend_cls_backward(const Matrix& d_tokens) {
  const std::size_t n = d_tokens.rows() - 1;
  const std::size_t d = d_tokens.cols();
  ClsBackward g{Matrix(n, d), Matrix(1, d)};
  for (std::size_t j = 0; j < d; ++j) g.d_cls(0, j) = d_tokens(0, j);
  const double inv = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) g.d_content(i, j) = d_tokens(i + 1, j) + d_tokens(0, j) * inv;
  return g;
}

}  // namespace mmsev
