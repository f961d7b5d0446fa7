#include "mmsev/activation.hpp"

#include <fmt/format.h>

#include <cmath>

#include "mmsev/errors.hpp"

namespace mmsev {

Activation parse_activation(std::string_view name) {
  if (name == "linear") return Activation::kLinear;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw ConfigError(fmt::format("unknown activation '{}'", name));
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::kLinear: return "linear";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "linear";
}

Matrix activate(const Matrix& z, Activation a) {
  Matrix out = z;
  for (auto& v : out.values()) {
    switch (a) {
      case Activation::kLinear: break;
      case Activation::kTanh: v = std::tanh(v); break;
      case Activation::kRelu: v = v > 0.0 ? v : 0.0; break;
      case Activation::kSigmoid: v = 1.0 / (1.0 + std::exp(-v)); break;
    }
  }
  return out;
}

Matrix activate_backward(const Matrix& z, const Matrix& out, const Matrix& dout, Activation a) {
  require_same_shape(z, dout, "activate_backward");
  Matrix dz = dout;
  auto d = dz.values();
  auto zv = z.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < d.size(); ++i) {
    switch (a) {
      case Activation::kLinear: break;
      case Activation::kTanh: d[i] *= 1.0 - ov[i] * ov[i]; break;
      case Activation::kRelu: d[i] *= zv[i] > 0.0 ? 1.0 : 0.0; break;
      case Activation::kSigmoid: d[i] *= ov[i] * (1.0 - ov[i]); break;
    }
  }
  return dz;
}

}  // namespace mmsev
