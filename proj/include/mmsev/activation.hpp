#pragma once

#include <string_view>

#include "mmsev/matrix.hpp"

namespace mmsev {

enum class Activation { kLinear, kTanh, kRelu, kSigmoid };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

/// Elementwise σ(z).
Matrix activate(const Matrix& z, Activation a);
/// dL/dz given z, σ(z) and dL/dσ(z).
Matrix activate_backward(const Matrix& z, const Matrix& out, const Matrix& dout, Activation a);

}  // namespace mmsev
