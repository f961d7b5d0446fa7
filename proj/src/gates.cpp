#include "mmsev/gates.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mmsev/errors.hpp"

namespace mmsev {

Matrix sample_gumbel(std::size_t rows, std::size_t cols, Rng& rng) {
  // open interval keeps both logs finite
  std::uniform_real_distribution<double> unif(std::nextafter(0.0, 1.0), 1.0);
  Matrix g(rows, cols);
  for (auto& v : g.values()) {
    double u = unif(rng);
    if (u >= 1.0) u = std::nextafter(1.0, 0.0);
    v = -std::log(-std::log(u));
  }
  return g;
}

GateSample relax_gates(const Matrix& gate_logits, const Matrix& noise, double temperature) {
  if (!(temperature > 0.0))
    throw ParameterError(fmt::format("gate temperature must be positive, got {}", temperature));
  require_same_shape(gate_logits, noise, "relax_gates");
  Matrix scaled = gate_logits + noise;
  scaled *= 1.0 / temperature;
  return {softmax_rows(scaled), noise};
}

GateSample sample_gates(const GateBank& bank) {
  Rng rng(bank.rng_seed);
  return relax_gates(bank.gate_logits,
                     sample_gumbel(bank.gate_logits.rows(), bank.gate_logits.cols(), rng),
                     bank.temperature);
}

Matrix gated_forward(const Matrix& x, const Matrix& weights, const GateSample& sample,
                     Activation activation) {
  require_same_shape(weights, sample.probabilities, "gated_forward weights vs gates");
  if (x.cols() != weights.cols()) {
    throw ShapeError(fmt::format("gated_forward: input {} has {} features, gates expect {}",
                                 x.shape_string(), x.cols(), weights.cols()));
  }
  return activate(matmul_nt(x, hadamard(sample.probabilities, weights)), activation);
}

GatedBackward gated_backward(const Matrix& x, const Matrix& weights, const GateSample& sample,
                             double temperature, Activation activation, const Matrix& out,
                             const Matrix& d_out) {
  const Matrix& p = sample.probabilities;
  const Matrix effective = hadamard(p, weights);
  const Matrix z = matmul_nt(x, effective);
  const Matrix dz = activate_backward(z, out, d_out, activation);

  GatedBackward g;
  g.d_x = matmul(dz, effective);
  const Matrix d_eff = matmul_tn(dz, x);  // n × m
  g.d_weights = hadamard(d_eff, p);
  Matrix d_p = hadamard(d_eff, weights);
  g.d_logits = softmax_rows_backward(p, d_p);
  g.d_logits *= 1.0 / temperature;
  return g;
}

std::vector<double> gate_scores(const Matrix& gate_logits) {
  std::vector<double> s(gate_logits.cols(), 0.0);
  for (std::size_t i = 0; i < gate_logits.rows(); ++i)
    for (std::size_t j = 0; j < gate_logits.cols(); ++j) s[j] += gate_logits(i, j);
  return s;
}

std::vector<std::size_t> harden_gates(const Matrix& gate_logits, std::size_t k) {
  const std::size_t m = gate_logits.cols();
  if (k > m) throw ParameterError(fmt::format("cannot harden {} gates out of {} features", k, m));
  const auto score = gate_scores(gate_logits);
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  order.resize(k);
  return order;
}

void init_gates(ParamStore& params, std::size_t n_neurons, std::size_t m_features, Rng& rng) {
  params.add(gate_params::kLogits, Matrix(n_neurons, m_features, 0.0));
  // uniform gates scale each neuron's sum by 1/m; compensate so pre-activations start O(1)
  const double m = static_cast<double>(m_features);
  params.add(gate_params::kWeights, random_normal(n_neurons, m_features, std::sqrt(m), rng));
}

}  // namespace mmsev
