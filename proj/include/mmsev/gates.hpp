#pragma once

// Stochastic feature gates. Each neuron i owns a distribution over the m input
// features, P[i,:] = softmax((log G[i,:] + g[i,:]) / τ) with Gumbel noise g,
// and computes σ(Σ_j P[i,j]·w[i,j]·x[j]).

#include <cstdint>
#include <vector>

#include "mmsev/activation.hpp"
#include "mmsev/matrix.hpp"
#include "mmsev/params.hpp"

namespace mmsev {

struct GateBank {
  Matrix gate_logits;  // n_neurons × m_features, log G
  double temperature = 0.5;
  std::uint64_t rng_seed = 0;
};

struct GateSample {
  Matrix probabilities;  // rows sum to 1
  Matrix noise;          // the Gumbel draws used
};

/// n×m standard Gumbel draws −log(−log U).
Matrix sample_gumbel(std::size_t rows, std::size_t cols, Rng& rng);

/// Relaxation with explicit noise (pass a zero matrix to disable noise).
GateSample relax_gates(const Matrix& gate_logits, const Matrix& noise, double temperature);
/// Draws noise from bank.rng_seed and relaxes.
GateSample sample_gates(const GateBank& bank);

/// x: batch × m. weights and sample: n × m. Returns batch × n.
Matrix gated_forward(const Matrix& x, const Matrix& weights, const GateSample& sample,
                     Activation activation);

struct GatedBackward {
  Matrix d_x;        // batch × m
  Matrix d_weights;  // n × m
  Matrix d_logits;   // n × m, through the relaxation at fixed noise
};

/// `out` is the forward result for the same inputs.
GatedBackward gated_backward(const Matrix& x, const Matrix& weights, const GateSample& sample,
                             double temperature, Activation activation, const Matrix& out,
                             const Matrix& d_out);

/// Top-k features by row-summed gate logits; ties go to the lower index.
/// Returned in rank order.
std::vector<std::size_t> harden_gates(const Matrix& gate_logits, std::size_t k);
/// Row-summed logits per feature, the score harden_gates ranks by.
std::vector<double> gate_scores(const Matrix& gate_logits);

namespace gate_params {
inline constexpr const char* kLogits = "gate.logits";    // n × m
inline constexpr const char* kWeights = "gate.weights";  // n × m
}  // namespace gate_params

void init_gates(ParamStore& params, std::size_t n_neurons, std::size_t m_features, Rng& rng);

}  // namespace mmsev
