#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mmsev/matrix.hpp"

namespace mmsev {

struct Parameter {
  Matrix value;
  Matrix grad;
  Matrix first_moment;
  Matrix second_moment;
};

struct AdamConfig {
  double learning_rate = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Decoupled decay: w -= lr·weight_decay·w each step.
  double weight_decay = 0.0;
};

/// Named trainable matrices with gradient accumulators and Adam state.
/// Iteration order is the lexicographic order of names.
class ParamStore {
 public:
  Matrix& add(const std::string& name, Matrix init);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  Matrix& value(const std::string& name);
  const Matrix& value(const std::string& name) const;
  Matrix& grad(const std::string& name);
  const Matrix& grad(const std::string& name) const;

  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  std::size_t step_count() const { return step_; }

  void zero_grad();
  /// One bias-corrected Adam update over every parameter; increments the step count.
  void adam_step(const AdamConfig& cfg);

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Values only; used for checkpoint comparison.
  friend bool same_values(const ParamStore& a, const ParamStore& b);

 private:
  std::map<std::string, Parameter> params_;
  std::size_t step_ = 0;
};

using Rng = std::mt19937_64;

/// Gaussian init with the given standard deviation.
Matrix random_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng);
/// Uniform init in [-limit, limit].
Matrix random_uniform(std::size_t rows, std::size_t cols, double limit, Rng& rng);

/// Derives an independent stream seed from a base seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace mmsev
