#include "mmsev/params.hpp"

#include <fmt/format.h>

#include <cmath>

#include "mmsev/errors.hpp"

namespace mmsev {

Matrix& ParamStore::add(const std::string& name, Matrix init) {
  if (contains(name)) throw ParameterError(fmt::format("parameter '{}' already registered", name));
  Parameter p;
  p.grad = Matrix(init.rows(), init.cols());
  p.first_moment = Matrix(init.rows(), init.cols());
  p.second_moment = Matrix(init.rows(), init.cols());
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second.value;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw LookupError(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw LookupError(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

Matrix& ParamStore::value(const std::string& name) { return at(name).value; }
const Matrix& ParamStore::value(const std::string& name) const { return at(name).value; }
Matrix& ParamStore::grad(const std::string& name) { return at(name).grad; }
const Matrix& ParamStore::grad(const std::string& name) const { return at(name).grad; }

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.fill(0.0);
}

void ParamStore::adam_step(const AdamConfig& cfg) {
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [_, p] : params_) {
    auto w = p.value.values();
    auto g = p.grad.values();
    auto m = p.first_moment.values();
    auto v = p.second_moment.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      w[i] -= cfg.learning_rate * (m_hat / (std::sqrt(v_hat) + cfg.epsilon) + cfg.weight_decay * w[i]);
    }
  }
}

bool same_values(const ParamStore& a, const ParamStore& b) {
  if (a.params_.size() != b.params_.size()) return false;
  auto ib = b.params_.begin();
  for (const auto& [name, p] : a.params_) {
    if (name != ib->first || !(p.value == ib->second.value)) return false;
    ++ib;
  }
  return true;
}

Matrix random_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

Matrix random_uniform(std::size_t rows, std::size_t cols, double limit, Rng& rng) {
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 over the pair
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace mmsev
