#include "mmsev/head.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "mmsev/errors.hpp"

namespace mmsev {

std::size_t ClassDistribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

void ClassDistribution::validate(double tol) const {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw InputError(fmt::format("class probability {} is negative or NaN", v));
    s += v;
  }
  if (std::abs(s - 1.0) > tol) throw InputError(fmt::format("class probabilities sum to {}, not 1", s));
}

namespace head_params {
std::string weight(std::size_t layer) { return fmt::format("head.w{}", layer); }
std::string bias(std::size_t layer) { return fmt::format("head.b{}", layer); }
}  // namespace head_params

namespace {

std::vector<std::size_t> layer_widths(const MlpHeadConfig& cfg) {
  std::vector<std::size_t> w{cfg.input_width};
  w.insert(w.end(), cfg.hidden.begin(), cfg.hidden.end());
  w.push_back(cfg.num_classes);
  return w;
}

void require_label(std::size_t label, std::size_t classes) {
  if (label >= classes)
    throw LabelError(fmt::format("label {} outside 0..{}", label, classes == 0 ? 0 : classes - 1));
}

}  // namespace

void init_mlp_head(ParamStore& params, const MlpHeadConfig& cfg, Rng& rng) {
  if (!(cfg.dropout >= 0.0 && cfg.dropout < 1.0))
    throw ParameterError(fmt::format("dropout {} outside [0, 1)", cfg.dropout));
  const auto w = layer_widths(cfg);
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(w[l]));
    params.add(head_params::weight(l), random_normal(w[l], w[l + 1], scale, rng));
    params.add(head_params::bias(l), Matrix(1, w[l + 1], 0.0));
  }
}

ClassDistribution softmax_distribution(std::span<const double> logits) {
  const Matrix p = softmax_rows(Matrix::row_vector(logits));
  return {std::vector<double>(p.values().begin(), p.values().end())};
}

ClassDistribution mlp_forward(const Matrix& input, const ParamStore& params, const MlpHeadConfig& cfg,
                              bool train_mode, Rng* dropout_rng, MlpCache* cache) {
  if (input.rows() != 1 || input.cols() != cfg.input_width)
    throw ShapeError(fmt::format("mlp_forward: input {} does not match head width {}", input.shape_string(),
                                 cfg.input_width));
  const bool drop = train_mode && cfg.dropout > 0.0;
  if (drop && dropout_rng == nullptr) throw ParameterError("dropout in train mode needs an RNG");
  MlpCache local;
  MlpCache& c = cache ? *cache : local;
  c = MlpCache{};
  const std::size_t layers = cfg.hidden.size() + 1;
  Matrix a = input;
  for (std::size_t l = 0; l < layers; ++l) {
    c.inputs.push_back(a);
    Matrix z = add_row(matmul(a, params.value(head_params::weight(l))), params.value(head_params::bias(l)));
    c.pre.push_back(z);
    if (l + 1 == layers) {
      c.logits = z;
      break;
    }
    Matrix h = activate(z, cfg.activation);
    c.post.push_back(h);
    if (drop) {
      std::bernoulli_distribution keep(1.0 - cfg.dropout);
      Matrix mask(h.rows(), h.cols());
      const double scale = 1.0 / (1.0 - cfg.dropout);
      for (auto& m : mask.values()) m = keep(*dropout_rng) ? scale : 0.0;
      h = hadamard(h, mask);
      c.masks.push_back(std::move(mask));
    }
    a = std::move(h);
  }
  c.dist = softmax_distribution(c.logits.values());
  return c.dist;
}

Matrix mlp_backward(const MlpCache& c, ParamStore& params, const MlpHeadConfig& cfg, const Matrix& d_logits) {
  const std::size_t layers = cfg.hidden.size() + 1;
  Matrix dz = d_logits;
  for (std::size_t l = layers; l-- > 0;) {
    params.grad(head_params::weight(l)) += matmul_tn(c.inputs[l], dz);
    params.grad(head_params::bias(l)) += sum_rows(dz);
    Matrix da = matmul_nt(dz, params.value(head_params::weight(l)));
    if (l == 0) return da;
    const std::size_t h = l - 1;
    if (!c.masks.empty()) da = hadamard(da, c.masks[h]);
    dz = activate_backward(c.pre[h], c.post[h], da, cfg.activation);
  }
  return dz;
}

std::vector<double> cumulative_probs(const ClassDistribution& dist) {
  std::vector<double> c(dist.p.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < dist.p.size(); ++i) {
    acc += dist.p[i];
    c[i] = acc;
  }
  if (!c.empty()) c.back() = 1.0;
  return c;
}

namespace {

double clamp_prob(double v) { return std::clamp(v, kLogClamp, 1.0 - kLogClamp); }
bool clamped(double v) { return v < kLogClamp || v > 1.0 - kLogClamp; }

// Loss and dL/dp for the gated ordinal objective. P(y > j) uses the suffix
// sum rather than 1 − P(y ≤ j) so small tails keep their precision.
double ordinal_terms(const std::vector<double>& p, std::size_t label, std::vector<double>* d_p) {
  const std::size_t C = p.size();
  std::vector<double> prefix(C, 0.0), suffix(C, 0.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < C; ++k) prefix[k] = (acc += p[k]);
  acc = 0.0;
  for (std::size_t k = C; k-- > 0;) {
    suffix[k] = acc;  // Σ_{i>k} p_i
    acc += p[k];
  }
  if (d_p) d_p->assign(C, 0.0);
  double loss = 0.0;
  for (std::size_t j = 0; j + 1 < C; ++j) {
    // threshold between class j and j+1 (0-based): "y ≤ j" holds when label ≤ j
    if (label <= j) {
      loss -= std::log(clamp_prob(prefix[j]));
      if (d_p && !clamped(prefix[j]))
        for (std::size_t k = 0; k <= j; ++k) (*d_p)[k] -= 1.0 / prefix[j];
    } else {
      loss -= std::log(clamp_prob(suffix[j]));
      if (d_p && !clamped(suffix[j]))
        for (std::size_t k = j + 1; k < C; ++k) (*d_p)[k] -= 1.0 / suffix[j];
    }
  }
  return loss;
}

std::vector<double> softmax_backward_vec(const std::vector<double>& p, const std::vector<double>& d_p) {
  double dot = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) dot += p[k] * d_p[k];
  std::vector<double> dz(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) dz[k] = p[k] * (d_p[k] - dot);
  return dz;
}

}  // namespace

double ordinal_loss(const ClassDistribution& dist, std::size_t label) {
  require_label(label, dist.p.size());
  return ordinal_terms(dist.p, label, nullptr);
}

double cross_entropy_loss(const ClassDistribution& dist, std::size_t label) {
  require_label(label, dist.p.size());
  return -std::log(clamp_prob(dist.p[label]));
}

LossGrad ordinal_loss_grad(std::span<const double> logits, std::size_t label) {
  require_label(label, logits.size());
  const auto dist = softmax_distribution(logits);
  std::vector<double> d_p;
  LossGrad g;
  g.loss = ordinal_terms(dist.p, label, &d_p);
  g.d_logits = softmax_backward_vec(dist.p, d_p);
  return g;
}

LossGrad cross_entropy_loss_grad(std::span<const double> logits, std::size_t label) {
  require_label(label, logits.size());
  const auto dist = softmax_distribution(logits);
  LossGrad g;
  g.loss = -std::log(clamp_prob(dist.p[label]));
  g.d_logits = dist.p;
  if (!clamped(dist.p[label])) {
    g.d_logits[label] -= 1.0;
  } else {
    std::fill(g.d_logits.begin(), g.d_logits.end(), 0.0);
  }
  return g;
}

}  // namespace mmsev
