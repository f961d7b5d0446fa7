#include <doctest.h>

#include <cmath>

#include "mmsev/errors.hpp"
#include "mmsev/gradcheck.hpp"
#include "mmsev/head.hpp"
#include "support.hpp"

using namespace mmsev;
using mmsev::testing::random_matrix;

namespace {

ClassDistribution dist(std::vector<double> p) { return ClassDistribution{std::move(p)}; }

// Independent evaluation of the gated ordinal objective.
double ordinal_oracle(const std::vector<double>& p, std::size_t y) {
  auto clamp = [](double v) { return std::min(std::max(v, 1e-12), 1.0 - 1e-12); };
  double loss = 0.0, cum = 0.0;
  for (std::size_t j = 0; j + 1 < p.size(); ++j) {
    cum += p[j];
    loss -= y <= j ? std::log(clamp(cum)) : std::log(clamp(1.0 - cum));
  }
  return loss;
}

}  // namespace

TEST_CASE("cumulative probabilities") {
  CHECK(cumulative_probs(dist({0.25, 0.25, 0.25, 0.25})) == std::vector<double>{0.25, 0.5, 0.75, 1.0});
  CHECK(cumulative_probs(dist({1, 0, 0, 0})) == std::vector<double>{1, 1, 1, 1});
  const auto c = cumulative_probs(dist({0.1, 0.2, 0.3, 0.4}));
  const double expected[] = {0.1, 0.3, 0.6, 1.0};
  for (int i = 0; i < 4; ++i) CHECK(c[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("ordinal loss examples") {
  for (std::size_t y = 0; y < 4; ++y) {
    std::vector<double> p(4, 0.0);
    p[y] = 1.0;
    CHECK(ordinal_loss(dist(p), y) <= 3 * std::abs(std::log(1 - 1e-12)) + 1e-15);
  }
  CHECK(ordinal_loss(dist({0.5, 0.5}), 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(ordinal_loss(dist({0.5, 0.5}), 0) == doctest::Approx(0.6931).epsilon(1e-4));
  CHECK(ordinal_loss(dist({0.1, 0, 0, 0.9}), 0) > ordinal_loss(dist({0.1, 0.9, 0, 0}), 0));
  CHECK(std::isfinite(ordinal_loss(dist({0, 0, 0, 1}), 0)));
}

TEST_CASE("ordinal loss matches the oracle on random distributions") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = mmsev::testing::random_simplex(4, rng);
    for (std::size_t y = 0; y < 4; ++y)
      CHECK(ordinal_loss(dist(p), y) == doctest::Approx(ordinal_oracle(p, y)).epsilon(1e-12));
  }
}

TEST_CASE("cross-entropy examples") {
  for (std::size_t y = 0; y < 4; ++y) CHECK(cross_entropy_loss(dist({0.25, 0.25, 0.25, 0.25}), y) == doctest::Approx(std::log(4.0)));
  CHECK(cross_entropy_loss(dist({0.7, 0.1, 0.1, 0.1}), 0) == doctest::Approx(0.3567).epsilon(1e-4));
  CHECK(cross_entropy_loss(dist({0, 1, 0, 0}), 1) < 1e-11);
  CHECK(cross_entropy_loss(dist({0, 1, 0, 0}), 0) == doctest::Approx(-std::log(1e-12)));
}

TEST_CASE("moving a class's mass further from the true class never lowers the ordinal loss") {
  // Enumerate distributions on a 0.05 grid and move all of class a's mass to
  // a class b further from y, on either side.
  const int steps = 20;
  std::size_t checked = 0;
  for (std::size_t y = 0; y < 4; ++y)
    for (int i0 = 0; i0 <= steps; ++i0)
      for (int i1 = 0; i0 + i1 <= steps; ++i1)
        for (int i2 = 0; i0 + i1 + i2 <= steps; ++i2) {
          const std::vector<double> p = {i0 * 0.05, i1 * 0.05, i2 * 0.05, (steps - i0 - i1 - i2) * 0.05};
          const double base = ordinal_loss(dist(p), y);
          for (std::size_t a = 0; a < 4; ++a)
            for (std::size_t b = 0; b < 4; ++b) {
              if (a == y || b == y || p[a] == 0.0) continue;
              if (std::abs(int(b) - int(y)) <= std::abs(int(a) - int(y))) continue;
              auto q = p;
              q[b] += q[a];
              q[a] = 0.0;
              CHECK(ordinal_loss(dist(q), y) >= base - 1e-12);
              ++checked;
            }
        }
  CHECK(checked > 1000);
}

TEST_CASE("partial moves away from the true class on the same side never lower the ordinal loss") {
  const int steps = 20;
  for (std::size_t y = 0; y < 4; ++y)
    for (int i0 = 0; i0 <= steps; ++i0)
      for (int i1 = 0; i0 + i1 <= steps; ++i1)
        for (int i2 = 0; i0 + i1 + i2 <= steps; ++i2) {
          const int cells[4] = {i0, i1, i2, steps - i0 - i1 - i2};
          std::vector<double> p(4);
          for (int c = 0; c < 4; ++c) p[c] = cells[c] * 0.05;
          const double base = ordinal_loss(dist(p), y);
          for (std::size_t a = 0; a < 4; ++a)
            for (std::size_t b = 0; b < 4; ++b) {
              if (a == y || b == y || (a < y) != (b < y)) continue;
              if (std::abs(int(b) - int(y)) <= std::abs(int(a) - int(y))) continue;
              for (int k = 1; k <= cells[a]; ++k) {
                auto q = p;
                q[a] = (cells[a] - k) * 0.05;
                q[b] = (cells[b] + k) * 0.05;
                CHECK(ordinal_loss(dist(q), y) >= base - 1e-12);
              }
            }
        }
}

TEST_CASE("loss gradients with respect to logits match finite differences") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    for (std::size_t y = 0; y < 4; ++y) {
      for (bool ordinal : {true, false}) {
        ParamStore ps;
        ps.add("logits", random_matrix(1, 4, rng, 2.0));
        LossFn fn = [&](ParamStore& p) {
          p.zero_grad();
          const auto lg = ordinal ? ordinal_loss_grad(p.value("logits").row(0), y)
                                  : cross_entropy_loss_grad(p.value("logits").row(0), y);
          for (std::size_t j = 0; j < 4; ++j) p.grad("logits")(0, j) = lg.d_logits[j];
          return lg.loss;
        };
        CHECK(grad_check(fn, ps).max_rel_error < 1e-4);
      }
    }
  }
}

TEST_CASE("loss_grad agrees with the distribution form") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix logits = random_matrix(1, 4, rng, 2.0);
    const auto d = softmax_distribution(logits.row(0));
    d.validate();
    for (std::size_t y = 0; y < 4; ++y) {
      CHECK(ordinal_loss_grad(logits.row(0), y).loss == doctest::Approx(ordinal_loss(d, y)).epsilon(1e-12));
      CHECK(cross_entropy_loss_grad(logits.row(0), y).loss == doctest::Approx(cross_entropy_loss(d, y)).epsilon(1e-12));
    }
  }
}

TEST_CASE("distribution validation and argmax") {
  CHECK_THROWS_AS(dist({0.5, 0.6}).validate(), InputError);
  CHECK_THROWS_AS(dist({-0.1, 1.1}).validate(), InputError);
  CHECK_NOTHROW(dist({0.5, 0.5}).validate());
  CHECK(dist({0.3, 0.3, 0.2, 0.2}).argmax() == 0);
  CHECK(dist({0.1, 0.2, 0.4, 0.3}).argmax() == 2);
}

TEST_CASE("zero-weight head outputs the uniform distribution") {
  MlpHeadConfig cfg;
  cfg.input_width = 5;
  ParamStore ps;
  Rng rng(4);
  init_mlp_head(ps, cfg, rng);
  for (auto& [name, p] : ps) p.value.fill(0.0);
  const auto d = mlp_forward(random_matrix(1, 5, rng), ps, cfg, false);
  for (double v : d.p) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("eval mode ignores the seed; zero dropout makes train equal eval") {
  MlpHeadConfig cfg;
  cfg.input_width = 6;
  cfg.hidden = {8, 7};
  ParamStore ps;
  Rng rng(5);
  init_mlp_head(ps, cfg, rng);
  const Matrix x = random_matrix(1, 6, rng);
  Rng r1(1), r2(2);
  CHECK(mlp_forward(x, ps, cfg, false, &r1).p == mlp_forward(x, ps, cfg, false, &r2).p);
  CHECK_FALSE(mlp_forward(x, ps, cfg, true, &r1).p == mlp_forward(x, ps, cfg, true, &r2).p);
  cfg.dropout = 0.0;
  CHECK(mlp_forward(x, ps, cfg, true, &r1).p == mlp_forward(x, ps, cfg, false).p);
}

TEST_CASE("one hidden layer hand example") {
  MlpHeadConfig cfg;
  cfg.input_width = 2;
  cfg.hidden = {2};
  cfg.num_classes = 4;
  ParamStore ps;
  Rng rng(6);
  init_mlp_head(ps, cfg, rng);
  ps.value(head_params::weight(0)) = Matrix::from_rows({{0.1, -0.2}, {0.3, 0.4}});
  ps.value(head_params::bias(0)) = Matrix::from_rows({{0.05, -0.05}});
  ps.value(head_params::weight(1)) = Matrix::from_rows({{0.2, -0.1, 0.0, 0.3}, {-0.4, 0.1, 0.2, 0.0}});
  ps.value(head_params::bias(1)) = Matrix::from_rows({{0.0, 0.1, -0.1, 0.0}});
  const Matrix x = Matrix::from_rows({{1.0, 2.0}});
  // hidden: tanh([0.1+0.6+0.05, -0.2+0.8-0.05]) = tanh([0.75, 0.55])
  const double h0 = std::tanh(0.75), h1 = std::tanh(0.55);
  const double z[4] = {0.2 * h0 - 0.4 * h1, -0.1 * h0 + 0.1 * h1 + 0.1, 0.2 * h1 - 0.1, 0.3 * h0};
  double s = 0.0;
  for (double v : z) s += std::exp(v);
  const auto d = mlp_forward(x, ps, cfg, false);
  for (int i = 0; i < 4; ++i) CHECK(std::abs(d.p[i] - std::exp(z[i]) / s) < 1e-9);
}

TEST_CASE("forward distributions always sum to one") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    MlpHeadConfig cfg;
    cfg.input_width = 4;
    ParamStore ps;
    init_mlp_head(ps, cfg, rng);
    const auto d = mlp_forward(random_matrix(1, 4, rng, 5.0), ps, cfg, trial % 2 == 0, &rng);
    CHECK(std::abs(d.p[0] + d.p[1] + d.p[2] + d.p[3] - 1.0) <= 1e-9);
  }
}

TEST_CASE("head gradients match finite differences") {
  Rng rng(8);
  for (auto act : {Activation::kTanh, Activation::kRelu, Activation::kSigmoid}) {
    for (bool ordinal : {true, false}) {
      MlpHeadConfig cfg;
      cfg.input_width = 3;
      cfg.hidden = {5, 4};
      cfg.activation = act;
      cfg.dropout = 0.0;
      ParamStore ps;
      init_mlp_head(ps, cfg, rng);
      ps.add("x", random_matrix(1, 3, rng));
      const std::size_t y = rng() % 4;
      LossFn fn = [&](ParamStore& p) {
        p.zero_grad();
        MlpCache cache;
        mlp_forward(p.value("x"), p, cfg, false, nullptr, &cache);
        const auto lg = ordinal ? ordinal_loss_grad(cache.logits.row(0), y)
                                : cross_entropy_loss_grad(cache.logits.row(0), y);
        Matrix d(1, 4);
        for (std::size_t j = 0; j < 4; ++j) d(0, j) = lg.d_logits[j];
        p.grad("x") += mlp_backward(cache, p, cfg, d);
        return lg.loss;
      };
      CHECK(grad_check(fn, ps).max_rel_error < 1e-4);
    }
  }
}
