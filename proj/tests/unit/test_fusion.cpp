#include <doctest.h>

#include <cmath>

#include "mmsev/errors.hpp"
#include "mmsev/fusion.hpp"
#include "mmsev/gradcheck.hpp"
#include "support.hpp"

using namespace mmsev;
using mmsev::testing::random_matrix;

namespace {

TokenSequence seq(Matrix m, Modality mod) { return {std::move(m), mod}; }

ParamStore attention_store(std::size_t d, std::size_t d_k, std::uint64_t seed) {
  ParamStore ps;
  Rng rng(seed);
  init_cross_attention(ps, d, d_k, rng);
  return ps;
}

const CrossAttentionOptions kBare{false, false};

double weighted_sum(const Matrix& w, const Matrix& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += w.values()[i] * m.values()[i];
  return s;
}

}  // namespace

TEST_CASE("single text token takes all attention") {
  Rng rng(1);
  auto ps = attention_store(3, 3, 1);
  const auto image = seq(random_matrix(4, 3, rng), Modality::kImage);
  const auto text = seq(random_matrix(1, 3, rng), Modality::kText);
  const Matrix w = attention_weights(image, text, ps);
  for (std::size_t i = 0; i < 4; ++i) CHECK(w(i, 0) == 1.0);

  CrossAttentionOptions res_only{true, false};
  const auto out = cross_attend(image, text, ps, res_only);
  const Matrix v = matmul(text.tokens, ps.value(fusion_params::kValue));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(out.tokens(i, j) == doctest::Approx(v(0, j) + image.tokens(i, j)));
  CHECK(out.modality == Modality::kFused);
  CHECK(out.length() == image.length());
}

TEST_CASE("zero query projection gives uniform attention") {
  Rng rng(2);
  auto ps = attention_store(4, 4, 2);
  ps.value(fusion_params::kQuery).fill(0.0);
  const Matrix w = attention_weights(seq(random_matrix(3, 4, rng), Modality::kImage),
                                     seq(random_matrix(5, 4, rng), Modality::kText), ps);
  for (double v : w.values()) CHECK(v == doctest::Approx(0.2).epsilon(1e-14));
}

TEST_CASE("hand-computed attention at d_k = 2") {
  ParamStore ps = attention_store(2, 2, 3);
  ps.value(fusion_params::kQuery) = Matrix::from_rows({{1, 0}, {0, 1}});
  ps.value(fusion_params::kKey) = Matrix::from_rows({{2, 0}, {0, 1}});
  ps.value(fusion_params::kValue) = Matrix::from_rows({{1, 1}, {0, 2}});
  const Matrix img = Matrix::from_rows({{1, 0}, {0, 1}});
  const Matrix txt = Matrix::from_rows({{1, 1}, {0, 1}});
  // Q = img, K = [[2,1],[0,1]], V = [[1,3],[0,2]]
  // scores/√2: row0 = [2, 0]/√2, row1 = [1, 1]/√2
  const double a = std::exp(2 / std::sqrt(2.0)), b = 1.0;
  const double p0 = a / (a + b);
  const double expected[2][2] = {{p0 * 1 + (1 - p0) * 0, p0 * 3 + (1 - p0) * 2}, {0.5, 2.5}};
  const auto out = cross_attend(seq(img, Modality::kImage), seq(txt, Modality::kText), ps, kBare);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(out.tokens(i, j) - expected[i][j]) < 1e-9);
}

TEST_CASE("attention rows sum to one; identical keys give uniform rows") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto ps = attention_store(5, 3, 100 + trial);
    const Matrix w = attention_weights(seq(random_matrix(4, 5, rng, 3.0), Modality::kImage),
                                       seq(random_matrix(6, 5, rng, 3.0), Modality::kText), ps);
    for (std::size_t i = 0; i < w.rows(); ++i) CHECK(std::abs(mmsev::testing::row_sum(w.row(i)) - 1.0) <= 1e-9);
  }
  auto ps = attention_store(3, 3, 5);
  Matrix same(4, 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) same(i, j) = 0.3 * double(j) - 0.1;
  const Matrix w = attention_weights(seq(random_matrix(2, 3, rng), Modality::kImage), seq(same, Modality::kText), ps);
  for (double v : w.values()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("scaling query and key projections preserves the row argmax") {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    auto ps = attention_store(4, 4, 200 + trial);
    const auto image = seq(random_matrix(3, 4, rng), Modality::kImage);
    const auto text = seq(random_matrix(5, 4, rng), Modality::kText);
    const Matrix w1 = attention_weights(image, text, ps);
    const double c = 0.1 + 3.0 * double(trial) / 30.0;
    ps.value(fusion_params::kQuery) *= std::sqrt(c);
    ps.value(fusion_params::kKey) *= std::sqrt(c);
    const Matrix w2 = attention_weights(image, text, ps);
    for (std::size_t i = 0; i < 3; ++i) {
      auto r1 = w1.row(i), r2 = w2.row(i);
      CHECK(std::max_element(r1.begin(), r1.end()) - r1.begin() == std::max_element(r2.begin(), r2.end()) - r2.begin());
    }
  }
}

TEST_CASE("permuting text tokens permutes attention columns and leaves the output unchanged") {
  Rng rng(7);
  auto ps = attention_store(4, 4, 7);
  const auto image = seq(random_matrix(3, 4, rng), Modality::kImage);
  const Matrix txt = random_matrix(5, 4, rng);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  Matrix permuted(5, 4);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 4; ++j) permuted(i, j) = txt(perm[i], j);
  const Matrix w = attention_weights(image, seq(txt, Modality::kText), ps);
  const Matrix wp = attention_weights(image, seq(permuted, Modality::kText), ps);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t i = 0; i < 5; ++i) CHECK(wp(r, i) == doctest::Approx(w(r, perm[i])).epsilon(1e-12));
  const auto a = cross_attend(image, seq(txt, Modality::kText), ps);
  const auto b = cross_attend(image, seq(permuted, Modality::kText), ps);
  CHECK(max_abs_diff(a.tokens, b.tokens) < 1e-12);
}

TEST_CASE("no residual and zero value projection give the zero sequence") {
  Rng rng(8);
  auto ps = attention_store(4, 4, 8);
  ps.value(fusion_params::kValue).fill(0.0);
  const auto out = cross_attend(seq(random_matrix(3, 4, rng), Modality::kImage),
                                seq(random_matrix(2, 4, rng), Modality::kText), ps, kBare);
  CHECK(out.tokens == Matrix(3, 4, 0.0));
}

TEST_CASE("cross-attention rejects mismatched widths") {
  Rng rng(9);
  auto ps = attention_store(4, 4, 9);
  CHECK_THROWS_AS(cross_attend(seq(random_matrix(2, 4, rng), Modality::kImage),
                               seq(random_matrix(2, 3, rng), Modality::kText), ps),
                  ShapeError);
  CHECK_THROWS_AS(cross_attend(seq(random_matrix(2, 3, rng), Modality::kImage),
                               seq(random_matrix(2, 3, rng), Modality::kText), ps),
                  ShapeError);
}

TEST_CASE("layer norm output rows have zero mean and unit variance at default gain") {
  Rng rng(10);
  auto ps = attention_store(6, 6, 10);
  const auto out = cross_attend(seq(random_matrix(3, 6, rng), Modality::kImage),
                                seq(random_matrix(4, 6, rng), Modality::kText), ps);
  for (std::size_t i = 0; i < 3; ++i) {
    double m = 0, v = 0;
    for (double x : out.tokens.row(i)) m += x;
    m /= 6;
    for (double x : out.tokens.row(i)) v += (x - m) * (x - m);
    CHECK(std::abs(m) < 1e-12);
    CHECK(v / 6 == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("cross-attention gradients match finite differences") {
  Rng rng(11);
  for (std::size_t d_k : {3u, 5u}) {
    for (auto opts : {CrossAttentionOptions{}, kBare, CrossAttentionOptions{true, false}}) {
      for (int trial = 0; trial < 4; ++trial) {
        auto ps = attention_store(3, d_k, 300 + trial);
        ps.add("image", random_matrix(3, 3, rng));
        ps.add("text", random_matrix(4, 3, rng));
        ps.value(fusion_params::kNormGain) = random_matrix(1, d_k, rng);
        ps.value(fusion_params::kNormBias) = random_matrix(1, d_k, rng);
        const Matrix w = random_matrix(3, d_k, rng);
        LossFn fn = [&](ParamStore& p) {
          p.zero_grad();
          CrossAttentionCache cache;
          const auto out = cross_attend(seq(p.value("image"), Modality::kImage),
                                        seq(p.value("text"), Modality::kText), p, opts, &cache);
          const auto g = cross_attend_backward(cache, p, opts, w);
          p.grad("image") += g.d_image;
          p.grad("text") += g.d_text;
          return weighted_sum(w, out.tokens);
        };
        CHECK(grad_check(fn, ps).max_rel_error < 1e-4);
      }
    }
  }
}

TEST_CASE("autoencoder bottleneck bounds") {
  ParamStore ps;
  Rng rng(12);
  CHECK_NOTHROW(init_autoencoder(ps, 4, 7, rng));
  ParamStore ps2;
  CHECK_THROWS_AS(init_autoencoder(ps2, 4, 8, rng), ParameterError);
  ParamStore ps3;
  CHECK_THROWS_AS(init_autoencoder(ps3, 4, 0, rng), ParameterError);
}

TEST_CASE("autoencoder on zero inputs has a zero bottleneck") {
  ParamStore ps;
  Rng rng(13);
  init_autoencoder(ps, 3, 4, rng);
  AutoencoderCache cache;
  const auto out = autoencoder_fuse(seq(Matrix(2, 3, 0.0), Modality::kImage), seq(Matrix(4, 3, 0.0), Modality::kText),
                                    ps, &cache);
  CHECK(cache.hidden == Matrix(1, 4, 0.0));
  CHECK(out.length() == 1);
  CHECK(out.d_model() == 6);
}

TEST_CASE("autoencoder gradients match finite differences") {
  Rng rng(14);
  for (double recon : {0.0, 0.1, 1.0}) {
    for (int trial = 0; trial < 4; ++trial) {
      ParamStore ps;
      init_autoencoder(ps, 3, 4, rng);
      ps.add("image", random_matrix(2, 3, rng));
      ps.add("text", random_matrix(3, 3, rng));
      const Matrix w = random_matrix(1, 6, rng);
      LossFn fn = [&](ParamStore& p) {
        p.zero_grad();
        AutoencoderCache cache;
        const auto out = autoencoder_fuse(seq(p.value("image"), Modality::kImage),
                                          seq(p.value("text"), Modality::kText), p, &cache);
        const auto g = autoencoder_backward(cache, p, w, recon);
        auto di = p.grad("image").row(0);
        auto dt = p.grad("text").row(0);
        for (std::size_t j = 0; j < 3; ++j) {
          di[j] += g.d_image_cls(0, j);
          dt[j] += g.d_text_cls(0, j);
        }
        return weighted_sum(w, out.tokens) + recon * reconstruction_loss(cache);
      };
      CHECK(grad_check(fn, ps).max_rel_error < 1e-4);
    }
  }
}

TEST_CASE("reconstruction loss falls under training") {
  // Seed-averaged loss per step, compared over ten-step windows.
  std::vector<double> mean_loss(100, 0.0);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    ParamStore ps;
    init_autoencoder(ps, 4, 6, rng);
    const auto image = seq(random_matrix(3, 4, rng), Modality::kImage);
    const auto text = seq(random_matrix(5, 4, rng), Modality::kText);
    AdamConfig adam;
    adam.learning_rate = 1e-2;
    for (int step = 0; step < 100; ++step) {
      ps.zero_grad();
      AutoencoderCache cache;
      autoencoder_fuse(image, text, ps, &cache);
      mean_loss[step] += reconstruction_loss(cache) / 5.0;
      autoencoder_backward(cache, ps, Matrix(1, 8, 0.0), 1.0);
      ps.adam_step(adam);
    }
  }
  double prev = INFINITY;
  for (int w = 0; w < 10; ++w) {
    double s = 0.0;
    for (int i = 0; i < 10; ++i) s += mean_loss[w * 10 + i];
    CHECK(s < prev);
    prev = s;
  }
  CHECK(mean_loss[99] < 0.2 * mean_loss[0]);
}
