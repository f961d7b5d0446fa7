// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "mmsev/checkpoint.hpp"
#include "mmsev/fusion.hpp"
#include "mmsev/gates.hpp"
#include "mmsev/gradcheck.hpp"
#include "mmsev/head.hpp"
#include "mmsev/metrics.hpp"
#include "mmsev/pipeline.hpp"
#include "mmsev/sampling.hpp"
#include "mmsev/severity.hpp"
#include "mmsev/synth.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mmsev;
using namespace mmsev::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  fmt::print("{} {:2d} {}: {}\n", pass ? "PASS" : "FAIL", id, name, detail);
  std::fflush(stdout);
}

double weighted_sum(const Matrix& w, const Matrix& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += w.values()[i] * m.values()[i];
  return s;
}

// 1 -------------------------------------------------------------------------

void gradient_suite() {
  constexpr int kInstances = 20;
  const auto t0 = Clock::now();
  Rng rng(101);
  std::array<double, 5> worst{};
  std::array<int, 5> count{};

  for (int t = 0; t < kInstances; ++t) {
    const std::size_t batch = 1 + rng() % 3, n = 2 + rng() % 3, m = 2 + rng() % 4;
    const Activation act = std::array{Activation::kTanh, Activation::kSigmoid, Activation::kRelu}[t % 3];
    const double tau = 0.3 + 0.2 * static_cast<double>(t % 5);
    ParamStore ps;
    ps.add("logits", random_matrix(n, m, rng));
    ps.add("w", random_matrix(n, m, rng, 2.0));
    ps.add("x", random_matrix(batch, m, rng));
    const Matrix noise = sample_gumbel(n, m, rng);
    const Matrix target = random_matrix(batch, n, rng);
    LossFn fn = [&](ParamStore& p) {
      p.zero_grad();
      const auto s = relax_gates(p.value("logits"), noise, tau);
      const Matrix out = gated_forward(p.value("x"), p.value("w"), s, act);
      const auto g = gated_backward(p.value("x"), p.value("w"), s, tau, act, out, target);
      p.grad("logits") += g.d_logits;
      p.grad("w") += g.d_weights;
      p.grad("x") += g.d_x;
      return weighted_sum(target, out);
    };
    worst[0] = std::max(worst[0], grad_check(fn, ps).max_rel_error);
    ++count[0];
  }

  for (int t = 0; t < kInstances; ++t) {
    const std::size_t d = 2 + rng() % 3, d_k = 2 + rng() % 4;
    const CrossAttentionOptions opts{t % 2 == 0, t % 4 < 2};
    ParamStore ps;
    init_cross_attention(ps, d, d_k, rng);
    ps.value(fusion_params::kNormGain) = random_matrix(1, d_k, rng);
    ps.value(fusion_params::kNormBias) = random_matrix(1, d_k, rng);
    ps.add("image", random_matrix(1 + rng() % 4, d, rng));
    ps.add("text", random_matrix(1 + rng() % 5, d, rng));
    const Matrix w = random_matrix(ps.value("image").rows(), d_k, rng);
    LossFn fn = [&](ParamStore& p) {
      p.zero_grad();
      CrossAttentionCache cache;
      const auto out = cross_attend({p.value("image"), Modality::kImage}, {p.value("text"), Modality::kText}, p,
                                    opts, &cache);
      const auto g = cross_attend_backward(cache, p, opts, w);
      p.grad("image") += g.d_image;
      p.grad("text") += g.d_text;
      return weighted_sum(w, out.tokens);
    };
    worst[1] = std::max(worst[1], grad_check(fn, ps).max_rel_error);
    ++count[1];
  }

  for (int t = 0; t < kInstances; ++t) {
    MlpHeadConfig cfg;
    cfg.input_width = 2 + rng() % 4;
    cfg.hidden.clear();
    for (std::size_t l = 0, depth = rng() % 3; l < depth; ++l) cfg.hidden.push_back(2 + rng() % 5);
    cfg.activation = std::array{Activation::kTanh, Activation::kSigmoid, Activation::kRelu}[t % 3];
    cfg.dropout = 0.0;
    ParamStore ps;
    init_mlp_head(ps, cfg, rng);
    ps.add("x", random_matrix(1, cfg.input_width, rng));
    const Matrix target = random_matrix(1, 4, rng);
    LossFn fn = [&](ParamStore& p) {
      p.zero_grad();
      MlpCache cache;
      mlp_forward(p.value("x"), p, cfg, false, nullptr, &cache);
      p.grad("x") += mlp_backward(cache, p, cfg, target);
      return weighted_sum(target, cache.logits);
    };
    worst[2] = std::max(worst[2], grad_check(fn, ps).max_rel_error);
    ++count[2];
  }

  for (int t = 0; t < 2 * kInstances; ++t) {
    const bool ordinal = t < kInstances;
    const std::size_t y = rng() % 4;
    ParamStore ps;
    ps.add("logits", random_matrix(1, 4, rng, 2.0));
    LossFn fn = [&](ParamStore& p) {
      p.zero_grad();
      const auto lg = ordinal ? ordinal_loss_grad(p.value("logits").row(0), y)
                              : cross_entropy_loss_grad(p.value("logits").row(0), y);
      for (std::size_t j = 0; j < 4; ++j) p.grad("logits")(0, j) = lg.d_logits[j];
      return lg.loss;
    };
    const std::size_t slot = ordinal ? 3 : 4;
    worst[slot] = std::max(worst[slot], grad_check(fn, ps).max_rel_error);
    ++count[slot];
  }

  const double secs = seconds_since(t0);
  const double max_err = *std::max_element(worst.begin(), worst.end());
  const bool counts_ok = std::all_of(count.begin(), count.end(), [](int c) { return c >= kInstances; });
  report(1, "gradient suite", max_err < 1e-4 && counts_ok && secs < 30.0,
         fmt::format("max rel err gated {:.2e} xattn {:.2e} mlp {:.2e} ordinal {:.2e} ce {:.2e}, {} instances each, "
                     "{:.2f} s",
                     worst[0], worst[1], worst[2], worst[3], worst[4], kInstances, secs));
}

// 2 -------------------------------------------------------------------------

void normalization_suite() {
  constexpr int kInputs = 1000;
  Rng rng(202);
  std::array<double, 4> worst{};
  auto track = [](double& w, const Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) w = std::max(w, std::abs(row_sum(m.row(r)) - 1.0));
  };
  for (int t = 0; t < kInputs; ++t) {
    const std::size_t rows = 1 + rng() % 6, cols = 1 + rng() % 12;
    const double scale = std::pow(10.0, static_cast<double>(rng() % 5) - 1.0);
    track(worst[0], softmax_rows(random_matrix(rows, cols, rng, scale)));

    GateBank bank{random_matrix(rows, cols, rng, scale), 0.05 + 2.0 * static_cast<double>(rng() % 100) / 100.0,
                  rng()};
    track(worst[1], sample_gates(bank).probabilities);

    const std::size_t d = 2 + rng() % 4, d_k = 2 + rng() % 4;
    ParamStore ps;
    init_cross_attention(ps, d, d_k, rng);
    ps.value(fusion_params::kQuery) = random_matrix(d, d_k, rng, scale);
    track(worst[2], attention_weights({random_matrix(1 + rng() % 5, d, rng), Modality::kImage},
                                      {random_matrix(1 + rng() % 7, d, rng), Modality::kText}, ps));

    MlpHeadConfig cfg;
    cfg.input_width = 1 + rng() % 6;
    cfg.hidden = {1 + rng() % 6};
    cfg.dropout = 0.4;
    ParamStore head;
    init_mlp_head(head, cfg, rng);
    head.value(head_params::weight(1)) = random_matrix(cfg.hidden[0], 4, rng, scale);
    const auto dist = mlp_forward(random_matrix(1, cfg.input_width, rng, scale), head, cfg, true, &rng);
    worst[3] = std::max(worst[3], std::abs(row_sum(dist.p) - 1.0));
  }
  const double max_dev = *std::max_element(worst.begin(), worst.end());
  report(2, "normalization", max_dev <= 1e-9,
         fmt::format("max |sum-1| softmax {:.1e} gates {:.1e} attention {:.1e} class dist {:.1e} over {} inputs",
                     worst[0], worst[1], worst[2], worst[3], kInputs));
}

// 3 -------------------------------------------------------------------------

void ros_invariant() {
  const auto out = random_oversample(dataset_from_counts({58, 76, 76, 290}), 3);
  const auto counts = out.class_counts();
  const bool exact = counts == std::vector<std::size_t>{290, 290, 290, 290} && out.size() == 1160;

  const auto balanced = dataset_from_counts({40, 40, 40, 40});
  const auto same = random_oversample(balanced, 3);
  bool identity = same.size() == balanced.size();
  for (std::size_t i = 0; identity && i < same.size(); ++i)
    identity = same.samples()[i].label == balanced.samples()[i].label &&
               same.samples()[i].features == balanced.samples()[i].features;
  report(3, "random oversampling", exact && identity,
         fmt::format("counts {{{}}}, M = {}, balanced input unchanged: {}", fmt::join(counts, ","), out.size(),
                     identity ? "yes" : "no"));
}

// 4 -------------------------------------------------------------------------

ClassDistribution from_cells(const std::array<int, 4>& cells) {
  ClassDistribution d;
  for (int c : cells) d.p.push_back(0.05 * c);
  return d;
}

void ordinal_ordering() {
  std::size_t checked = 0, violations = 0, cross_partial = 0, cross_partial_bad = 0;
  for (int a = 0; a <= 20; ++a)
    for (int b = 0; a + b <= 20; ++b)
      for (int c = 0; a + b + c <= 20; ++c) {
        const std::array<int, 4> cells{a, b, c, 20 - a - b - c};
        for (int y = 0; y < 4; ++y) {
          const double base = ordinal_loss(from_cells(cells), y);
          for (int src = 0; src < 4; ++src)
            for (int dst = 0; dst < 4; ++dst) {
              if (dst == src || dst == y || std::abs(dst - y) <= std::abs(src - y)) continue;
              const bool same_side = src == y || (src - y) * (dst - y) > 0;
              for (int k = 1; k <= cells[src]; ++k) {
                auto moved = cells;
                moved[src] -= k;
                moved[dst] += k;
                const bool bad = ordinal_loss(from_cells(moved), y) < base - 1e-12;
                if (same_side || k == cells[src]) {
                  ++checked;
                  violations += bad;
                } else {
                  ++cross_partial;
                  cross_partial_bad += bad;
                }
              }
            }
        }
      }

  // Confident mispredictions of a true class 1 (index 0).
  ClassDistribution near{{0.05, 0.9, 0.025, 0.025}}, far{{0.05, 0.025, 0.025, 0.9}};
  const double ord_near = ordinal_loss(near, 0), ord_far = ordinal_loss(far, 0);
  const double ce_near = cross_entropy_loss(near, 0), ce_far = cross_entropy_loss(far, 0);
  const bool experiment = ord_far > ord_near && ce_far == ce_near;

  report(4, "ordinal ordering", violations == 0 && experiment,
         fmt::format("{} violations in {} mass moves away from the true class; ordinal(4|1) {:.4f} > ordinal(2|1) "
                     "{:.4f}, ce {:.4f} vs {:.4f} (info: {} of {} partial moves across the true class lower the loss)",
                     violations, checked, ord_far, ord_near, ce_far, ce_near, cross_partial_bad, cross_partial));
}

// 5 -------------------------------------------------------------------------

void metric_oracle() {
  Rng rng(505);
  double auc_err = 0.0, aupr_err = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    const std::size_t n = 8 + rng() % 43;
    const bool coarse = inst % 2 == 0;
    std::vector<ClassDistribution> preds;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < n; ++i) {
      auto p = random_simplex(4, rng);
      if (coarse) {
        // Quantized probabilities to exercise ties.
        std::array<int, 4> cells{};
        int left = 10;
        for (int c = 0; c < 3; ++c) left -= cells[c] = static_cast<int>(rng() % (left + 1));
        cells[3] = left;
        for (int c = 0; c < 4; ++c) p[c] = 0.1 * cells[c];
      }
      preds.push_back({p});
      labels.push_back(i < 4 ? i : rng() % 4);
    }
    auc_err = std::max(auc_err, std::abs(macro_ovr_auc(preds, labels) - pairwise_macro_auc(preds, labels)));
    for (std::size_t c = 0; c < 4; ++c) {
      std::vector<double> s;
      std::vector<bool> pos;
      for (std::size_t i = 0; i < n; ++i) {
        s.push_back(preds[i].p[c]);
        pos.push_back(labels[i] == c);
      }
      aupr_err = std::max(aupr_err, std::abs(average_precision(s, pos) - step_aupr(s, pos)));
      auc_err = std::max(auc_err, std::abs(roc_auc(s, pos) - pairwise_auc(s, pos)));
    }
  }
  report(5, "metric oracle", auc_err <= 1e-9 && aupr_err <= 1e-9,
         fmt::format("max |auc - pairwise| {:.1e}, max |aupr - step| {:.1e} over 50 instances", auc_err, aupr_err));
}

// 6 -------------------------------------------------------------------------

void labeling() {
  const std::vector<std::pair<double, Severity>> probes = {
      {0.0, Severity::kNormal},       {4.999, Severity::kNormal},   {5.0, Severity::kMild},
      {14.999, Severity::kMild},      {15.0, Severity::kModerate},  {29.999, Severity::kModerate},
      {30.0, Severity::kSevere},      {1000.0, Severity::kSevere}};
  std::size_t ok = 0;
  for (const auto& [ahi, want] : probes) ok += label_from_ahi(ahi) == want;
  report(6, "labeling", ok == probes.size(), fmt::format("{}/{} boundary probes", ok, probes.size()));
}

// 7, 9, 10 ------------------------------------------------------------------

SynthData synth(double signal, double noise = 0.01) {
  SynthConfig c;
  c.n_subjects = 800;
  c.signal_strength = signal;
  c.noise_scale = noise;
  return generate(c);
}

RunConfig default_run() {
  RunConfig cfg;
  cfg.epochs = 50;
  return cfg;
}

double majority_rate(const std::vector<std::size_t>& labels) {
  std::array<std::size_t, 4> counts{};
  for (auto l : labels) ++counts[l];
  return static_cast<double>(*std::max_element(counts.begin(), counts.end())) / static_cast<double>(labels.size());
}

bool same_metrics(const MetricsReport& a, const MetricsReport& b) {
  return a.accuracy == b.accuracy && a.precision == b.precision && a.recall == b.recall && a.f1 == b.f1 &&
         a.auc == b.auc && a.aupr == b.aupr && a.class_accuracy == b.class_accuracy;
}

bool same_predictions(const std::vector<ClassDistribution>& a, const std::vector<ClassDistribution>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].p != b[i].p) return false;
  return true;
}

void end_to_end_gates_and_determinism() {
  const RunConfig cfg = default_run();
  const auto signal = bundle_from_synth(synth(1.0));
  const auto sel = KeypointSelection::default_selection();
  const auto planted = planted_feature_indices(default_planted_landmarks(), sel);

  RunConfig gate_cfg = cfg;
  gate_cfg.harden_k = planted.size();
  const std::set<std::size_t> planted_set(planted.begin(), planted.end());

  std::vector<TrainResult> runs;
  std::vector<double> recovery;
  double first_secs = 0.0;
  for (std::uint64_t seed : cfg.seeds) {
    const auto t0 = Clock::now();
    runs.push_back(train(gate_cfg, seed, signal));
    if (runs.size() == 1) first_secs = seconds_since(t0);
    std::size_t hit = 0;
    for (auto f : runs.back().selected_features) hit += planted_set.count(f);
    recovery.push_back(static_cast<double>(hit) / static_cast<double>(planted.size()));
  }

  const auto& first = runs.front();
  const auto noise_only = train(cfg, cfg.seeds.front(), bundle_from_synth(synth(0.0)));
  const double majority = majority_rate(noise_only.test_labels);
  const double gap = std::abs(noise_only.test_metrics.accuracy - majority);
  const bool e2e = first.test_metrics.accuracy >= 0.90 && first.test_metrics.auc >= 0.95 && first_secs < 300.0 &&
                   gap <= 0.03;
  double mean_acc = 0.0;
  for (const auto& r : runs) mean_acc += r.test_metrics.accuracy / static_cast<double>(runs.size());
  report(7, "end-to-end synthetic", e2e,
         fmt::format("signal 1: accuracy {:.4f} auc {:.4f} in {:.1f} s ({} epochs, mean accuracy over {} seeds "
                     "{:.4f}); signal 0: accuracy {:.4f} vs majority {:.4f}",
                     first.test_metrics.accuracy, first.test_metrics.auc, first_secs, cfg.epochs, runs.size(),
                     mean_acc, noise_only.test_metrics.accuracy, majority));

  double mean_recovery = 0.0;
  for (double r : recovery) mean_recovery += r / static_cast<double>(recovery.size());
  report(9, "gate recovery", mean_recovery >= 0.80,
         fmt::format("harden_gates(k = {}) recovers {:.3f} of planted features on average (per seed {:.3f})",
                     planted.size(), mean_recovery, fmt::join(recovery, " ")));

  const auto again = train(gate_cfg, cfg.seeds.front(), signal);
  const bool rerun = same_metrics(again.test_metrics, first.test_metrics) &&
                     same_metrics(again.validation_metrics, first.validation_metrics) &&
                     same_predictions(again.test_predictions, first.test_predictions);

  TempDir dir;
  save_checkpoint(dir / "model.ckpt", first.checkpoint);
  const auto loaded = load_checkpoint(dir / "model.ckpt");
  const auto before = evaluate_checkpoint(first.checkpoint, signal);
  const auto after = evaluate_checkpoint(loaded, signal);
  const auto before_hard = evaluate_checkpoint(first.checkpoint, signal, true);
  const auto after_hard = evaluate_checkpoint(loaded, signal, true);
  const bool round_trip = same_metrics(before.metrics, after.metrics) &&
                          same_predictions(before.predictions, after.predictions) &&
                          same_predictions(before_hard.predictions, after_hard.predictions) &&
                          same_predictions(before.predictions, first.test_predictions);
  report(10, "determinism and persistence", rerun && round_trip,
         fmt::format("rerun bit-identical: {}, checkpoint round-trip identical: {}", rerun ? "yes" : "no",
                     round_trip ? "yes" : "no"));
}

// 8 -------------------------------------------------------------------------

// Mesh noise for the ablation. At the default 0.01 every image-bearing
// variant sits at the 0.97-0.99 ceiling of an 80-subject test split.
constexpr double kAblationNoise = 0.03;

void ablation() {
  const auto t0 = Clock::now();
  const auto rep = ablate(default_run(), bundle_from_synth(synth(1.0, kAblationNoise)));
  bool all = true;
  std::string detail;
  for (const auto& c : rep.comparisons) {
    all = all && c.pass;
    detail += fmt::format("[{}: gap {:+.4f}, lost {}/won {}, p {:.3f}] ", c.name, c.mean_gap, c.worse, c.better,
                          c.sign_test_p);
  }
  for (const auto& r : rep.rows) fmt::print("     {:12} {:10} mean accuracy {:.4f}\n", r.group, r.variant, r.mean_accuracy);
  report(8, "ablation directionality", all,
         fmt::format("{}noise {} over {} seeds, {:.0f} s", detail, kAblationNoise, default_run().seeds.size(),
                     seconds_since(t0)));
}

}  // namespace

int main() {
  gradient_suite();
  normalization_suite();
  ros_invariant();
  ordinal_ordering();
  metric_oracle();
  labeling();
  end_to_end_gates_and_determinism();
  ablation();
  fmt::print("{} criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
