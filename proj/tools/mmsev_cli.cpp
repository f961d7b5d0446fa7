#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mmsev/checkpoint.hpp"
#include "mmsev/config.hpp"
#include "mmsev/errors.hpp"
#include "mmsev/pipeline.hpp"
#include "mmsev/synth.hpp"

namespace fs = std::filesystem;
using namespace mmsev;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "runs";
  std::string loss, fusion, modality, oversample;
  std::string patients, meshes, thetas, embeddings;
  std::optional<std::size_t> epochs;
  std::vector<std::string> sets;
  bool verbose = false;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "JSON run configuration");
  app->add_option("--seed", f.seed, "Run this single seed instead of the configured list");
  app->add_option("--out", f.out, "Output directory");
  app->add_option("--loss", f.loss, "ordinal|ce");
  app->add_option("--fusion", f.fusion, "xattn|ae");
  app->add_option("--modality", f.modality, "text|visual|multimodal");
  app->add_option("--oversample", f.oversample, "none|ros|smote");
  app->add_option("--patients", f.patients, "Patient CSV");
  app->add_option("--meshes", f.meshes, "Face mesh CSV");
  app->add_option("--thetas", f.thetas, "Affine pose sidecar CSV");
  app->add_option("--embeddings", f.embeddings, "Imported text embeddings CSV");
  app->add_option("--epochs", f.epochs, "Epoch budget");
  app->add_option("--set", f.sets, "Config override key=value (value parsed as JSON, else string)");
  app->add_flag("-v,--verbose", f.verbose, "Per-epoch progress on stderr");
}

RunConfig resolve(const CommonFlags& f) {
  nlohmann::json j = f.config.empty() ? to_json(RunConfig{}) : to_json(load_run_config(f.config));
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("--set expects key=value, got '{}'", kv));
    const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    if (!j.contains(key)) throw ConfigError(fmt::format("unknown config key '{}'", key));
    auto parsed = nlohmann::json::parse(value, nullptr, false);
    j[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
  }
  RunConfig c = run_config_from_json(j);
  if (!f.loss.empty()) c.loss = parse_loss(f.loss);
  if (!f.fusion.empty()) c.fusion = parse_fusion(f.fusion);
  if (!f.modality.empty()) c.modality = parse_modality(f.modality);
  if (!f.oversample.empty()) c.oversample = parse_oversample(f.oversample);
  if (!f.patients.empty()) c.patients = f.patients;
  if (!f.meshes.empty()) c.meshes = f.meshes;
  if (!f.thetas.empty()) c.thetas = f.thetas;
  if (!f.embeddings.empty()) c.text_embeddings = f.embeddings;
  if (f.epochs) c.epochs = *f.epochs;
  if (f.seed) c.seeds = {*f.seed};
  c.validate();
  return c;
}

void print_metrics(const std::string& name, const MetricsReport& m) {
  std::cout << fmt::format("{:<10} acc {:.4f}  auc {:.4f}  f1 {:.4f}  var {:.4f}\n", name, m.accuracy, m.auc, m.f1,
                           m.variance);
}

int cmd_synth(const SynthConfig& sc, const std::string& out) {
  sc.validate();
  const auto data = generate(sc);
  write_synth(out, data);
  std::cout << fmt::format("wrote {} subjects to {}\n", data.records.size(), out);
  return 0;
}

int cmd_train(const CommonFlags& f, std::size_t attention_dumps) {
  const RunConfig cfg = resolve(f);
  const DataBundle data = load_data(cfg);
  const fs::path out = f.out;
  save_run_config(out / "config.json", cfg);
  std::vector<MetricsReport> runs;
  for (auto seed : cfg.seeds) {
    TrainOptions opts;
    opts.out_dir = out / fmt::format("seed_{}", seed);
    opts.verbose = f.verbose;
    opts.attention_dumps = attention_dumps;
    const auto r = train(cfg, seed, data, opts);
    runs.push_back(r.test_metrics);
    print_metrics(fmt::format("seed {}", seed), r.test_metrics);
    std::cout << fmt::format("           best val acc {:.4f} at epoch {} / {}, checkpoint {}\n",
                             r.state.best_validation_accuracy, r.checkpoint.epoch, r.state.epoch,
                             r.state.checkpoint_path.string());
  }
  write_run_metrics(out / "metrics.csv", cfg.seeds, runs);
  print_metrics("all", aggregate(runs));
  return 0;
}

DataBundle data_for_checkpoint(const Checkpoint& ckpt, const CommonFlags& f) {
  RunConfig c = ckpt.config;
  if (!f.patients.empty()) c.patients = f.patients;
  if (!f.meshes.empty()) c.meshes = f.meshes;
  if (!f.thetas.empty()) c.thetas = f.thetas;
  if (!f.embeddings.empty()) c.text_embeddings = f.embeddings;
  return load_data(c);
}

int cmd_eval(const std::string& checkpoint, const CommonFlags& f, bool harden) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const auto r = evaluate_checkpoint(ckpt, data_for_checkpoint(ckpt, f), harden);
  const fs::path out = f.out;
  std::vector<std::string> names = {fmt::format("seed_{}", ckpt.seed)};
  write_metrics_csv(out / "eval_metrics.csv", names, std::vector<MetricsReport>{r.metrics});
  print_metrics(fmt::format("seed {}", ckpt.seed), r.metrics);
  return 0;
}

int cmd_predict(const std::string& checkpoint, const CommonFlags& f, bool harden) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const auto preds = predict(ckpt, data_for_checkpoint(ckpt, f), harden);
  fs::path out = f.out;
  if (out.extension() != ".csv") out /= "predictions.csv";
  write_predictions(out, preds);
  std::cout << fmt::format("wrote {} predictions to {}\n", preds.size(), out.string());
  return 0;
}

int cmd_ablate(const CommonFlags& f) {
  const RunConfig cfg = resolve(f);
  const auto report = ablate(cfg, load_data(cfg), f.verbose);
  write_ablation(f.out, report);
  for (const auto& r : report.rows)
    std::cout << fmt::format("{:<13} {:<11} acc {:.4f}  auc {:.4f}{}\n", r.group, r.variant, r.mean_accuracy,
                             r.mean_auc, r.is_full ? "  *" : "");
  for (const auto& c : report.comparisons)
    std::cout << fmt::format("{:<32} gap {:+.4f}  wins {} losses {}  p {:.4f}  {}\n", c.name, c.mean_gap, c.better,
                             c.worse, c.sign_test_p, c.pass ? "holds" : "violated");
  return 0;
}

int cmd_gradcheck(const CommonFlags& f, const GradcheckRequest& req) {
  const RunConfig cfg = resolve(f);
  const auto variants = run_gradcheck(cfg, cfg.seeds.front(), req);
  bool ok = true;
  for (const auto& v : variants) {
    std::cout << fmt::format("{:<28} max rel error {:.3e}\n", v.name, v.report.max_rel_error);
    for (const auto& p : v.report.per_param) {
      const bool bad = p.max_rel_error > 1e-4;
      ok = ok && !bad;
      std::cout << fmt::format("  {:<18} {:.3e}{}\n", p.name, p.max_rel_error, bad ? "  FAIL" : "");
    }
  }
  std::cout << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal severity classification from face meshes and patient text"};
  app.require_subcommand(1);

  SynthConfig sc;
  std::string synth_out = "data";
  std::string proportions;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--n", sc.n_subjects, "Number of subjects");
  synth->add_option("--signal", sc.signal_strength, "Planted signal strength in [0, 1]");
  synth->add_option("--noise", sc.noise_scale, "Per-coordinate landmark noise");
  synth->add_option("--pose-jitter", sc.pose_jitter, "Random pose half-width");
  synth->add_option("--seed", sc.seed, "Generator seed");
  synth->add_option("--proportions", sc.class_proportions, "Class weights Normal Mild Moderate Severe")->expected(4);

  CommonFlags train_flags;
  std::size_t attention_dumps = 0;
  auto* train_cmd = app.add_subcommand("train", "Train over the configured seeds");
  add_common(train_cmd, train_flags);
  train_cmd->add_option("--dump-attention", attention_dumps, "Write attention maps for this many test subjects");

  CommonFlags eval_flags;
  std::string eval_ckpt;
  bool eval_harden = false;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on its test split");
  add_common(eval_cmd, eval_flags);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_flag("--harden", eval_harden, "Keep only the top-ranked gate features");

  CommonFlags ablate_flags;
  auto* ablate_cmd = app.add_subcommand("ablate", "One-axis ablation grid across seeds");
  add_common(ablate_cmd, ablate_flags);

  CommonFlags predict_flags;
  std::string predict_ckpt;
  bool predict_harden = false;
  auto* predict_cmd = app.add_subcommand("predict", "Batch inference from a checkpoint");
  add_common(predict_cmd, predict_flags);
  predict_cmd->add_option("--checkpoint", predict_ckpt, "Checkpoint file")->required();
  predict_cmd->add_flag("--harden", predict_harden, "Keep only the top-ranked gate features");

  CommonFlags gc_flags;
  GradcheckRequest gc_req;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the composed loss");
  add_common(gc_cmd, gc_flags);
  gc_cmd->add_flag("--force-dropout", gc_req.force_dropout, "Leave dropout on (expected to fail)");
  gc_cmd->add_option("--corrupt", gc_req.corrupt_param, "Perturb this parameter's analytic gradient");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(sc, synth_out);
    if (train_cmd->parsed()) return cmd_train(train_flags, attention_dumps);
    if (eval_cmd->parsed()) return cmd_eval(eval_ckpt, eval_flags, eval_harden);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_flags);
    if (predict_cmd->parsed()) return cmd_predict(predict_ckpt, predict_flags, predict_harden);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_flags, gc_req);
  } catch (const DeterminismError& e) {
    std::cerr << "determinism error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
