#include "mmsev/pipeline.hpp"

#include <fmt/format.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <deque>
#include <iostream>
#include <numeric>
#include <set>

#include "mmsev/csv.hpp"
#include "mmsev/errors.hpp"
#include "mmsev/sampling.hpp"

namespace mmsev {

namespace {

enum SeedStream : std::uint64_t {
  kInitStream = 1,
  kOversampleStream = 2,
  kShuffleStream = 3,
  kNoiseStream = 4,
  kDropoutStream = 5,
  kSplitStream = 101,
};

std::vector<double> tabular_features(const PatientRecord& r) { return {r.age, r.neck_cm, r.bmi, r.whr}; }

std::size_t require_label(const PatientRecord& r) {
  auto label = r.label();
  if (!label) throw LabelError(fmt::format("subject {} has neither a severity nor an AHI value", r.id));
  return class_index(*label);
}

KeypointSelection selection_for(const RunConfig& cfg) {
  return cfg.keypoints.empty() ? KeypointSelection::default_selection() : KeypointSelection(cfg.keypoints);
}

double temperature_at(const RunConfig& cfg, std::size_t epoch) {
  if (!cfg.gate_temperature_final || cfg.epochs < 2) return cfg.gate_temperature;
  const double t = static_cast<double>(epoch) / static_cast<double>(cfg.epochs - 1);
  return cfg.gate_temperature + t * (*cfg.gate_temperature_final - cfg.gate_temperature);
}

double accuracy_of(const std::vector<ClassDistribution>& preds, const std::vector<const Example*>& exs) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i].argmax() == exs[i]->label;
  return preds.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(preds.size());
}

double mean_loss_of(const std::vector<ClassDistribution>& preds, const std::vector<const Example*>& exs,
                    LossMode mode) {
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    sum += mode == LossMode::kOrdinal ? ordinal_loss(preds[i], exs[i]->label) : cross_entropy_loss(preds[i], exs[i]->label);
  return preds.empty() ? 0.0 : sum / static_cast<double>(preds.size());
}

std::vector<ClassDistribution> predict_ptrs(const Model& model, const std::vector<const Example*>& exs,
                                            const GateSample& gates) {
  std::vector<ClassDistribution> out(exs.size());
  const auto n = static_cast<std::ptrdiff_t>(exs.size());
#pragma omp parallel for schedule(static) if (n > 64)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = model.forward(*exs[static_cast<std::size_t>(i)], gates, false);
  return out;
}

std::vector<std::size_t> labels_of(const std::vector<const Example*>& exs) {
  std::vector<std::size_t> y;
  y.reserve(exs.size());
  for (const auto* e : exs) y.push_back(e->label);
  return y;
}

void check_compatible(const Checkpoint& ckpt, const DataBundle& data) {
  const auto spec = ckpt.spec();
  if (spec.uses_text() && ckpt.imported_text) {
    if (!data.embeddings)
      throw CompatibilityError("checkpoint was trained on imported text embeddings; none supplied");
    if (data.embeddings->d_model != spec.d_model)
      throw CompatibilityError(fmt::format("imported embeddings have width {}, checkpoint d_model is {}",
                                           data.embeddings->d_model, spec.d_model));
  }
}

Preprocessor preprocessor_from(const Checkpoint& ckpt) {
  const auto spec = ckpt.spec();
  Preprocessor pre;
  pre.selection = KeypointSelection(ckpt.keypoints);
  pre.scaler = ckpt.scaler;
  pre.vocab = ckpt.vocab;
  pre.uses_image = spec.uses_image();
  pre.uses_text = spec.uses_text();
  pre.imported_text = ckpt.imported_text;
  return pre;
}

void write_history(const std::filesystem::path& path, const std::vector<EpochLog>& history) {
  auto out = csv::open_output(path);
  out << "epoch,train_loss,val_acc,val_loss,best_val_acc,learning_rate,temperature\n";
  for (const auto& h : history)
    out << h.epoch << ',' << csv::format_exact(h.train_loss) << ',' << csv::format_exact(h.validation_accuracy) << ','
        << csv::format_exact(h.validation_loss) << ','
        << csv::format_exact(h.best_validation_accuracy) << ',' << csv::format_exact(h.learning_rate) << ','
        << csv::format_exact(h.temperature) << '\n';
}

void write_selected_features(const std::filesystem::path& path, const Checkpoint& ckpt,
                             const std::vector<std::size_t>& selected) {
  const auto scores = gate_scores(ckpt.params.value(gate_params::kLogits));
  auto out = csv::open_output(path);
  out << "rank,feature,landmark,axis,score\n";
  static constexpr char kAxis[] = {'x', 'y', 'z'};
  for (std::size_t r = 0; r < selected.size(); ++r) {
    const std::size_t f = selected[r];
    out << r + 1 << ',' << f << ',' << ckpt.keypoints[f / 3] << ',' << kAxis[f % 3] << ','
        << csv::format_exact(scores[f]) << '\n';
  }
}

void write_attention(const std::filesystem::path& path, const Matrix& weights) {
  auto out = csv::open_output(path);
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    auto row = weights.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << csv::format_exact(row[j]);
    out << '\n';
  }
}

}  // namespace

DataBundle load_data(const RunConfig& cfg) {
  DataBundle d;
  if (cfg.patients.empty()) throw ConfigError("no patient file configured");
  d.records = load_patients(cfg.patients);
  if (cfg.modality != ModalityMode::kText) {
    if (cfg.meshes.empty()) throw ConfigError("no mesh file configured");
    for (auto& m : load_meshes(cfg.meshes)) {
      std::string id = m.subject_id;
      d.meshes.emplace(std::move(id), std::move(m));
    }
    if (!cfg.thetas.empty()) d.thetas = load_thetas(cfg.thetas);
  }
  if (!cfg.text_embeddings.empty()) d.embeddings = import_embeddings(cfg.text_embeddings);
  return d;
}

DataBundle bundle_from_synth(const SynthData& data) {
  DataBundle d;
  d.records = data.records;
  for (const auto& m : data.meshes) d.meshes.emplace(m.subject_id, m);
  d.thetas = data.thetas;
  return d;
}

std::vector<double> raw_keypoint_features(const PatientRecord& rec, const DataBundle& data,
                                          const KeypointSelection& sel) {
  auto it = data.meshes.find(rec.id);
  if (it == data.meshes.end()) throw LookupError(fmt::format("no face mesh for subject {}", rec.id));
  auto th = data.thetas.find(rec.id);
  const AffineTheta theta = th == data.thetas.end() ? AffineTheta::identity() : th->second;
  return select_keypoints(apply_affine(it->second, theta), sel);
}

Example Preprocessor::make_example(const PatientRecord& rec, const DataBundle& data, std::size_t label) const {
  Example ex;
  ex.id = rec.id;
  ex.label = label;
  if (uses_image) ex.features = scaler.apply(raw_keypoint_features(rec, data, selection));
  if (uses_text) {
    if (imported_text) {
      if (!data.embeddings) throw CompatibilityError("imported text embeddings are required but were not loaded");
      ex.imported = data.embeddings->at(rec.id);
    } else {
      ex.token_ids = tokenize(templatize(rec), vocab);
    }
  }
  return ex;
}

std::vector<ClassDistribution> predict_examples(const Model& model, const std::vector<Example>& examples,
                                                const GateSample& gates) {
  std::vector<const Example*> ptrs;
  ptrs.reserve(examples.size());
  for (const auto& e : examples) ptrs.push_back(&e);
  return predict_ptrs(model, ptrs, gates);
}

TrainResult train(const RunConfig& cfg, std::uint64_t seed, const DataBundle& data, const TrainOptions& opts) {
  cfg.validate();
  const auto& records = data.records;
  if (records.empty()) throw InputError("no patients to train on");

  Preprocessor pre;
  pre.selection = selection_for(cfg);
  pre.uses_image = cfg.modality != ModalityMode::kText;
  pre.uses_text = cfg.modality != ModalityMode::kVisual;
  pre.imported_text = pre.uses_text && data.embeddings.has_value();
  if (pre.imported_text && data.embeddings->d_model != cfg.d_model)
    throw CompatibilityError(fmt::format("imported embeddings have width {}, config d_model is {}",
                                         data.embeddings->d_model, cfg.d_model));

  // split on labels alone so every modality/fusion variant sees the same subjects
  LabeledDataset labeled;
  std::vector<std::size_t> labels(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    labels[i] = require_label(records[i]);
    labeled.add(Sample{i, labels[i], {}, false});
  }
  const DataSplit split = stratified_split(labeled, derive_seed(seed, kSplitStream));

  std::vector<std::vector<double>> raw(records.size());
  if (pre.uses_image) {
    for (std::size_t i = 0; i < records.size(); ++i) raw[i] = raw_keypoint_features(records[i], data, pre.selection);
    std::vector<std::vector<double>> train_rows;
    for (const auto& s : split.train.samples()) train_rows.push_back(raw[s.origin]);
    pre.scaler = FeatureScaler::fit(train_rows);
  }
  if (pre.uses_text && !pre.imported_text) {
    std::vector<std::string> texts;
    for (const auto& s : split.train.samples()) texts.push_back(templatize(records[s.origin]));
    pre.vocab = Vocabulary::build(texts);
  }

  std::vector<Example> examples(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    examples[i] = pre.make_example(records[i], data, labels[i]);
  }

  // oversampling touches the training split only
  std::deque<Example> synthetic;
  std::vector<const Example*> train_set;
  switch (cfg.oversample) {
    case OversampleMode::kNone:
      for (const auto& s : split.train.samples()) train_set.push_back(&examples[s.origin]);
      break;
    case OversampleMode::kRos: {
      const auto balanced = random_oversample(split.train, derive_seed(seed, kOversampleStream));
      for (const auto& s : balanced.samples()) train_set.push_back(&examples[s.origin]);
      break;
    }
    case OversampleMode::kSmote: {
      std::vector<std::vector<double>> tab_rows;
      for (const auto& s : split.train.samples()) tab_rows.push_back(tabular_features(records[s.origin]));
      const FeatureScaler tab = FeatureScaler::fit(tab_rows);
      LabeledDataset numeric;
      for (const auto& s : split.train.samples()) {
        Sample n = s;
        n.features = examples[s.origin].features;
        auto t = tab.apply(tabular_features(records[s.origin]));
        n.features.insert(n.features.end(), t.begin(), t.end());
        numeric.add(std::move(n));
      }
      SmoteOptions so;
      so.k_neighbors = cfg.smote_k;
      const auto balanced = smote_oversample(numeric, derive_seed(seed, kOversampleStream), so);
      std::size_t counter = 0;
      const std::size_t m = pre.uses_image ? pre.selection.feature_count() : 0;
      for (const auto& s : balanced.samples()) {
        if (!s.synthetic) {
          train_set.push_back(&examples[s.origin]);
          continue;
        }
        PatientRecord rec = records[s.origin];
        rec.id = fmt::format("{}#smote{}", rec.id, ++counter);
        const auto t = tab.invert(std::span<const double>(s.features).subspan(m));
        rec.age = t[0];
        rec.neck_cm = t[1];
        rec.bmi = t[2];
        rec.whr = t[3];
        Example ex;
        ex.id = rec.id;
        ex.label = s.label;
        ex.features.assign(s.features.begin(), s.features.begin() + static_cast<std::ptrdiff_t>(m));
        if (pre.uses_text) {
          if (pre.imported_text)
            ex.imported = examples[s.origin].imported;
          else
            ex.token_ids = tokenize(templatize(rec), pre.vocab);
        }
        synthetic.push_back(std::move(ex));
        train_set.push_back(&synthetic.back());
      }
      break;
    }
  }

  std::vector<const Example*> val_set, test_set;
  for (const auto& s : split.validation.samples()) val_set.push_back(&examples[s.origin]);
  for (const auto& s : split.test.samples()) test_set.push_back(&examples[s.origin]);

  const ModelSpec spec = make_model_spec(cfg, pre.selection.feature_count(), pre.vocab.size(), pre.imported_text);
  Model model(spec, derive_seed(seed, kInitStream));

  Rng shuffle_rng(derive_seed(seed, kShuffleStream));
  Rng noise_rng(derive_seed(seed, kNoiseStream));
  Rng dropout_rng(derive_seed(seed, kDropoutStream));
  AdamConfig adam = cfg.adam;

  TrainResult result;
  Checkpoint& best = result.checkpoint;
  best.config = cfg;
  best.seed = seed;
  best.keypoints = pre.selection.indices();
  best.scaler = pre.scaler;
  best.vocab = pre.vocab;
  best.imported_text = pre.imported_text;

  TrainState& state = result.state;
  double best_acc = -1.0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0, since_decay = 0;
  std::vector<const Example*> order = train_set;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double tau = temperature_at(cfg, epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::span<const Example* const> batch(order.data() + start, stop - start);
      model.params().zero_grad();
      const double loss = model.batch_loss_and_grad(batch, noise_rng, tau, true, &dropout_rng);
      if (!std::isfinite(loss))
        throw DivergenceError(fmt::format("seed {} epoch {} batch {}: training loss is {}", seed, epoch + 1,
                                          batches + 1, loss));
      model.params().adam_step(adam);
      loss_sum += loss;
      ++batches;
    }

    const auto val_preds = predict_ptrs(model, val_set, model.eval_gates(tau));
    const double val_acc = accuracy_of(val_preds, val_set);
    const double val_loss = mean_loss_of(val_preds, val_set, cfg.loss);
    // equal accuracy counts as progress when the validation loss drops
    if (val_acc > best_acc || (val_acc == best_acc && val_loss < best_loss)) {
      best_acc = val_acc;
      best_loss = val_loss;
      best.params = model.params();
      best.temperature = tau;
      best.epoch = epoch + 1;
      best.best_validation_accuracy = val_acc;
      since_best = 0;
      since_decay = 0;
    } else {
      ++since_best;
      if (++since_decay >= cfg.lr_patience) {
        adam.learning_rate *= 0.5;
        since_decay = 0;
      }
    }
    state.history.push_back(EpochLog{epoch + 1, loss_sum / static_cast<double>(batches), val_acc, val_loss, best_acc,
                                     adam.learning_rate, tau});
    if (opts.verbose)
      std::cerr << fmt::format("seed {} epoch {:3d} loss {:.4f} val_acc {:.4f} best {:.4f} lr {:.2e}\n", seed,
                               epoch + 1, loss_sum / static_cast<double>(batches), val_acc, best_acc,
                               adam.learning_rate);
    if (since_best >= cfg.early_stop_patience) break;
  }
  state.epoch = state.history.size();
  state.best_validation_accuracy = best_acc;
  state.learning_rate = adam.learning_rate;

  const Model final_model = best.model();
  const GateSample eval = final_model.eval_gates(best.temperature);
  const auto val_preds = predict_ptrs(final_model, val_set, eval);
  result.validation_metrics = evaluate(val_preds, labels_of(val_set));
  result.test_predictions = predict_ptrs(final_model, test_set, eval);
  result.test_labels = labels_of(test_set);
  result.test_metrics = evaluate(result.test_predictions, result.test_labels);
  for (const auto* e : test_set) result.test_ids.push_back(e->id);
  std::vector<const Example*> train_originals;
  for (const auto& s : split.train.samples()) train_originals.push_back(&examples[s.origin]);
  result.train_predictions = predict_ptrs(final_model, train_originals, eval);
  for (const auto* e : train_originals) result.train_ids.push_back(e->id);
  if (spec.uses_image())
    result.selected_features =
        harden_gates(best.params.value(gate_params::kLogits), std::min(cfg.harden_k, spec.feature_count));

  if (!opts.out_dir.empty()) {
    state.checkpoint_path = opts.out_dir / "checkpoint.json";
    save_checkpoint(state.checkpoint_path, best);
    write_history(opts.out_dir / "history.csv", state.history);
    write_metrics_kv(opts.out_dir / "test_metrics.txt", result.test_metrics);
    if (spec.uses_image()) write_selected_features(opts.out_dir / "selected_features.csv", best, result.selected_features);
    if (opts.attention_dumps > 0 && spec.modality == ModalityMode::kMultimodal &&
        spec.fusion == FusionMode::kCrossAttention) {
      for (std::size_t i = 0; i < std::min(opts.attention_dumps, test_set.size()); ++i)
        write_attention(opts.out_dir / "attention" / fmt::format("{}.csv", test_set[i]->id),
                        final_model.attention_map(*test_set[i], eval));
    }
  }
  return result;
}

EvalResult evaluate_checkpoint(const Checkpoint& ckpt, const DataBundle& data, bool harden) {
  check_compatible(ckpt, data);
  LabeledDataset labeled;
  for (std::size_t i = 0; i < data.records.size(); ++i)
    labeled.add(Sample{i, require_label(data.records[i]), {}, false});
  const DataSplit split = stratified_split(labeled, derive_seed(ckpt.seed, kSplitStream));
  const Preprocessor pre = preprocessor_from(ckpt);
  std::vector<Example> test;
  for (const auto& s : split.test.samples()) test.push_back(pre.make_example(data.records[s.origin], data, s.label));
  const Model model = ckpt.model();
  const auto gates = harden ? model.eval_gates(ckpt.temperature, std::min(ckpt.config.harden_k, model.spec().feature_count))
                            : model.eval_gates(ckpt.temperature);
  EvalResult r;
  r.predictions = predict_examples(model, test, gates);
  std::vector<std::size_t> y;
  for (const auto& e : test) {
    y.push_back(e.label);
    r.ids.push_back(e.id);
  }
  r.metrics = evaluate(r.predictions, y);
  return r;
}

std::vector<Prediction> predict(const Checkpoint& ckpt, const DataBundle& data, bool harden) {
  check_compatible(ckpt, data);
  const Preprocessor pre = preprocessor_from(ckpt);
  std::vector<Example> examples;
  examples.reserve(data.records.size());
  for (const auto& rec : data.records) examples.push_back(pre.make_example(rec, data, 0));
  const Model model = ckpt.model();
  const auto gates = harden ? model.eval_gates(ckpt.temperature, std::min(ckpt.config.harden_k, model.spec().feature_count))
                            : model.eval_gates(ckpt.temperature);
  auto dists = predict_examples(model, examples, gates);
  std::vector<Prediction> out;
  out.reserve(dists.size());
  for (std::size_t i = 0; i < dists.size(); ++i) out.push_back({examples[i].id, std::move(dists[i])});
  return out;
}

void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds) {
  auto out = csv::open_output(path);
  out << "id,severity,p_normal,p_mild,p_moderate,p_severe\n";
  for (const auto& p : preds) {
    out << p.id << ',' << to_string(severity_from_index(p.dist.argmax()));
    for (double v : p.dist.p) out << ',' << csv::format_exact(v);
    out << '\n';
  }
}

double sign_test_upper(std::size_t k, std::size_t n) {
  if (k == 0) return 1.0;
  if (k > n) return 0.0;
  double p = 0.0;
  for (std::size_t i = k; i <= n; ++i) {
    // C(n, i) / 2^n in log space
    p += std::exp(std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(i) + 1) -
                  std::lgamma(static_cast<double>(n - i) + 1) - static_cast<double>(n) * std::log(2.0));
  }
  return std::min(1.0, p);
}

AblationReport ablate(const RunConfig& cfg, const DataBundle& data, bool verbose) {
  cfg.validate();
  struct Variant {
    std::string group, name;
    RunConfig cfg;
  };
  std::vector<Variant> rows;
  auto with = [&](auto mutate) {
    RunConfig c = cfg;
    mutate(c);
    return c;
  };
  for (auto m : {OversampleMode::kNone, OversampleMode::kSmote, OversampleMode::kRos})
    rows.push_back({"oversampling", std::string(to_string(m)), with([m](RunConfig& c) { c.oversample = m; })});
  for (auto m : {LossMode::kCrossEntropy, LossMode::kOrdinal})
    rows.push_back({"objective", std::string(to_string(m)), with([m](RunConfig& c) { c.loss = m; })});
  for (auto m : {FusionMode::kAutoencoder, FusionMode::kCrossAttention})
    rows.push_back({"fusion", std::string(to_string(m)), with([m](RunConfig& c) {
                      c.fusion = m;
                      c.modality = ModalityMode::kMultimodal;
                    })});
  for (auto m : {ModalityMode::kText, ModalityMode::kVisual, ModalityMode::kMultimodal})
    rows.push_back({"modality", std::string(to_string(m)), with([m](RunConfig& c) { c.modality = m; })});

  // identical configurations (the full model recurs once per group) run once
  std::vector<nlohmann::json> distinct;
  std::vector<std::size_t> row_config(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto key = to_json(rows[r].cfg);
    auto it = std::find(distinct.begin(), distinct.end(), key);
    row_config[r] = static_cast<std::size_t>(it - distinct.begin());
    if (it == distinct.end()) distinct.push_back(key);
  }
  std::vector<RunConfig> configs;
  for (std::size_t d = 0; d < distinct.size(); ++d)
    for (std::size_t r = 0; r < rows.size(); ++r)
      if (row_config[r] == d) {
        configs.push_back(rows[r].cfg);
        break;
      }

  const std::size_t n_seeds = cfg.seeds.size();
  const std::size_t jobs = configs.size() * n_seeds;
  std::vector<MetricsReport> results(jobs);
  std::vector<std::string> errors(jobs);
  const auto n_jobs = static_cast<std::ptrdiff_t>(jobs);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t j = 0; j < n_jobs; ++j) {
    const auto job = static_cast<std::size_t>(j);
    const auto& c = configs[job / n_seeds];
    const auto seed = cfg.seeds[job % n_seeds];
    try {
      results[job] = train(c, seed, data).test_metrics;
      if (verbose) {
#pragma omp critical(ablate_log)
        std::cerr << fmt::format("ablate {}/{} {} {} {} {} seed {} acc {:.4f}\n", job + 1, jobs,
                                 to_string(c.oversample), to_string(c.loss), to_string(c.fusion),
                                 to_string(c.modality), seed, results[job].accuracy);
      }
    } catch (const std::exception& e) {
      errors[job] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw Error(fmt::format("ablation run failed: {}", e));

  AblationReport report;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    AblationRow row;
    row.group = rows[r].group;
    row.variant = rows[r].name;
    row.is_full = to_json(rows[r].cfg) == to_json(cfg);
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const auto& m = results[row_config[r] * n_seeds + s];
      row.accuracy.push_back(m.accuracy);
      row.auc.push_back(m.auc);
    }
    row.mean_accuracy = std::accumulate(row.accuracy.begin(), row.accuracy.end(), 0.0) / static_cast<double>(n_seeds);
    row.mean_auc = std::accumulate(row.auc.begin(), row.auc.end(), 0.0) / static_cast<double>(n_seeds);
    report.rows.push_back(std::move(row));
  }

  auto find = [&](std::string_view group, std::string_view variant) -> const AblationRow& {
    for (const auto& r : report.rows)
      if (r.group == group && r.variant == variant) return r;
    throw LookupError(fmt::format("ablation row {}/{} missing", group, variant));
  };
  auto compare = [&](std::string name, std::vector<double> preferred, std::vector<double> other) {
    AblationComparison c;
    c.name = std::move(name);
    for (std::size_t s = 0; s < n_seeds; ++s) {
      const double gap = preferred[s] - other[s];
      c.gaps.push_back(gap);
      c.worse += gap < 0.0;
      c.better += gap > 0.0;
    }
    c.mean_gap = std::accumulate(c.gaps.begin(), c.gaps.end(), 0.0) / static_cast<double>(n_seeds);
    c.sign_test_p = sign_test_upper(c.worse, c.worse + c.better);
    c.pass = c.mean_gap >= 0.0 && c.sign_test_p >= 0.05;
    report.comparisons.push_back(std::move(c));
  };
  compare("ros >= none", find("oversampling", "ros").accuracy, find("oversampling", "none").accuracy);
  compare("ordinal >= ce", find("objective", "ordinal").accuracy, find("objective", "ce").accuracy);
  compare("xattn >= ae", find("fusion", "xattn").accuracy, find("fusion", "ae").accuracy);
  {
    const auto& text = find("modality", "text").accuracy;
    const auto& visual = find("modality", "visual").accuracy;
    const double mt = std::accumulate(text.begin(), text.end(), 0.0);
    const double mv = std::accumulate(visual.begin(), visual.end(), 0.0);
    compare("multimodal >= max(text, visual)", find("modality", "multimodal").accuracy, mt >= mv ? text : visual);
  }
  return report;
}

void write_ablation(const std::filesystem::path& dir, const AblationReport& report) {
  {
    auto out = csv::open_output(dir / "ablation.csv");
    out << "group,variant,full,mean_acc,mean_auc";
    const std::size_t n = report.rows.empty() ? 0 : report.rows.front().accuracy.size();
    for (std::size_t s = 0; s < n; ++s) out << ",acc_" << s + 1;
    out << '\n';
    for (const auto& r : report.rows) {
      out << r.group << ',' << r.variant << ',' << (r.is_full ? 1 : 0) << ',' << csv::format_exact(r.mean_accuracy)
          << ',' << csv::format_exact(r.mean_auc);
      for (double a : r.accuracy) out << ',' << csv::format_exact(a);
      out << '\n';
    }
  }
  auto md = csv::open_output(dir / "ablation.md");
  md << "| Group | Variant | Acc (%) | AUC (%) |\n|---|---|---:|---:|\n";
  for (const auto& r : report.rows)
    md << fmt::format("| {} | {}{}{} | {:.1f} | {:.1f} |\n", r.group, r.is_full ? "**" : "", r.variant,
                      r.is_full ? "**" : "", 100.0 * r.mean_accuracy, 100.0 * r.mean_auc);
  md << "\n| Comparison | Mean gap (pp) | Wins | Losses | Sign-test p | Holds |\n|---|---:|---:|---:|---:|---|\n";
  for (const auto& c : report.comparisons)
    md << fmt::format("| {} | {:.2f} | {} | {} | {:.4f} | {} |\n", c.name, 100.0 * c.mean_gap, c.better, c.worse,
                      c.sign_test_p, c.pass ? "yes" : "no");
}

std::vector<GradcheckVariant> run_gradcheck(const RunConfig& cfg, std::uint64_t seed, const GradcheckRequest& req) {
  SynthConfig sc;
  sc.n_subjects = 16;
  sc.class_proportions = {1, 1, 1, 1};
  sc.seed = seed;
  const DataBundle data = bundle_from_synth(generate(sc));

  RunConfig tiny = cfg;
  tiny.d_model = 4;
  tiny.d_k = 0;
  tiny.n_image_tokens = 2;
  tiny.gate_neurons = 3;
  tiny.hidden = {5};
  tiny.ae_bottleneck = 3;
  tiny.dropout = req.force_dropout ? std::max(cfg.dropout, 0.4) : 0.0;

  Preprocessor pre;
  pre.selection = selection_for(tiny);
  std::vector<std::vector<double>> rows;
  std::vector<std::string> texts;
  for (const auto& r : data.records) {
    rows.push_back(raw_keypoint_features(r, data, pre.selection));
    texts.push_back(templatize(r));
  }
  pre.scaler = FeatureScaler::fit(rows);
  pre.vocab = Vocabulary::build(texts);

  // one subject per class
  std::vector<Example> batch;
  std::set<std::size_t> seen;
  for (const auto& r : data.records) {
    const std::size_t y = require_label(r);
    if (seen.insert(y).second) batch.push_back(pre.make_example(r, data, y));
  }
  std::vector<const Example*> ptrs;
  for (const auto& e : batch) ptrs.push_back(&e);

  struct Axis {
    ModalityMode modality;
    FusionMode fusion;
    LossMode loss;
  };
  const std::vector<Axis> axes = {
      {ModalityMode::kMultimodal, FusionMode::kCrossAttention, LossMode::kOrdinal},
      {ModalityMode::kMultimodal, FusionMode::kCrossAttention, LossMode::kCrossEntropy},
      {ModalityMode::kMultimodal, FusionMode::kAutoencoder, LossMode::kOrdinal},
      {ModalityMode::kMultimodal, FusionMode::kAutoencoder, LossMode::kCrossEntropy},
      {ModalityMode::kVisual, FusionMode::kCrossAttention, LossMode::kOrdinal},
      {ModalityMode::kText, FusionMode::kCrossAttention, LossMode::kOrdinal},
  };

  std::vector<GradcheckVariant> out;
  for (const auto& a : axes) {
    RunConfig c = tiny;
    c.modality = a.modality;
    c.fusion = a.fusion;
    c.loss = a.loss;
    const ModelSpec spec = make_model_spec(c, pre.selection.feature_count(), pre.vocab.size(), false);
    Model model(spec, derive_seed(seed, kInitStream));
    // move gate logits off zero so the relaxation gradient is exercised
    if (spec.uses_image()) {
      Rng r(derive_seed(seed, 7));
      model.params().value(gate_params::kLogits) = random_normal(spec.gate_neurons, spec.feature_count, 0.5, r);
    }
    Rng noise_rng(derive_seed(seed, kNoiseStream));
    const Matrix noise = model.draw_noise(noise_rng);
    const double tau = c.gate_temperature;
    Rng dropout_rng(derive_seed(seed, kDropoutStream));
    const bool train_mode = c.dropout > 0.0;

    LossFn fn = [&](ParamStore& params) {
      params.zero_grad();
      const GateSample gates = model.gates(noise, tau);
      const double loss = model.batch_loss_and_grad(ptrs, gates, tau, train_mode, &dropout_rng);
      if (!req.corrupt_param.empty() && params.contains(req.corrupt_param)) {
        auto& g = params.grad(req.corrupt_param);
        g.values()[0] += 1e-2 + 0.1 * std::abs(g.values()[0]);
      }
      return loss;
    };
    std::string name = fmt::format("{}/{}/{}", to_string(c.modality), to_string(c.fusion), to_string(c.loss));
    if (c.modality != ModalityMode::kMultimodal) name = fmt::format("{}/{}", to_string(c.modality), to_string(c.loss));
    out.push_back({std::move(name), grad_check(fn, model.params())});
  }
  return out;
}

void write_run_metrics(const std::filesystem::path& path, const std::vector<std::uint64_t>& seeds,
                       const std::vector<MetricsReport>& runs) {
  std::vector<std::string> names;
  std::vector<MetricsReport> rows = runs;
  for (auto s : seeds) names.push_back(fmt::format("seed_{}", s));
  names.push_back("all");
  rows.push_back(aggregate(runs));
  write_metrics_csv(path, names, rows);
}

}  // namespace mmsev
