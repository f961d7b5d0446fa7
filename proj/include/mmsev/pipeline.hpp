#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmsev/checkpoint.hpp"
#include "mmsev/config.hpp"
#include "mmsev/gradcheck.hpp"
#include "mmsev/mesh.hpp"
#include "mmsev/metrics.hpp"
#include "mmsev/model.hpp"
#include "mmsev/synth.hpp"
#include "mmsev/text.hpp"

namespace mmsev {

/// Everything read from disk for one experiment.
struct DataBundle {
  std::vector<PatientRecord> records;
  std::map<std::string, FaceMesh> meshes;
  std::map<std::string, AffineTheta> thetas;
  std::optional<EmbeddingTable> embeddings;
};

/// Meshes are required unless the modality is text-only.
DataBundle load_data(const RunConfig& cfg);
DataBundle bundle_from_synth(const SynthData& data);

/// Pose-corrected keypoint features; throws LookupError naming a subject without a mesh.
std::vector<double> raw_keypoint_features(const PatientRecord& rec, const DataBundle& data,
                                          const KeypointSelection& sel);

/// Turns records into model inputs with a fitted scaler and vocabulary.
struct Preprocessor {
  KeypointSelection selection = KeypointSelection::default_selection();
  FeatureScaler scaler;
  Vocabulary vocab;
  bool uses_image = true;
  bool uses_text = true;
  bool imported_text = false;

  Example make_example(const PatientRecord& rec, const DataBundle& data, std::size_t label) const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_accuracy = 0.0;
  double validation_loss = 0.0;
  double best_validation_accuracy = 0.0;
  double learning_rate = 0.0;
  double temperature = 0.0;
};

struct TrainState {
  std::size_t epoch = 0;
  double best_validation_accuracy = 0.0;
  double learning_rate = 0.0;
  std::filesystem::path checkpoint_path;
  std::vector<EpochLog> history;
};

struct TrainOptions {
  std::filesystem::path out_dir;  // empty → nothing written
  bool verbose = false;
  std::size_t attention_dumps = 0;  // test subjects whose attention maps are written
};

struct TrainResult {
  TrainState state;
  Checkpoint checkpoint;  // best-validation parameters
  MetricsReport validation_metrics;
  MetricsReport test_metrics;
  std::vector<std::string> test_ids;
  std::vector<std::size_t> test_labels;
  std::vector<ClassDistribution> test_predictions;
  std::vector<std::string> train_ids;
  std::vector<ClassDistribution> train_predictions;
  std::vector<std::size_t> selected_features;  // harden_gates(harden_k), empty without the image path
};

/// One seeded training run: split, preprocess, oversample the training split,
/// train with best-validation selection, evaluate on the test split.
TrainResult train(const RunConfig& cfg, std::uint64_t seed, const DataBundle& data, const TrainOptions& opts = {});

/// Noise-free, dropout-free inference. Parallel over examples.
std::vector<ClassDistribution> predict_examples(const Model& model, const std::vector<Example>& examples,
                                                const GateSample& gates);

struct EvalResult {
  MetricsReport metrics;
  std::vector<std::string> ids;
  std::vector<ClassDistribution> predictions;
};

/// Re-creates the checkpoint's split and evaluates its test portion.
EvalResult evaluate_checkpoint(const Checkpoint& ckpt, const DataBundle& data, bool harden = false);

struct Prediction {
  std::string id;
  ClassDistribution dist;
};

/// Throws CompatibilityError when the inputs cannot feed the checkpoint's model.
std::vector<Prediction> predict(const Checkpoint& ckpt, const DataBundle& data, bool harden = false);
void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds);

struct AblationRow {
  std::string group;
  std::string variant;
  bool is_full = false;
  std::vector<double> accuracy;  // per seed
  std::vector<double> auc;       // per seed
  double mean_accuracy = 0.0;
  double mean_auc = 0.0;
};

struct AblationComparison {
  std::string name;  // "preferred >= other"
  std::vector<double> gaps;  // preferred − other per seed
  double mean_gap = 0.0;
  std::size_t worse = 0;   // seeds where the preferred variant lost
  std::size_t better = 0;  // seeds where it won
  double sign_test_p = 1.0;  // P(≥ worse losses | no difference)
  bool pass = false;         // mean gap ≥ 0 and the losses are not significant at 0.05
};

struct AblationReport {
  std::vector<AblationRow> rows;
  std::vector<AblationComparison> comparisons;
};

/// Upper-tail binomial(n, 1/2) probability P(X ≥ k).
double sign_test_upper(std::size_t k, std::size_t n);

/// The one-axis-at-a-time grid around cfg over every seed. Independent runs
/// execute concurrently.
AblationReport ablate(const RunConfig& cfg, const DataBundle& data, bool verbose = false);
void write_ablation(const std::filesystem::path& dir, const AblationReport& report);

struct GradcheckRequest {
  bool force_dropout = false;
  std::string corrupt_param;  // test hook: perturb this parameter's analytic gradient
};

struct GradcheckVariant {
  std::string name;
  GradCheckReport report;
};

/// Tiny fixed batch and fixed gate noise for every fusion/modality/loss variant.
std::vector<GradcheckVariant> run_gradcheck(const RunConfig& cfg, std::uint64_t seed,
                                            const GradcheckRequest& req = {});

/// Per-seed rows plus the aggregate with cross-seed variance.
void write_run_metrics(const std::filesystem::path& path, const std::vector<std::uint64_t>& seeds,
                       const std::vector<MetricsReport>& runs);

}  // namespace mmsev
