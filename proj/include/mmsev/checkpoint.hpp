#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mmsev/config.hpp"
#include "mmsev/model.hpp"
#include "mmsev/text.hpp"

namespace mmsev {

/// Per-feature z-scoring fitted on training rows; constant features keep scale 1.
struct FeatureScaler {
  std::vector<double> mean;
  std::vector<double> scale;

  static FeatureScaler fit(std::span<const std::vector<double>> rows);
  std::vector<double> apply(std::span<const double> row) const;
  std::vector<double> invert(std::span<const double> row) const;
};

struct Checkpoint {
  static constexpr int kVersion = 1;

  RunConfig config;
  std::uint64_t seed = 0;  // split and initialization seed of the run
  std::vector<std::size_t> keypoints;
  FeatureScaler scaler;
  Vocabulary vocab;
  bool imported_text = false;
  double temperature = 0.5;
  std::size_t epoch = 0;
  double best_validation_accuracy = 0.0;
  ParamStore params;

  ModelSpec spec() const;
  Model model() const;
};

/// JSON text with shortest round-trip doubles, so values reload bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws FormatError on malformed files and CompatibilityError on a version
/// or shape mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mmsev
