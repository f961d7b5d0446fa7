#pragma once

// Class rebalancing and stratified splitting over labeled samples.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "mmsev/severity.hpp"

namespace mmsev {

struct Sample {
  std::size_t origin = 0;        // index of the source example
  std::size_t label = 0;         // 0-based class index
  std::vector<double> features;  // numeric view used by SMOTE; may be empty
  bool synthetic = false;
};

class LabeledDataset {
 public:
  explicit LabeledDataset(std::size_t num_classes = kNumClasses) : num_classes_(num_classes) {}
  LabeledDataset(std::vector<Sample> samples, std::size_t num_classes = kNumClasses);

  /// Throws LabelError for labels outside the class range.
  void add(Sample s);

  const std::vector<Sample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  std::size_t num_classes() const { return num_classes_; }
  std::vector<std::size_t> class_counts() const;

 private:
  std::vector<Sample> samples_;
  std::size_t num_classes_;
};

/// Convenience: `counts[c]` samples of class c with origins 0..N-1.
LabeledDataset dataset_from_counts(const std::vector<std::size_t>& counts);

/// Duplicates minority samples uniformly with replacement until every class
/// has max(counts) samples. Originals come first, in input order.
LabeledDataset random_oversample(const LabeledDataset& data, std::uint64_t seed);

struct SmoteOptions {
  std::size_t k_neighbors = 5;
  /// Fixes the interpolation coefficient instead of drawing it (tests only).
  std::optional<double> fixed_u;
};

/// Interpolates x + u·(x_nn − x) towards one of the k nearest same-class
/// neighbours until every class reaches max(counts). Single-sample classes are
/// duplicated instead, with a warning on stderr.
LabeledDataset smote_oversample(const LabeledDataset& data, std::uint64_t seed, const SmoteOptions& opts = {});

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct DataSplit {
  LabeledDataset train;
  LabeledDataset validation;
  LabeledDataset test;
};

/// Per-class largest-remainder allocation; every class needs ≥ 3 samples.
DataSplit stratified_split(const LabeledDataset& data, std::uint64_t seed, const SplitFractions& fr = {});

/// Largest-remainder apportionment of n items over the given fractions.
std::vector<std::size_t> apportion(std::size_t n, const std::vector<double>& fractions);

}  // namespace mmsev
