#pragma once

// Facial landmark meshes: file I/O, the 2×3 pose transform, keypoint
// selection and projection of keypoint features into image tokens.

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mmsev/params.hpp"
#include "mmsev/tokens.hpp"

namespace mmsev {

inline constexpr std::size_t kLandmarkCount = 468;

struct Landmark {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  friend bool operator==(const Landmark&, const Landmark&) = default;
};

struct FaceMesh {
  std::string subject_id;
  std::vector<Landmark> landmarks;  // exactly kLandmarkCount entries
};

/// Row-major 2×3 affine map [x' y']ᵀ = θ·[x y 1]ᵀ.
struct AffineTheta {
  double sx = 1.0, shx = 0.0, tx = 0.0;
  double shy = 0.0, sy = 1.0, ty = 0.0;

  static AffineTheta identity() { return {}; }
  bool is_finite() const;
  friend bool operator==(const AffineTheta&, const AffineTheta&) = default;
};

/// outer ∘ inner: apply `inner` first.
AffineTheta compose(const AffineTheta& outer, const AffineTheta& inner);
/// Throws ParameterError when the linear part is singular.
AffineTheta inverse(const AffineTheta& theta);

/// Ordered, duplicate-free landmark indices in [0, 468).
class KeypointSelection {
 public:
  explicit KeypointSelection(std::vector<std::size_t> indices);

  /// Lower jawline, chin midline and nose bridge of the canonical 468-point topology.
  static KeypointSelection default_selection();
  static KeypointSelection all();

  const std::vector<std::size_t>& indices() const { return indices_; }
  std::size_t size() const { return indices_.size(); }
  std::size_t feature_count() const { return 3 * indices_.size(); }
  /// Position of `landmark` in the selection; throws SelectionError if absent.
  std::size_t position_of(std::size_t landmark) const;

 private:
  std::vector<std::size_t> indices_;
};

namespace landmarks {
extern const std::vector<std::size_t> kJawline;
extern const std::vector<std::size_t> kChin;
extern const std::vector<std::size_t> kNoseBridge;
}  // namespace landmarks

/// Joint min-max rescaling of x and y into [0,1] (z shares the scale) when any
/// x or y falls outside [0,1]. Returns true if the landmarks were rescaled.
bool normalize_landmarks(std::span<Landmark> points);

/// Reads the `subject_id,landmark_index,x,y,z` format; subjects keep first-seen order.
std::vector<FaceMesh> load_meshes(const std::filesystem::path& path);
void save_meshes(const std::filesystem::path& path, std::span<const FaceMesh> meshes);

/// Reads the optional `subject_id,sx,shx,tx,shy,sy,ty` sidecar.
std::map<std::string, AffineTheta> load_thetas(const std::filesystem::path& path);
void save_thetas(const std::filesystem::path& path, const std::map<std::string, AffineTheta>& thetas);

/// Maps (x, y) through θ and clamps to [0,1]; z passes through.
FaceMesh apply_affine(const FaceMesh& mesh, const AffineTheta& theta);

/// Concatenated (x, y, z) of the selected landmarks, in selection order.
std::vector<double> select_keypoints(const FaceMesh& mesh, const KeypointSelection& sel);

// Image tokenizer: the feature vector is zero-padded to n_tokens equal
// contiguous blocks, block t is projected to d_model by its own bias-free
// matrix, and the classification row is prepended.
namespace image_params {
inline constexpr const char* kProjection = "image.proj";  // (n_tokens·block) × d_model, block t in rows [t·block, (t+1)·block)
inline constexpr const char* kCls = "image.cls";          // 1 × d_model
}  // namespace image_params

std::size_t image_block_size(std::size_t feature_count, std::size_t n_tokens);
void init_image_tokenizer(ParamStore& params, std::size_t feature_count, std::size_t n_tokens,
                          std::size_t d_model, Rng& rng);

TokenSequence tokenize_image(std::span<const double> features, const ParamStore& params,
                             std::size_t n_tokens, std::size_t d_model);
/// Accumulates parameter gradients; returns d features.
std::vector<double> tokenize_image_backward(std::span<const double> features, ParamStore& params,
                                            std::size_t n_tokens, const Matrix& d_tokens);

}  // namespace mmsev
