#include "mmsev/mesh.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "mmsev/csv.hpp"
#include "mmsev/errors.hpp"

namespace mmsev {

namespace landmarks {
const std::vector<std::size_t> kJawline = {58,  172, 136, 150, 149, 176, 148, 152,
                                           377, 400, 378, 379, 365, 397, 288};
const std::vector<std::size_t> kChin = {175, 199, 200, 18};
const std::vector<std::size_t> kNoseBridge = {168, 6, 197, 195, 5, 4};
}  // namespace landmarks

bool AffineTheta::is_finite() const {
  return std::isfinite(sx) && std::isfinite(shx) && std::isfinite(tx) && std::isfinite(shy) &&
         std::isfinite(sy) && std::isfinite(ty);
}

AffineTheta compose(const AffineTheta& o, const AffineTheta& i) {
  AffineTheta r;
  r.sx = o.sx * i.sx + o.shx * i.shy;
  r.shx = o.sx * i.shx + o.shx * i.sy;
  r.tx = o.sx * i.tx + o.shx * i.ty + o.tx;
  r.shy = o.shy * i.sx + o.sy * i.shy;
  r.sy = o.shy * i.shx + o.sy * i.sy;
  r.ty = o.shy * i.tx + o.sy * i.ty + o.ty;
  return r;
}

AffineTheta inverse(const AffineTheta& t) {
  const double det = t.sx * t.sy - t.shx * t.shy;
  if (std::abs(det) < 1e-15) throw ParameterError("affine transform is singular");
  AffineTheta r;
  r.sx = t.sy / det;
  r.shx = -t.shx / det;
  r.shy = -t.shy / det;
  r.sy = t.sx / det;
  r.tx = -(r.sx * t.tx + r.shx * t.ty);
  r.ty = -(r.shy * t.tx + r.sy * t.ty);
  return r;
}

KeypointSelection::KeypointSelection(std::vector<std::size_t> indices) : indices_(std::move(indices)) {
  std::set<std::size_t> seen;
  for (auto idx : indices_) {
    if (idx >= kLandmarkCount)
      throw SelectionError(fmt::format("landmark index {} out of range [0, {})", idx, kLandmarkCount));
    if (!seen.insert(idx).second)
      throw SelectionError(fmt::format("landmark index {} selected more than once", idx));
  }
}

KeypointSelection KeypointSelection::default_selection() {
  std::vector<std::size_t> idx = landmarks::kJawline;
  idx.insert(idx.end(), landmarks::kChin.begin(), landmarks::kChin.end());
  idx.insert(idx.end(), landmarks::kNoseBridge.begin(), landmarks::kNoseBridge.end());
  return KeypointSelection(std::move(idx));
}

KeypointSelection KeypointSelection::all() {
  std::vector<std::size_t> idx(kLandmarkCount);
  for (std::size_t i = 0; i < kLandmarkCount; ++i) idx[i] = i;
  return KeypointSelection(std::move(idx));
}

std::size_t KeypointSelection::position_of(std::size_t landmark) const {
  auto it = std::find(indices_.begin(), indices_.end(), landmark);
  if (it == indices_.end())
    throw SelectionError(fmt::format("landmark {} is not part of the selection", landmark));
  return static_cast<std::size_t>(it - indices_.begin());
}

bool normalize_landmarks(std::span<Landmark> points) {
  if (points.empty()) return false;
  double lo = points[0].x;
  double hi = points[0].x;
  for (const auto& p : points) {
    lo = std::min({lo, p.x, p.y});
    hi = std::max({hi, p.x, p.y});
  }
  if (lo >= 0.0 && hi <= 1.0) return false;
  const double span = hi - lo;
  if (span <= 0.0) throw FormatError("cannot normalize landmarks with zero coordinate range");
  for (auto& p : points) {
    p.x = (p.x - lo) / span;
    p.y = (p.y - lo) / span;
    p.z = p.z / span;
  }
  return true;
}

std::vector<FaceMesh> load_meshes(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw FormatError(fmt::format("{}: empty mesh file", path.string()));
  ++line_no;
  const auto header = csv::split(line);
  const std::vector<std::string> expected = {"subject_id", "landmark_index", "x", "y", "z"};
  if (header != expected)
    throw FormatError(fmt::format("{}:1: expected header 'subject_id,landmark_index,x,y,z'", path.string()));

  struct Pending {
    FaceMesh mesh;
    std::vector<bool> filled;
    std::size_t count = 0;
    std::size_t first_line = 0;
  };
  std::vector<Pending> pending;
  std::map<std::string, std::size_t> slot;

  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 5)
      throw FormatError(fmt::format("{}:{}: expected 5 fields, got {}", path.string(), line_no, f.size()));
    const long long idx = csv::parse_int(f[1], path, line_no);
    if (idx < 0 || idx >= static_cast<long long>(kLandmarkCount))
      throw FormatError(fmt::format("{}:{}: landmark_index {} out of range", path.string(), line_no, idx));
    Landmark p{csv::parse_double(f[2], path, line_no), csv::parse_double(f[3], path, line_no),
               csv::parse_double(f[4], path, line_no)};

    auto [it, inserted] = slot.emplace(f[0], pending.size());
    if (inserted) {
      Pending fresh;
      fresh.mesh.subject_id = f[0];
      fresh.mesh.landmarks.assign(kLandmarkCount, Landmark{});
      fresh.filled.assign(kLandmarkCount, false);
      fresh.first_line = line_no;
      pending.push_back(std::move(fresh));
    }
    auto& cur = pending[it->second];
    const auto u = static_cast<std::size_t>(idx);
    if (cur.filled[u])
      throw FormatError(fmt::format("{}:{}: landmark {} repeated for subject '{}'", path.string(),
                                    line_no, idx, f[0]));
    cur.filled[u] = true;
    cur.mesh.landmarks[u] = p;
    ++cur.count;
  }

  std::vector<FaceMesh> out;
  out.reserve(pending.size());
  for (auto& p : pending) {
    if (p.count != kLandmarkCount)
      throw FormatError(fmt::format("{}:{}: subject '{}' has {} landmarks, expected {}", path.string(),
                                    p.first_line, p.mesh.subject_id, p.count, kLandmarkCount));
    normalize_landmarks(p.mesh.landmarks);
    out.push_back(std::move(p.mesh));
  }
  return out;
}

void save_meshes(const std::filesystem::path& path, std::span<const FaceMesh> meshes) {
  auto out = csv::open_output(path);
  out << "subject_id,landmark_index,x,y,z\n";
  for (const auto& m : meshes) {
    for (std::size_t i = 0; i < m.landmarks.size(); ++i) {
      const auto& p = m.landmarks[i];
      out << m.subject_id << ',' << i << ',' << csv::format_exact(p.x) << ','
          << csv::format_exact(p.y) << ',' << csv::format_exact(p.z) << '\n';
    }
  }
}

std::map<std::string, AffineTheta> load_thetas(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw FormatError(fmt::format("{}: empty theta file", path.string()));
  const std::vector<std::string> expected = {"subject_id", "sx", "shx", "tx", "shy", "sy", "ty"};
  if (csv::split(line) != expected)
    throw FormatError(fmt::format("{}:1: expected header 'subject_id,sx,shx,tx,shy,sy,ty'", path.string()));
  std::map<std::string, AffineTheta> out;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != 7)
      throw FormatError(fmt::format("{}:{}: expected 7 fields, got {}", path.string(), line_no, f.size()));
    AffineTheta t{csv::parse_double(f[1], path, line_no), csv::parse_double(f[2], path, line_no),
                  csv::parse_double(f[3], path, line_no), csv::parse_double(f[4], path, line_no),
                  csv::parse_double(f[5], path, line_no), csv::parse_double(f[6], path, line_no)};
    if (!out.emplace(f[0], t).second)
      throw FormatError(fmt::format("{}:{}: duplicate theta for subject '{}'", path.string(), line_no, f[0]));
  }
  return out;
}

void save_thetas(const std::filesystem::path& path, const std::map<std::string, AffineTheta>& thetas) {
  auto out = csv::open_output(path);
  out << "subject_id,sx,shx,tx,shy,sy,ty\n";
  for (const auto& [id, t] : thetas) {
    out << id << ',' << csv::format_exact(t.sx) << ',' << csv::format_exact(t.shx) << ','
        << csv::format_exact(t.tx) << ',' << csv::format_exact(t.shy) << ','
        << csv::format_exact(t.sy) << ',' << csv::format_exact(t.ty) << '\n';
  }
}

FaceMesh apply_affine(const FaceMesh& mesh, const AffineTheta& t) {
  FaceMesh out = mesh;
  for (auto& p : out.landmarks) {
    const double x = t.sx * p.x + t.shx * p.y + t.tx;
    const double y = t.shy * p.x + t.sy * p.y + t.ty;
    p.x = std::clamp(x, 0.0, 1.0);
    p.y = std::clamp(y, 0.0, 1.0);
  }
  return out;
}

std::vector<double> select_keypoints(const FaceMesh& mesh, const KeypointSelection& sel) {
  if (mesh.landmarks.size() != kLandmarkCount)
    throw FormatError(fmt::format("mesh '{}' has {} landmarks, expected {}", mesh.subject_id,
                                  mesh.landmarks.size(), kLandmarkCount));
  std::vector<double> out;
  out.reserve(sel.feature_count());
  for (auto idx : sel.indices()) {
    const auto& p = mesh.landmarks[idx];
    out.push_back(p.x);
    out.push_back(p.y);
    out.push_back(p.z);
  }
  return out;
}

std::size_t image_block_size(std::size_t feature_count, std::size_t n_tokens) {
  if (n_tokens == 0) throw ParameterError("image tokenizer needs at least one token");
  return (feature_count + n_tokens - 1) / n_tokens;
}

void init_image_tokenizer(ParamStore& params, std::size_t feature_count, std::size_t n_tokens,
                          std::size_t d_model, Rng& rng) {
  const std::size_t block = image_block_size(feature_count, n_tokens);
  params.add(image_params::kProjection,
             random_normal(n_tokens * block, d_model, 1.0 / std::sqrt(static_cast<double>(block)), rng));
  params.add(image_params::kCls, random_normal(1, d_model, 0.02, rng));
}

namespace {

// Zero-padded copy of the features, n_tokens·block long.
std::vector<double> padded(std::span<const double> features, std::size_t n_tokens, std::size_t block) {
  std::vector<double> v(n_tokens * block, 0.0);
  std::copy(features.begin(), features.end(), v.begin());
  return v;
}

void check_projection(const Matrix& proj, std::size_t rows, std::size_t d_model) {
  if (proj.rows() != rows || proj.cols() != d_model) {
    throw ShapeError(fmt::format("tokenize_image: projection is {}, expected {}x{}", proj.shape_string(), rows,
                                 d_model));
  }
}

}  // namespace

TokenSequence tokenize_image(std::span<const double> features, const ParamStore& params,
                             std::size_t n_tokens, std::size_t d_model) {
  const Matrix& proj = params.value(image_params::kProjection);
  const std::size_t block = image_block_size(features.size(), n_tokens);
  check_projection(proj, n_tokens * block, d_model);
  const auto x = padded(features, n_tokens, block);
  Matrix content(n_tokens, d_model, 0.0);
  for (std::size_t t = 0; t < n_tokens; ++t) {
    auto out = content.row(t);
    for (std::size_t b = 0; b < block; ++b) {
      const double v = x[t * block + b];
      auto w = proj.row(t * block + b);
      for (std::size_t j = 0; j < d_model; ++j) out[j] += v * w[j];
    }
  }
  return {prepend_cls(content, params.value(image_params::kCls)), Modality::kImage};
}

std::vector<double> tokenize_image_backward(std::span<const double> features, ParamStore& params,
                                            std::size_t n_tokens, const Matrix& d_tokens) {
  const Matrix& proj = params.value(image_params::kProjection);
  const std::size_t block = image_block_size(features.size(), n_tokens);
  check_projection(proj, n_tokens * block, d_tokens.cols());
  const auto g = prepend_cls_backward(d_tokens);
  params.grad(image_params::kCls) += g.d_cls;
  Matrix& d_proj = params.grad(image_params::kProjection);
  const auto x = padded(features, n_tokens, block);
  std::vector<double> d_x(n_tokens * block, 0.0);
  for (std::size_t t = 0; t < n_tokens; ++t) {
    auto dc = g.d_content.row(t);
    for (std::size_t b = 0; b < block; ++b) {
      const std::size_t r = t * block + b;
      auto w = proj.row(r);
      auto dw = d_proj.row(r);
      double acc = 0.0;
      for (std::size_t j = 0; j < dc.size(); ++j) {
        dw[j] += x[r] * dc[j];
        acc += w[j] * dc[j];
      }
      d_x[r] = acc;
    }
  }
  d_x.resize(features.size());
  return d_x;
}

}  // namespace mmsev
