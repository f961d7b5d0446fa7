#pragma once

// Tabular patient records rendered as clinical sentences, word-level
// tokenization, the learned token embedding, and import of externally
// computed sentence embeddings.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mmsev/matrix.hpp"
#include "mmsev/params.hpp"
#include "mmsev/severity.hpp"
#include "mmsev/tokens.hpp"

namespace mmsev {

enum class Gender { kMale, kFemale };

struct PatientRecord {
  std::string id;
  Gender gender = Gender::kMale;
  double age = 0.0;
  double neck_cm = 0.0;
  double bmi = 0.0;
  double whr = 0.0;
  bool hypertension = false;
  bool diabetes = false;
  bool heart_disease = false;
  bool hyperlipidemia = false;
  std::optional<double> ahi;
  std::optional<Severity> severity;

  /// Throws InputError when a field is outside its physiological range.
  void validate() const;
  /// Label from `severity`, else from `ahi`; nullopt when neither is set.
  std::optional<Severity> label() const;
};

/// WHO adult BMI bands.
std::string_view bmi_category(double bmi);

/// Renders the record as a single clinical sentence.
std::string templatize(const PatientRecord& rec);

std::vector<PatientRecord> load_patients(const std::filesystem::path& path);
void save_patients(const std::filesystem::path& path, std::span<const PatientRecord> records);

/// Lowercased words, digit runs and single punctuation marks.
std::vector<std::string> split_words(std::string_view text);
std::string detokenize(std::span<const std::string> words);

class Vocabulary {
 public:
  static constexpr std::int32_t kUnk = 0;
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  static Vocabulary build(std::span<const std::string> texts);
  static Vocabulary from_words(std::vector<std::string> words);

  std::int32_t id(std::string_view word) const;
  const std::string& word(std::int32_t id) const;
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int32_t> index_;
};

/// Throws InputError on empty text.
std::vector<std::int32_t> tokenize(std::string_view text, const Vocabulary& vocab);

namespace text_params {
inline constexpr const char* kEmbedding = "text.embed";  // vocab × d_model
inline constexpr const char* kPosition = "text.pos";     // max_len × d_model
inline constexpr const char* kCls = "text.cls";          // 1 × d_model
}  // namespace text_params

void init_text_embedding(ParamStore& params, std::size_t vocab_size, std::size_t max_len,
                         std::size_t d_model, Rng& rng);

/// Embedding lookup plus positional offsets, classification row prepended.
TokenSequence tokenize_text(std::span<const std::int32_t> ids, const ParamStore& params,
                            std::size_t d_model);
void tokenize_text_backward(std::span<const std::int32_t> ids, ParamStore& params,
                            const Matrix& d_tokens);

/// Classification row for externally supplied content tokens.
TokenSequence wrap_imported(const Matrix& content, const ParamStore& params);
void wrap_imported_backward(ParamStore& params, const Matrix& d_tokens);

/// Per-subject content token matrices (n_tokens × d_model).
struct EmbeddingTable {
  std::size_t d_model = 0;
  std::size_t n_tokens = 0;
  std::map<std::string, Matrix> subjects;

  /// Throws LookupError naming the subject when it is absent.
  const Matrix& at(const std::string& subject_id) const;
};

EmbeddingTable import_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

}  // namespace mmsev
