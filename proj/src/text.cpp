#include "mmsev/text.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <sstream>

#include "mmsev/csv.hpp"
#include "mmsev/errors.hpp"

namespace mmsev {

void PatientRecord::validate() const {
  auto fail = [&](std::string_view field, double v) {
    throw InputError(fmt::format("patient '{}': {} = {} is out of range", id, field, v));
  };
  if (!(age > 0.0)) fail("age", age);
  if (!(neck_cm > 20.0 && neck_cm < 60.0)) fail("neck_cm", neck_cm);
  if (!(bmi > 10.0 && bmi < 60.0)) fail("bmi", bmi);
  if (!(whr > 0.5 && whr < 1.5)) fail("whr", whr);
  if (ahi && !(*ahi >= 0.0)) fail("ahi", *ahi);
}

std::optional<Severity> PatientRecord::label() const {
  if (severity) return severity;
  if (ahi) return label_from_ahi(*ahi);
  return std::nullopt;
}

std::string_view bmi_category(double bmi) {
  if (bmi < 18.5) return "underweight";
  if (bmi < 25.0) return "normal weight";
  if (bmi < 30.0) return "overweight";
  return "obesity";
}

namespace {

// One decimal, dropped when the rounded value is whole.
std::string compact_number(double v) {
  const double r = std::round(v * 10.0) / 10.0;
  if (r == std::round(r)) return fmt::format("{:.0f}", r);
  return fmt::format("{:.1f}", r);
}

std::string comorbidity_clause(const PatientRecord& rec) {
  std::vector<std::string_view> present;
  if (rec.hypertension) present.push_back("hypertension");
  if (rec.diabetes) present.push_back("diabetes");
  if (rec.heart_disease) present.push_back("heart disease");
  if (rec.hyperlipidemia) present.push_back("hyperlipidemia");
  if (present.empty()) return "not history of hypertension, diabetes, heart disease, and hyperlipidemia";
  if (present.size() == 1) return fmt::format("history of {}", present[0]);
  if (present.size() == 2) return fmt::format("history of {} and {}", present[0], present[1]);
  std::string out = "history of ";
  for (std::size_t i = 0; i + 1 < present.size(); ++i) out += fmt::format("{}, ", present[i]);
  out += fmt::format("and {}", present.back());
  return out;
}

}  // namespace

std::string templatize(const PatientRecord& rec) {
  const bool male = rec.gender == Gender::kMale;
  return fmt::format(
      "This {}-year-old {} has a neck circumference of {}cm, a waist to hip ratio of {:.1f}, a body "
      "mass index of {}, indicating that {} is {}, and {}.",
      compact_number(rec.age), male ? "male" : "female", compact_number(rec.neck_cm), rec.whr,
      compact_number(rec.bmi), male ? "he" : "she", bmi_category(rec.bmi), comorbidity_clause(rec));
}

namespace {

const std::vector<std::string> kPatientHeader = {"id",  "gender", "age", "neck_cm", "bmi", "whr",
                                                 "htn", "dm",     "hd",  "hld",     "ahi", "severity"};

bool parse_flag(const std::string& f, const std::filesystem::path& path, std::size_t line) {
  if (f == "1" || f == "true" || f == "yes") return true;
  if (f == "0" || f == "false" || f == "no") return false;
  throw ParseError(fmt::format("{}:{}: expected a 0/1 flag, got '{}'", path.string(), line, f));
}

Gender parse_gender(std::string f, const std::filesystem::path& path, std::size_t line) {
  std::transform(f.begin(), f.end(), f.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (f == "male" || f == "m") return Gender::kMale;
  if (f == "female" || f == "f") return Gender::kFemale;
  throw ParseError(fmt::format("{}:{}: unknown gender '{}'", path.string(), line, f));
}

}  // namespace

std::vector<PatientRecord> load_patients(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(fmt::format("{}: empty patient file", path.string()));
  if (csv::split(line) != kPatientHeader)
    throw FormatError(fmt::format("{}:1: expected header '{}'", path.string(), fmt::join(kPatientHeader, ",")));
  std::vector<PatientRecord> out;
  std::set<std::string> ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != kPatientHeader.size())
      throw FormatError(fmt::format("{}:{}: expected {} fields, got {}", path.string(), line_no,
                                    kPatientHeader.size(), f.size()));
    PatientRecord r;
    r.id = f[0];
    if (r.id.empty()) throw FormatError(fmt::format("{}:{}: empty id", path.string(), line_no));
    if (!ids.insert(r.id).second)
      throw FormatError(fmt::format("{}:{}: duplicate id '{}'", path.string(), line_no, r.id));
    r.gender = parse_gender(f[1], path, line_no);
    r.age = csv::parse_double(f[2], path, line_no);
    r.neck_cm = csv::parse_double(f[3], path, line_no);
    r.bmi = csv::parse_double(f[4], path, line_no);
    r.whr = csv::parse_double(f[5], path, line_no);
    r.hypertension = parse_flag(f[6], path, line_no);
    r.diabetes = parse_flag(f[7], path, line_no);
    r.heart_disease = parse_flag(f[8], path, line_no);
    r.hyperlipidemia = parse_flag(f[9], path, line_no);
    if (!f[10].empty()) r.ahi = csv::parse_double(f[10], path, line_no);
    if (!f[11].empty()) {
      r.severity = parse_severity(f[11]);
      if (!r.severity)
        throw ParseError(fmt::format("{}:{}: unknown severity '{}'", path.string(), line_no, f[11]));
    }
    try {
      r.validate();
    } catch (const InputError& e) {
      throw FormatError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
    out.push_back(std::move(r));
  }
  return out;
}

void save_patients(const std::filesystem::path& path, std::span<const PatientRecord> records) {
  auto out = csv::open_output(path);
  out << fmt::format("{}\n", fmt::join(kPatientHeader, ","));
  for (const auto& r : records) {
    out << r.id << ',' << (r.gender == Gender::kMale ? "male" : "female") << ','
        << csv::format_exact(r.age) << ',' << csv::format_exact(r.neck_cm) << ','
        << csv::format_exact(r.bmi) << ',' << csv::format_exact(r.whr) << ','
        << int(r.hypertension) << ',' << int(r.diabetes) << ',' << int(r.heart_disease) << ','
        << int(r.hyperlipidemia) << ',' << (r.ahi ? csv::format_exact(*r.ahi) : std::string()) << ','
        << (r.severity ? std::string(to_string(*r.severity)) : std::string()) << '\n';
  }
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  const auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  const auto is_alpha = [](char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; };
  while (i < text.size()) {
    const char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (is_digit(c)) {
      std::size_t j = i;
      while (j < text.size() && is_digit(text[j])) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else if (is_alpha(c)) {
      std::size_t j = i;
      std::string w;
      while (j < text.size() && is_alpha(text[j])) {
        w.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[j]))));
        ++j;
      }
      out.push_back(std::move(w));
      i = j;
    } else {
      out.emplace_back(1, c);
      ++i;
    }
  }
  return out;
}

std::string detokenize(std::span<const std::string> words) { return fmt::format("{}", fmt::join(words, " ")); }

Vocabulary::Vocabulary() : words_{std::string(kUnkToken)} { index_.emplace(words_[0], kUnk); }

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
  std::set<std::string> uniq;
  for (const auto& t : texts)
    for (auto& w : split_words(t)) uniq.insert(std::move(w));
  uniq.erase(std::string(kUnkToken));
  return from_words({uniq.begin(), uniq.end()});
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  Vocabulary v;
  for (auto& w : words) {
    if (w == kUnkToken) continue;
    if (v.index_.emplace(w, static_cast<std::int32_t>(v.words_.size())).second) v.words_.push_back(std::move(w));
  }
  return v;
}

std::int32_t Vocabulary::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size())
    throw LookupError(fmt::format("token id {} outside vocabulary of {}", id, words_.size()));
  return words_[static_cast<std::size_t>(id)];
}

std::vector<std::int32_t> tokenize(std::string_view text, const Vocabulary& vocab) {
  const auto words = split_words(text);
  if (words.empty()) throw InputError("cannot tokenize empty text");
  std::vector<std::int32_t> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(vocab.id(w));
  return ids;
}

void init_text_embedding(ParamStore& params, std::size_t vocab_size, std::size_t max_len,
                         std::size_t d_model, Rng& rng) {
  params.add(text_params::kEmbedding, random_normal(vocab_size, d_model, 0.1, rng));
  params.add(text_params::kPosition, Matrix(max_len, d_model, 0.0));
  params.add(text_params::kCls, random_normal(1, d_model, 0.02, rng));
}

TokenSequence tokenize_text(std::span<const std::int32_t> ids, const ParamStore& params,
                            std::size_t d_model) {
  const Matrix& table = params.value(text_params::kEmbedding);
  const Matrix& pos = params.value(text_params::kPosition);
  if (table.cols() != d_model || pos.cols() != d_model)
    throw ShapeError(fmt::format("tokenize_text: embedding width {} does not match d_model {}",
                                 table.cols(), d_model));
  if (ids.size() > pos.rows())
    throw InputError(fmt::format("sentence of {} tokens exceeds the positional table ({})", ids.size(),
                                 pos.rows()));
  Matrix content(ids.size(), d_model);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= table.rows())
      throw LookupError(fmt::format("token id {} outside embedding table of {} rows", id, table.rows()));
    auto row = content.row(i);
    const auto e = table.row(static_cast<std::size_t>(id));
    const auto p = pos.row(i);
    for (std::size_t j = 0; j < d_model; ++j) row[j] = e[j] + p[j];
  }
  return {prepend_cls(content, params.value(text_params::kCls)), Modality::kText};
}

void tokenize_text_backward(std::span<const std::int32_t> ids, ParamStore& params, const Matrix& d_tokens) {
  const auto g = prepend_cls_backward(d_tokens);
  params.grad(text_params::kCls) += g.d_cls;
  Matrix& d_table = params.grad(text_params::kEmbedding);
  Matrix& d_pos = params.grad(text_params::kPosition);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto te = d_table.row(static_cast<std::size_t>(ids[i]));
    auto pe = d_pos.row(i);
    const auto src = g.d_content.row(i);
    for (std::size_t j = 0; j < src.size(); ++j) {
      te[j] += src[j];
      pe[j] += src[j];
    }
  }
}

TokenSequence wrap_imported(const Matrix& content, const ParamStore& params) {
  return {prepend_cls(content, params.value(text_params::kCls)), Modality::kText};
}

void wrap_imported_backward(ParamStore& params, const Matrix& d_tokens) {
  params.grad(text_params::kCls) += prepend_cls_backward(d_tokens).d_cls;
}

const Matrix& EmbeddingTable::at(const std::string& subject_id) const {
  auto it = subjects.find(subject_id);
  if (it == subjects.end())
    throw LookupError(fmt::format("no imported text embedding for subject '{}'", subject_id));
  return it->second;
}

EmbeddingTable import_embeddings(const std::filesystem::path& path) {
  auto in = csv::open_input(path);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++line_no;
      if (!csv::trim(line).empty()) return true;
    }
    return false;
  };
  auto fields = [&]() {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
  };

  if (!next_line()) throw FormatError(fmt::format("{}: empty embedding file", path.string()));
  auto head = fields();
  if (head.size() != 2)
    throw FormatError(fmt::format("{}:{}: expected header 'd_model n_tokens'", path.string(), line_no));
  EmbeddingTable table;
  const auto d = csv::parse_int(head[0], path, line_no);
  const auto n = csv::parse_int(head[1], path, line_no);
  if (d <= 0 || n <= 0)
    throw FormatError(fmt::format("{}:{}: d_model and n_tokens must be positive", path.string(), line_no));
  table.d_model = static_cast<std::size_t>(d);
  table.n_tokens = static_cast<std::size_t>(n);

  while (next_line()) {
    const std::string subject(csv::trim(line));
    if (subject.find_first_of(" \t") != std::string::npos)
      throw FormatError(fmt::format("{}:{}: expected a subject id line, got '{}'", path.string(), line_no, subject));
    Matrix m(table.n_tokens, table.d_model);
    for (std::size_t r = 0; r < table.n_tokens; ++r) {
      if (!next_line())
        throw FormatError(fmt::format("{}: subject '{}' has {} token rows, expected {}", path.string(),
                                      subject, r, table.n_tokens));
      const auto vals = fields();
      if (vals.size() != table.d_model)
        throw FormatError(fmt::format("{}:{}: subject '{}' row has dimension {}, expected {}", path.string(),
                                      line_no, subject, vals.size(), table.d_model));
      for (std::size_t c = 0; c < table.d_model; ++c) m(r, c) = csv::parse_double(vals[c], path, line_no);
    }
    if (!table.subjects.emplace(subject, std::move(m)).second)
      throw FormatError(fmt::format("{}:{}: duplicate subject '{}'", path.string(), line_no, subject));
  }
  return table;
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  auto out = csv::open_output(path);
  out << table.d_model << ' ' << table.n_tokens << '\n';
  for (const auto& [id, m] : table.subjects) {
    out << id << '\n';
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << csv::format_exact(m(r, c));
      out << '\n';
    }
  }
}

}  // namespace mmsev
