#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fuserank {

enum class Modality : std::uint8_t { Text = 0, Video = 1, Audio = 2 };

inline constexpr std::array<Modality, 3> kAllModalities = {
    Modality::Text, Modality::Video, Modality::Audio};

std::string_view to_string(Modality m);
// Accepts "text", "video", "audio" (case-insensitive).
Modality parse_modality(std::string_view s);

// Which modalities take part in training or inference.
struct ModalityMask {
  bool text = false;
  bool audio = false;
  bool video = false;

  static ModalityMask all() { return {true, true, true}; }
  static ModalityMask only(Modality m);

  bool enabled(Modality m) const;
  bool empty() const { return !text && !audio && !video; }
  std::size_t count() const;
  // Enabled modalities in canonical order (text, video, audio).
  std::vector<Modality> modalities() const;
  std::uint8_t bits() const;
  static ModalityMask from_bits(std::uint8_t bits);

  friend bool operator==(const ModalityMask&, const ModalityMask&) = default;
};

// "text,audio,video" style lists. Throws DataError on unknown names or an
// empty result.
ModalityMask parse_mask(std::string_view s);
std::string to_string(const ModalityMask& mask);

// ---------------------------------------------------------------------------
// Category labels
//
// Free-form labels are canonicalised against a declared label set. Anything
// outside the set becomes "Unknown".

inline constexpr std::string_view kUnknownLabel = "Unknown";

enum class VideoType { Professional, Edited, DietRaw, Raw, Unknown };

std::string_view to_string(VideoType t);
VideoType parse_video_type(std::string_view s);

enum class CategoryDimension { Language, QueryType, VideoType, EventType };

inline constexpr std::array<CategoryDimension, 4> kAllDimensions = {
    CategoryDimension::Language, CategoryDimension::QueryType,
    CategoryDimension::VideoType, CategoryDimension::EventType};

std::string_view to_string(CategoryDimension d);
// Declared labels for a dimension, in display order, with "Unknown" last.
std::span<const std::string_view> declared_labels(CategoryDimension d);
std::string canonical_label(CategoryDimension d, std::string_view label);

struct DocumentMeta {
  std::string doc_id;
  std::string title;
  std::string caption;
  std::string description;
  std::string whisper_text;
  VideoType video_type = VideoType::Unknown;
  std::string event_type{kUnknownLabel};
  std::string language{kUnknownLabel};

  friend bool operator==(const DocumentMeta&, const DocumentMeta&) = default;
};

struct QueryMeta {
  std::string query_id;
  std::string text;
  std::string query_type{kUnknownLabel};
  std::string language{kUnknownLabel};

  friend bool operator==(const QueryMeta&, const QueryMeta&) = default;
};

// Non-empty and free of whitespace.
bool is_valid_id(std::string_view id);

// Title, caption, description and ASR transcript joined by single newlines.
// Empty fields are skipped and the result is trimmed.
std::string assemble_document_text(const DocumentMeta& meta);

// ---------------------------------------------------------------------------
// Embeddings

// Row-major matrix exactly as stored on disk, before normalisation.
struct RawMatrix {
  Modality modality = Modality::Text;
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<double> values;  // ids.size() * dim

  std::size_t rows() const { return ids.size(); }
  friend bool operator==(const RawMatrix&, const RawMatrix&) = default;
};

// Dense matrix of unit-norm rows with an id -> row map. Immutable once built.
class EmbeddingMatrix {
 public:
  static constexpr double kNormTolerance = 1e-9;

  EmbeddingMatrix() = default;

  // Takes rows that are already unit-norm (checked against kNormTolerance)
  // and stores them bit-for-bit. Used for fused embeddings.
  static EmbeddingMatrix from_unit_rows(std::optional<Modality> modality,
                                        std::size_t dim,
                                        std::vector<std::string> ids,
                                        std::vector<double> values);

  // Absent for fused matrices that mix modalities.
  std::optional<Modality> modality() const { return modality_; }
  std::size_t dim() const { return dim_; }
  std::size_t rows() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * dim_, dim_};
  }
  std::optional<std::size_t> find(std::string_view id) const;
  std::span<const double> at(std::string_view id) const;  // throws NoEmbedding
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const double> values() const { return values_; }

 private:
  friend EmbeddingMatrix normalize_rows(const RawMatrix& m);
  EmbeddingMatrix(std::optional<Modality> modality, std::size_t dim,
                  std::vector<std::string> ids, std::vector<double> values);

  std::optional<Modality> modality_;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Divides each row by its L2 norm. Throws ZeroVector for an all-zero row and
// DataError for duplicate or invalid ids.
EmbeddingMatrix normalize_rows(const RawMatrix& m);

// ---------------------------------------------------------------------------
// Relevance judgments and runs

class Qrels {
 public:
  using Judgments = std::map<std::string, int>;

  // Throws DataError on a negative grade.
  void set(const std::string& query_id, const std::string& doc_id, int grade);

  int grade(std::string_view query_id, std::string_view doc_id) const;
  const Judgments* find(std::string_view query_id) const;
  const std::map<std::string, Judgments, std::less<>>& data() const { return data_; }

  // Documents with grade > 0, in doc_id order.
  std::vector<std::string> positives(std::string_view query_id) const;
  std::size_t relevant_count(std::string_view query_id) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  friend bool operator==(const Qrels&, const Qrels&) = default;

 private:
  std::map<std::string, Judgments, std::less<>> data_;
};

struct RunEntry {
  std::string query_id;
  std::string doc_id;
  int rank = 0;
  double score = 0.0;
  std::string tag;

  friend bool operator==(const RunEntry&, const RunEntry&) = default;
};

// Ranked results, grouped per query with ranks 1..k in order.
struct RunFile {
  std::vector<RunEntry> entries;

  friend bool operator==(const RunFile&, const RunFile&) = default;
};

struct RankedDoc {
  std::string doc_id;
  double score = 0.0;
};

// Groups entries per query and orders each group by rank. Throws MalformedRun
// if ranks are not 1..k, a (query, doc) pair repeats, or scores increase with
// rank. Input line order is irrelevant.
std::map<std::string, std::vector<RankedDoc>> group_run(const RunFile& run);

}  // namespace fuserank
