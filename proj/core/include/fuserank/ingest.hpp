#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fuserank/core_model.hpp"

namespace fuserank {

// A judged collection: metadata, per-modality embeddings for both sides, and
// relevance judgments.
struct Collection {
  std::vector<DocumentMeta> docs;
  std::vector<QueryMeta> queries;
  std::map<Modality, EmbeddingMatrix> doc_embeddings;
  std::map<Modality, EmbeddingMatrix> query_embeddings;
  Qrels qrels;

  const EmbeddingMatrix& docs_for(Modality m) const;     // throws DataError
  const EmbeddingMatrix& queries_for(Modality m) const;  // throws DataError
  const DocumentMeta* find_doc(std::string_view doc_id) const;
  const QueryMeta* find_query(std::string_view query_id) const;
};

// Directory layout used by ingest/search/mine/train:
//   docs.jsonl  queries.jsonl  qrels.txt
//   docs.<modality>.bin[.ids]  queries.<modality>.bin[.ids]
namespace layout {
inline constexpr const char* kDocs = "docs.jsonl";
inline constexpr const char* kQueries = "queries.jsonl";
inline constexpr const char* kQrels = "qrels.txt";
inline constexpr const char* kFrames = "frames.jsonl";
inline constexpr const char* kValidation = "validation.json";
std::filesystem::path doc_embeddings(const std::filesystem::path& dir, Modality m);
std::filesystem::path query_embeddings(const std::filesystem::path& dir, Modality m);
}  // namespace layout

void save_collection(const std::filesystem::path& dir, const Collection& c);
// Loads every file of the layout that exists; embeddings are normalised.
Collection load_collection(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Frame sampling plan

inline constexpr std::size_t kDefaultFrameSamples = 24;

struct FramePlan {
  std::size_t total_frames = 0;
  std::size_t sample_count = 0;
  std::vector<std::size_t> indices;

  friend bool operator==(const FramePlan&, const FramePlan&) = default;
};

// Evenly spaced indices including both endpoints:
//   indices[i] = round_half_up(i * (total - 1) / (count - 1))
// and the middle frame when count == 1. Short videos repeat indices.
// Throws InvalidCount if either argument is zero.
FramePlan plan_frame_samples(std::size_t total_frames,
                             std::size_t sample_count = kDefaultFrameSamples);

// One JSON object per line: {"doc_id", "total_frames", "indices"}.
std::string serialize_frame_manifest(const std::vector<std::pair<std::string, FramePlan>>& plans);

// ---------------------------------------------------------------------------
// Validation

enum class FindingKind {
  DuplicateId,
  MissingEmbedding,
  OrphanEmbedding,
  DanglingQrel,
  DimMismatch,
};

std::string_view to_string(FindingKind k);

struct Finding {
  FindingKind kind;
  std::string id;
  std::string detail;

  friend bool operator==(const Finding&, const Finding&) = default;
};

struct ValidationReport {
  std::vector<Finding> findings;

  bool accepted() const { return findings.empty(); }
  std::size_t count(FindingKind k) const;
  bool contains(FindingKind k, std::string_view id) const;
  std::string to_json() const;
};

// Read-only consistency pass. Embedding checks cover only the modalities
// enabled in the mask.
ValidationReport validate_collection(const Collection& c, const ModalityMask& mask);

// Per-query category labels used for breakdown tables. Language and query type
// come from the query; video and event type come from the query's top-graded
// relevant document (smallest doc_id on ties), or Unknown.
std::map<std::string, std::map<CategoryDimension, std::string>> query_categories(
    const Collection& c);

}  // namespace fuserank
