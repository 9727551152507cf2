#pragma once

// On-disk formats owned by the core model:
//
//   metadata    one JSON object per line
//   embeddings  "FUSE1" | u8 modality | u32 dim | u64 count | count*dim f64,
//               all little-endian, plus a sidecar list of ids (one per line)
//   qrels       "query_id 0 doc_id grade"
//   run         "query_id Q0 doc_id rank score tag", score with 6 decimals
//
// Every serialize_* produces a canonical byte string; parse_* accepts what
// serialize_* writes and throws ParseError (with a line number) otherwise.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fuserank/core_model.hpp"

namespace fuserank {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

// Metadata JSON lines.
std::string serialize_documents(const std::vector<DocumentMeta>& docs);
std::vector<DocumentMeta> parse_documents(std::string_view text,
                                          const std::string& source = "<docs>");
std::string serialize_queries(const std::vector<QueryMeta>& queries);
std::vector<QueryMeta> parse_queries(std::string_view text,
                                     const std::string& source = "<queries>");

// Embedding binary plus sidecar id list.
inline constexpr std::string_view kEmbeddingMagic = "FUSE1";

std::string serialize_embedding_payload(const RawMatrix& m);
std::string serialize_embedding_ids(const RawMatrix& m);
RawMatrix parse_embedding(std::string_view payload, std::string_view ids,
                          const std::string& source = "<embedding>");

// "<path>.ids" next to the binary.
std::filesystem::path sidecar_path(const std::filesystem::path& binary);
void write_embedding(const std::filesystem::path& binary, const RawMatrix& m);
RawMatrix read_embedding_raw(const std::filesystem::path& binary);
// Reads and normalises rows.
EmbeddingMatrix load_embedding(const std::filesystem::path& binary);
// Unit rows carry no raw form, so this writes them as-is.
RawMatrix to_raw(const EmbeddingMatrix& m);

// TREC qrels.
std::string serialize_qrels(const Qrels& qrels);
Qrels parse_qrels(std::string_view text, const std::string& source = "<qrels>");

// TREC run file.
std::string serialize_run(const RunFile& run);
RunFile parse_run(std::string_view text, const std::string& source = "<run>");

}  // namespace fuserank
