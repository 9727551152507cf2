#include "fuserank/formats.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fuserank/error.hpp"

namespace fuserank {

namespace {

using ojson = nlohmann::ordered_json;

// Splits on '\n', dropping a trailing '\r'. The callback sees 1-based numbers.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(++line_no, line);
    start = end + 1;
  }
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

bool is_blank(std::string_view line) {
  return line.find_first_not_of(" \t") == std::string_view::npos;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

std::string string_field(const ojson& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw DataError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t get_u64(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Metadata

std::string serialize_documents(const std::vector<DocumentMeta>& docs) {
  std::string out;
  for (const DocumentMeta& d : docs) {
    ojson j;
    j["doc_id"] = d.doc_id;
    j["title"] = d.title;
    j["caption"] = d.caption;
    j["description"] = d.description;
    j["whisper_text"] = d.whisper_text;
    j["video_type"] = std::string(to_string(d.video_type));
    j["event_type"] = d.event_type;
    j["language"] = d.language;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<DocumentMeta> parse_documents(std::string_view text, const std::string& source) {
  std::vector<DocumentMeta> docs;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (is_blank(line)) return;
    try {
      const ojson j = ojson::parse(line);
      if (!j.is_object()) throw DataError("expected a JSON object");
      DocumentMeta d;
      d.doc_id = string_field(j, "doc_id");
      if (!is_valid_id(d.doc_id)) throw DataError("invalid doc_id '" + d.doc_id + "'");
      d.title = string_field(j, "title");
      d.caption = string_field(j, "caption");
      d.description = string_field(j, "description");
      d.whisper_text = string_field(j, "whisper_text");
      d.video_type = parse_video_type(string_field(j, "video_type"));
      d.event_type = canonical_label(CategoryDimension::EventType, string_field(j, "event_type"));
      d.language = canonical_label(CategoryDimension::Language, string_field(j, "language"));
      docs.push_back(std::move(d));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const DataError& e) {
      throw ParseError(source, line_no, e.what());
    }
  });
  return docs;
}

std::string serialize_queries(const std::vector<QueryMeta>& queries) {
  std::string out;
  for (const QueryMeta& q : queries) {
    ojson j;
    j["query_id"] = q.query_id;
    j["text"] = q.text;
    j["query_type"] = q.query_type;
    j["language"] = q.language;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<QueryMeta> parse_queries(std::string_view text, const std::string& source) {
  std::vector<QueryMeta> queries;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (is_blank(line)) return;
    try {
      const ojson j = ojson::parse(line);
      if (!j.is_object()) throw DataError("expected a JSON object");
      QueryMeta q;
      q.query_id = string_field(j, "query_id");
      if (!is_valid_id(q.query_id)) throw DataError("invalid query_id '" + q.query_id + "'");
      q.text = string_field(j, "text");
      if (q.text.empty()) throw DataError("query '" + q.query_id + "' has empty text");
      q.query_type = canonical_label(CategoryDimension::QueryType, string_field(j, "query_type"));
      q.language = canonical_label(CategoryDimension::Language, string_field(j, "language"));
      queries.push_back(std::move(q));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const DataError& e) {
      throw ParseError(source, line_no, e.what());
    }
  });
  return queries;
}

// ---------------------------------------------------------------------------
// Embeddings

std::string serialize_embedding_payload(const RawMatrix& m) {
  if (m.values.size() != m.rows() * m.dim)
    throw DataError("embedding payload size does not match rows x dim");
  std::string out;
  out.reserve(kEmbeddingMagic.size() + 13 + m.values.size() * 8);
  out += kEmbeddingMagic;
  out.push_back(static_cast<char>(m.modality));
  put_u32(out, static_cast<std::uint32_t>(m.dim));
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  for (double v : m.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

std::string serialize_embedding_ids(const RawMatrix& m) {
  std::string out;
  for (const std::string& id : m.ids) {
    out += id;
    out += '\n';
  }
  return out;
}

RawMatrix parse_embedding(std::string_view payload, std::string_view ids,
                          const std::string& source) {
  constexpr std::size_t kHeader = 5 + 1 + 4 + 8;
  if (payload.size() < kHeader || payload.substr(0, 5) != kEmbeddingMagic)
    throw ParseError(source + ": missing FUSE1 header");
  const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
  RawMatrix m;
  const unsigned modality = p[5];
  if (modality > 2) throw ParseError(source + ": unknown modality byte " + std::to_string(modality));
  m.modality = static_cast<Modality>(modality);
  m.dim = static_cast<std::size_t>(get_u64(p + 6, 4));
  const std::uint64_t count = get_u64(p + 10, 8);
  if (m.dim == 0) throw ParseError(source + ": zero dimension");
  if ((payload.size() - kHeader) / 8 / m.dim < count ||
      payload.size() - kHeader != count * m.dim * 8)
    throw ParseError(source + ": payload length does not match header");

  m.values.resize(static_cast<std::size_t>(count) * m.dim);
  for (std::size_t i = 0; i < m.values.size(); ++i)
    m.values[i] = std::bit_cast<double>(get_u64(p + kHeader + 8 * i, 8));

  std::set<std::string_view> seen;
  for_each_line(ids, [&](std::size_t line_no, std::string_view line) {
    if (!is_valid_id(line)) throw ParseError(source + ".ids", line_no, "invalid id");
    if (!seen.insert(line).second)
      throw ParseError(source + ".ids", line_no, "duplicate id '" + std::string(line) + "'");
    m.ids.emplace_back(line);
  });
  if (m.ids.size() != count)
    throw ParseError(source + ": id list has " + std::to_string(m.ids.size()) +
                     " entries, header says " + std::to_string(count));
  return m;
}

std::filesystem::path sidecar_path(const std::filesystem::path& binary) {
  return std::filesystem::path(binary.string() + ".ids");
}

void write_embedding(const std::filesystem::path& binary, const RawMatrix& m) {
  write_file(binary, serialize_embedding_payload(m));
  write_file(sidecar_path(binary), serialize_embedding_ids(m));
}

RawMatrix read_embedding_raw(const std::filesystem::path& binary) {
  return parse_embedding(read_file(binary), read_file(sidecar_path(binary)), binary.string());
}

EmbeddingMatrix load_embedding(const std::filesystem::path& binary) {
  return normalize_rows(read_embedding_raw(binary));
}

RawMatrix to_raw(const EmbeddingMatrix& m) {
  RawMatrix raw;
  raw.modality = m.modality().value_or(Modality::Text);
  raw.dim = m.dim();
  raw.ids = m.ids();
  raw.values.assign(m.values().begin(), m.values().end());
  return raw;
}

// ---------------------------------------------------------------------------
// Qrels

std::string serialize_qrels(const Qrels& qrels) {
  std::string out;
  for (const auto& [qid, judgments] : qrels.data())
    for (const auto& [doc, grade] : judgments) {
      out += qid;
      out += " 0 ";
      out += doc;
      out += ' ';
      out += std::to_string(grade);
      out += '\n';
    }
  return out;
}

Qrels parse_qrels(std::string_view text, const std::string& source) {
  Qrels qrels;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (is_blank(line)) return;
    const auto f = split_ws(line);
    if (f.size() != 4) throw ParseError(source, line_no, "expected 'query_id 0 doc_id grade'");
    int grade = 0;
    if (!parse_number(f[3], grade)) throw ParseError(source, line_no, "bad grade");
    if (grade < 0) throw ParseError(source, line_no, "negative grade");
    qrels.set(std::string(f[0]), std::string(f[2]), grade);
  });
  return qrels;
}

// ---------------------------------------------------------------------------
// Run files

std::string serialize_run(const RunFile& run) {
  std::string out;
  char score[64];
  for (const RunEntry& e : run.entries) {
    std::snprintf(score, sizeof(score), "%.6f", e.score);
    out += e.query_id;
    out += " Q0 ";
    out += e.doc_id;
    out += ' ';
    out += std::to_string(e.rank);
    out += ' ';
    out += score;
    out += ' ';
    out += e.tag;
    out += '\n';
  }
  return out;
}

RunFile parse_run(std::string_view text, const std::string& source) {
  RunFile run;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    if (is_blank(line)) return;
    const auto f = split_ws(line);
    if (f.size() != 6) throw ParseError(source, line_no, "expected 'query_id Q0 doc_id rank score tag'");
    RunEntry e;
    e.query_id = f[0];
    e.doc_id = f[2];
    if (!parse_number(f[3], e.rank) || e.rank < 1) throw ParseError(source, line_no, "bad rank");
    if (!parse_number(f[4], e.score)) throw ParseError(source, line_no, "bad score");
    e.tag = f[5];
    run.entries.push_back(std::move(e));
  });
  return run;
}

}  // namespace fuserank
