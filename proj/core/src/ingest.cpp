#include "fuserank/ingest.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "fuserank/error.hpp"
#include "fuserank/formats.hpp"

namespace fuserank {

namespace fs = std::filesystem;

const EmbeddingMatrix& Collection::docs_for(Modality m) const {
  auto it = doc_embeddings.find(m);
  if (it == doc_embeddings.end())
    throw DataError("collection has no document embeddings for " + std::string(to_string(m)));
  return it->second;
}

const EmbeddingMatrix& Collection::queries_for(Modality m) const {
  auto it = query_embeddings.find(m);
  if (it == query_embeddings.end())
    throw DataError("collection has no query embeddings for " + std::string(to_string(m)));
  return it->second;
}

const DocumentMeta* Collection::find_doc(std::string_view doc_id) const {
  auto it = std::find_if(docs.begin(), docs.end(),
                         [&](const DocumentMeta& d) { return d.doc_id == doc_id; });
  return it == docs.end() ? nullptr : &*it;
}

const QueryMeta* Collection::find_query(std::string_view query_id) const {
  auto it = std::find_if(queries.begin(), queries.end(),
                         [&](const QueryMeta& q) { return q.query_id == query_id; });
  return it == queries.end() ? nullptr : &*it;
}

fs::path layout::doc_embeddings(const fs::path& dir, Modality m) {
  return dir / ("docs." + std::string(to_string(m)) + ".bin");
}

fs::path layout::query_embeddings(const fs::path& dir, Modality m) {
  return dir / ("queries." + std::string(to_string(m)) + ".bin");
}

void save_collection(const fs::path& dir, const Collection& c) {
  fs::create_directories(dir);
  write_file(dir / layout::kDocs, serialize_documents(c.docs));
  write_file(dir / layout::kQueries, serialize_queries(c.queries));
  write_file(dir / layout::kQrels, serialize_qrels(c.qrels));
  for (const auto& [m, matrix] : c.doc_embeddings)
    write_embedding(layout::doc_embeddings(dir, m), to_raw(matrix));
  for (const auto& [m, matrix] : c.query_embeddings)
    write_embedding(layout::query_embeddings(dir, m), to_raw(matrix));
}

Collection load_collection(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("'" + dir.string() + "' is not a directory");
  Collection c;
  if (fs::exists(dir / layout::kDocs))
    c.docs = parse_documents(read_file(dir / layout::kDocs), (dir / layout::kDocs).string());
  if (fs::exists(dir / layout::kQueries))
    c.queries = parse_queries(read_file(dir / layout::kQueries), (dir / layout::kQueries).string());
  if (fs::exists(dir / layout::kQrels))
    c.qrels = parse_qrels(read_file(dir / layout::kQrels), (dir / layout::kQrels).string());
  for (Modality m : kAllModalities) {
    if (fs::exists(layout::doc_embeddings(dir, m)))
      c.doc_embeddings.emplace(m, load_embedding(layout::doc_embeddings(dir, m)));
    if (fs::exists(layout::query_embeddings(dir, m)))
      c.query_embeddings.emplace(m, load_embedding(layout::query_embeddings(dir, m)));
  }
  return c;
}

// ---------------------------------------------------------------------------

FramePlan plan_frame_samples(std::size_t total_frames, std::size_t sample_count) {
  if (total_frames == 0) throw InvalidCount("total_frames must be positive");
  if (sample_count == 0) throw InvalidCount("sample_count must be positive");
  FramePlan plan{total_frames, sample_count, {}};
  plan.indices.reserve(sample_count);
  if (sample_count == 1) {
    plan.indices.push_back((total_frames - 1) / 2);
    return plan;
  }
  // round(i * span / steps) with halves rounded up, in exact integer math.
  const std::size_t span = total_frames - 1;
  const std::size_t steps = sample_count - 1;
  for (std::size_t i = 0; i < sample_count; ++i)
    plan.indices.push_back((2 * i * span + steps) / (2 * steps));
  return plan;
}

std::string serialize_frame_manifest(
    const std::vector<std::pair<std::string, FramePlan>>& plans) {
  std::string out;
  for (const auto& [doc_id, plan] : plans) {
    nlohmann::ordered_json j;
    j["doc_id"] = doc_id;
    j["total_frames"] = plan.total_frames;
    j["indices"] = plan.indices;
    out += j.dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

std::string_view to_string(FindingKind k) {
  switch (k) {
    case FindingKind::DuplicateId: return "DuplicateId";
    case FindingKind::MissingEmbedding: return "MissingEmbedding";
    case FindingKind::OrphanEmbedding: return "OrphanEmbedding";
    case FindingKind::DanglingQrel: return "DanglingQrel";
    case FindingKind::DimMismatch: return "DimMismatch";
  }
  return "?";
}

std::size_t ValidationReport::count(FindingKind k) const {
  return static_cast<std::size_t>(std::count_if(
      findings.begin(), findings.end(), [&](const Finding& f) { return f.kind == k; }));
}

bool ValidationReport::contains(FindingKind k, std::string_view id) const {
  return std::any_of(findings.begin(), findings.end(),
                     [&](const Finding& f) { return f.kind == k && f.id == id; });
}

std::string ValidationReport::to_json() const {
  nlohmann::ordered_json j;
  j["accepted"] = accepted();
  j["findings"] = nlohmann::ordered_json::array();
  for (const Finding& f : findings)
    j["findings"].push_back({{"kind", std::string(to_string(f.kind))},
                             {"id", f.id},
                             {"detail", f.detail}});
  return j.dump(2) + "\n";
}

ValidationReport validate_collection(const Collection& c, const ModalityMask& mask) {
  ValidationReport report;
  auto add = [&](FindingKind kind, std::string id, std::string detail) {
    report.findings.push_back({kind, std::move(id), std::move(detail)});
  };

  std::unordered_set<std::string> doc_ids;
  for (const DocumentMeta& d : c.docs)
    if (!doc_ids.insert(d.doc_id).second) add(FindingKind::DuplicateId, d.doc_id, "document");
  std::unordered_set<std::string> query_ids;
  for (const QueryMeta& q : c.queries)
    if (!query_ids.insert(q.query_id).second) add(FindingKind::DuplicateId, q.query_id, "query");

  for (const auto& [qid, judgments] : c.qrels.data()) {
    if (!query_ids.contains(qid)) add(FindingKind::DanglingQrel, qid, "unknown query");
    for (const auto& [doc, grade] : judgments)
      if (!doc_ids.contains(doc)) add(FindingKind::DanglingQrel, doc, "unknown document for " + qid);
  }

  std::optional<std::size_t> dim;
  auto check_dim = [&](const EmbeddingMatrix& m, const std::string& what) {
    if (!dim) dim = m.dim();
    else if (*dim != m.dim())
      add(FindingKind::DimMismatch, what,
          "dim " + std::to_string(m.dim()) + " != " + std::to_string(*dim));
  };

  for (Modality m : mask.modalities()) {
    const std::string name(to_string(m));
    auto check_side = [&](const std::map<Modality, EmbeddingMatrix>& side,
                          const std::unordered_set<std::string>& ids,
                          const std::vector<std::string>& ordered_ids, const char* label) {
      auto it = side.find(m);
      if (it == side.end()) {
        for (const std::string& id : ordered_ids)
          add(FindingKind::MissingEmbedding, id, std::string(label) + " " + name);
        return;
      }
      check_dim(it->second, std::string(label) + "." + name);
      for (const std::string& id : ordered_ids)
        if (!it->second.find(id)) add(FindingKind::MissingEmbedding, id, std::string(label) + " " + name);
      for (const std::string& id : it->second.ids())
        if (!ids.contains(id)) add(FindingKind::OrphanEmbedding, id, std::string(label) + " " + name);
    };
    std::vector<std::string> doc_order;
    for (const DocumentMeta& d : c.docs) doc_order.push_back(d.doc_id);
    std::vector<std::string> query_order;
    for (const QueryMeta& q : c.queries) query_order.push_back(q.query_id);
    check_side(c.doc_embeddings, doc_ids, doc_order, "docs");
    check_side(c.query_embeddings, query_ids, query_order, "queries");
  }
  return report;
}

std::map<std::string, std::map<CategoryDimension, std::string>> query_categories(
    const Collection& c) {
  std::map<std::string, const DocumentMeta*> docs;
  for (const DocumentMeta& d : c.docs) docs.emplace(d.doc_id, &d);

  std::map<std::string, std::map<CategoryDimension, std::string>> out;
  for (const QueryMeta& q : c.queries) {
    auto& labels = out[q.query_id];
    labels[CategoryDimension::Language] = canonical_label(CategoryDimension::Language, q.language);
    labels[CategoryDimension::QueryType] = canonical_label(CategoryDimension::QueryType, q.query_type);
    labels[CategoryDimension::VideoType] = std::string(kUnknownLabel);
    labels[CategoryDimension::EventType] = std::string(kUnknownLabel);

    const DocumentMeta* best = nullptr;
    int best_grade = 0;
    if (const Qrels::Judgments* j = c.qrels.find(q.query_id))
      for (const auto& [doc_id, grade] : *j) {  // doc_id ascending
        auto it = docs.find(doc_id);
        if (grade > best_grade && it != docs.end()) {
          best = it->second;
          best_grade = grade;
        }
      }
    if (best != nullptr) {
      labels[CategoryDimension::VideoType] = std::string(to_string(best->video_type));
      labels[CategoryDimension::EventType] =
          canonical_label(CategoryDimension::EventType, best->event_type);
    }
  }
  return out;
}

}  // namespace fuserank
