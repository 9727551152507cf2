#include "fuserank/core_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "fuserank/error.hpp"

namespace fuserank {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

constexpr std::array<std::string_view, 7> kLanguageLabels = {
    "Arabic", "English", "Korean", "Russian", "Chinese", "Spanish", kUnknownLabel};
constexpr std::array<std::string_view, 7> kQueryTypeLabels = {
    "Base", "Text", "Speech", "OCR", "MultiVENT-Base", "MultiVENT-Specific",
    kUnknownLabel};
constexpr std::array<std::string_view, 5> kVideoTypeLabels = {
    "Professional", "Edited", "Diet-Raw", "Raw", kUnknownLabel};
constexpr std::array<std::string_view, 9> kEventTypeLabels = {
    "Disaster", "Political", "Election", "Protest", "Sports",
    "Social",   "Science",   "OtherEvent", kUnknownLabel};

}  // namespace

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Text: return "text";
    case Modality::Video: return "video";
    case Modality::Audio: return "audio";
  }
  return "?";
}

Modality parse_modality(std::string_view s) {
  const std::string l = lower(trim(s));
  if (l == "text") return Modality::Text;
  if (l == "video") return Modality::Video;
  if (l == "audio") return Modality::Audio;
  throw DataError("unknown modality '" + std::string(s) + "'");
}

ModalityMask ModalityMask::only(Modality m) {
  ModalityMask mask;
  switch (m) {
    case Modality::Text: mask.text = true; break;
    case Modality::Video: mask.video = true; break;
    case Modality::Audio: mask.audio = true; break;
  }
  return mask;
}

bool ModalityMask::enabled(Modality m) const {
  switch (m) {
    case Modality::Text: return text;
    case Modality::Video: return video;
    case Modality::Audio: return audio;
  }
  return false;
}

std::size_t ModalityMask::count() const {
  return static_cast<std::size_t>(text) + static_cast<std::size_t>(audio) +
         static_cast<std::size_t>(video);
}

std::vector<Modality> ModalityMask::modalities() const {
  std::vector<Modality> out;
  for (Modality m : kAllModalities)
    if (enabled(m)) out.push_back(m);
  return out;
}

std::uint8_t ModalityMask::bits() const {
  std::uint8_t b = 0;
  for (Modality m : kAllModalities)
    if (enabled(m)) b |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(m));
  return b;
}

ModalityMask ModalityMask::from_bits(std::uint8_t bits) {
  ModalityMask mask;
  mask.text = (bits & 1u) != 0;
  mask.video = (bits & 2u) != 0;
  mask.audio = (bits & 4u) != 0;
  return mask;
}

ModalityMask parse_mask(std::string_view s) {
  ModalityMask mask;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t comma = s.find(',', start);
    if (comma == std::string_view::npos) comma = s.size();
    const std::string_view item = trim(s.substr(start, comma - start));
    if (!item.empty()) {
      const std::string l = lower(item);
      if (l == "all") {
        mask = ModalityMask::all();
      } else {
        switch (parse_modality(item)) {
          case Modality::Text: mask.text = true; break;
          case Modality::Video: mask.video = true; break;
          case Modality::Audio: mask.audio = true; break;
        }
      }
    }
    start = comma + 1;
  }
  if (mask.empty()) throw DataError("modality mask must enable at least one modality");
  return mask;
}

std::string to_string(const ModalityMask& mask) {
  std::string out;
  for (Modality m : mask.modalities()) {
    if (!out.empty()) out += ',';
    out += to_string(m);
  }
  return out;
}

std::string_view to_string(VideoType t) {
  switch (t) {
    case VideoType::Professional: return kVideoTypeLabels[0];
    case VideoType::Edited: return kVideoTypeLabels[1];
    case VideoType::DietRaw: return kVideoTypeLabels[2];
    case VideoType::Raw: return kVideoTypeLabels[3];
    case VideoType::Unknown: return kUnknownLabel;
  }
  return kUnknownLabel;
}

VideoType parse_video_type(std::string_view s) {
  std::string l = lower(trim(s));
  l.erase(std::remove(l.begin(), l.end(), '-'), l.end());
  l.erase(std::remove(l.begin(), l.end(), '_'), l.end());
  if (l == "professional") return VideoType::Professional;
  if (l == "edited") return VideoType::Edited;
  if (l == "dietraw") return VideoType::DietRaw;
  if (l == "raw") return VideoType::Raw;
  return VideoType::Unknown;
}

std::string_view to_string(CategoryDimension d) {
  switch (d) {
    case CategoryDimension::Language: return "Language";
    case CategoryDimension::QueryType: return "Query Type";
    case CategoryDimension::VideoType: return "Video Type";
    case CategoryDimension::EventType: return "Event Type";
  }
  return "?";
}

std::span<const std::string_view> declared_labels(CategoryDimension d) {
  switch (d) {
    case CategoryDimension::Language: return kLanguageLabels;
    case CategoryDimension::QueryType: return kQueryTypeLabels;
    case CategoryDimension::VideoType: return kVideoTypeLabels;
    case CategoryDimension::EventType: return kEventTypeLabels;
  }
  return {};
}

std::string canonical_label(CategoryDimension d, std::string_view label) {
  if (d == CategoryDimension::VideoType)
    return std::string(to_string(parse_video_type(label)));
  const std::string l = lower(trim(label));
  for (std::string_view declared : declared_labels(d))
    if (lower(declared) == l) return std::string(declared);
  return std::string(kUnknownLabel);
}

bool is_valid_id(std::string_view id) {
  if (id.empty()) return false;
  return std::none_of(id.begin(), id.end(), [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
  });
}

std::string assemble_document_text(const DocumentMeta& meta) {
  std::string out;
  for (const std::string* field :
       {&meta.title, &meta.caption, &meta.description, &meta.whisper_text}) {
    const std::string_view t = trim(*field);
    if (t.empty()) continue;
    if (!out.empty()) out += '\n';
    out += t;
  }
  return out;
}

// ---------------------------------------------------------------------------

EmbeddingMatrix::EmbeddingMatrix(std::optional<Modality> modality, std::size_t dim,
                                 std::vector<std::string> ids,
                                 std::vector<double> values)
    : modality_(modality), dim_(dim), ids_(std::move(ids)), values_(std::move(values)) {
  if (dim_ == 0) throw DataError("embedding dimension must be positive");
  if (values_.size() != ids_.size() * dim_)
    throw DataError("embedding payload size does not match rows x dim");
  index_.reserve(ids_.size());
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    if (!is_valid_id(ids_[i])) throw DataError("invalid embedding id '" + ids_[i] + "'");
    if (!index_.emplace(ids_[i], i).second)
      throw DataError("duplicate embedding id '" + ids_[i] + "'");
  }
}

EmbeddingMatrix EmbeddingMatrix::from_unit_rows(std::optional<Modality> modality,
                                                std::size_t dim,
                                                std::vector<std::string> ids,
                                                std::vector<double> values) {
  EmbeddingMatrix m(modality, dim, std::move(ids), std::move(values));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double sq = 0.0;
    for (double x : m.row(i)) sq += x * x;
    if (std::abs(std::sqrt(sq) - 1.0) > kNormTolerance)
      throw DataError("row " + std::to_string(i) + " is not unit-norm");
  }
  return m;
}

std::optional<std::size_t> EmbeddingMatrix::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const double> EmbeddingMatrix::at(std::string_view id) const {
  auto row_index = find(id);
  if (!row_index) throw NoEmbedding(std::string(id));
  return row(*row_index);
}

EmbeddingMatrix normalize_rows(const RawMatrix& m) {
  if (m.values.size() != m.ids.size() * m.dim)
    throw DataError("embedding payload size does not match rows x dim");
  std::vector<double> values = m.values;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double* row = values.data() + i * m.dim;
    double sq = 0.0;
    for (std::size_t j = 0; j < m.dim; ++j) sq += row[j] * row[j];
    const double norm = std::sqrt(sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw ZeroVector(i);
    for (std::size_t j = 0; j < m.dim; ++j) row[j] /= norm;
  }
  return EmbeddingMatrix(m.modality, m.dim, m.ids, std::move(values));
}

// ---------------------------------------------------------------------------

void Qrels::set(const std::string& query_id, const std::string& doc_id, int grade) {
  if (grade < 0)
    throw DataError("negative relevance grade for (" + query_id + ", " + doc_id + ")");
  data_[query_id][doc_id] = grade;
}

int Qrels::grade(std::string_view query_id, std::string_view doc_id) const {
  const Judgments* j = find(query_id);
  if (j == nullptr) return 0;
  auto it = j->find(std::string(doc_id));
  return it == j->end() ? 0 : it->second;
}

const Qrels::Judgments* Qrels::find(std::string_view query_id) const {
  auto it = data_.find(query_id);
  return it == data_.end() ? nullptr : &it->second;
}

std::vector<std::string> Qrels::positives(std::string_view query_id) const {
  std::vector<std::string> out;
  if (const Judgments* j = find(query_id))
    for (const auto& [doc, g] : *j)
      if (g > 0) out.push_back(doc);
  return out;
}

std::size_t Qrels::relevant_count(std::string_view query_id) const {
  std::size_t n = 0;
  if (const Judgments* j = find(query_id))
    for (const auto& [doc, g] : *j)
      if (g > 0) ++n;
  return n;
}

std::map<std::string, std::vector<RankedDoc>> group_run(const RunFile& run) {
  std::map<std::string, std::vector<const RunEntry*>> groups;
  for (const RunEntry& e : run.entries) groups[e.query_id].push_back(&e);

  std::map<std::string, std::vector<RankedDoc>> out;
  for (auto& [qid, entries] : groups) {
    std::sort(entries.begin(), entries.end(),
              [](const RunEntry* a, const RunEntry* b) { return a->rank < b->rank; });
    std::set<std::string_view> seen;
    std::vector<RankedDoc> ranked;
    ranked.reserve(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const RunEntry& e = *entries[i];
      if (e.rank != static_cast<int>(i) + 1)
        throw MalformedRun("query '" + qid + "': ranks are not contiguous from 1");
      if (!seen.insert(e.doc_id).second)
        throw MalformedRun("query '" + qid + "': duplicate document '" + e.doc_id + "'");
      if (i > 0 && e.score > entries[i - 1]->score)
        throw MalformedRun("query '" + qid + "': score increases at rank " +
                           std::to_string(e.rank));
      ranked.push_back({e.doc_id, e.score});
    }
    out.emplace(qid, std::move(ranked));
  }
  return out;
}

}  // namespace fuserank
