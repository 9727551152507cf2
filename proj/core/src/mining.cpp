#include "fuserank/mining.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "fuserank/error.hpp"
#include "fuserank/parallel.hpp"
#include "fuserank/random.hpp"

namespace fuserank {

void MiningConfig::validate() const {
  if (depth == 0) throw InvalidCount("mining depth must be positive");
  if (negatives_per_query == 0) throw InvalidCount("negatives per query must be positive");
  if (negatives_per_query > depth)
    throw InvalidCount("negatives per query (" + std::to_string(negatives_per_query) +
                       ") exceeds mining depth (" + std::to_string(depth) + ")");
}

std::vector<std::string> mine_hard_negatives(const std::string& query_id,
                                             const EmbeddingMatrix& query_embeddings,
                                             const SearchIndex& index, const Qrels& qrels,
                                             const MiningConfig& cfg) {
  cfg.validate();
  const auto row = query_embeddings.find(query_id);
  if (!row) throw NoEmbedding(query_id);
  if (qrels.relevant_count(query_id) == 0) throw NoPositive(query_id);

  std::vector<std::string> pool;
  for (RankedDoc& d : top_k(query_embeddings.row(*row), index, cfg.depth))
    if (qrels.grade(query_id, d.doc_id) <= 0) pool.push_back(std::move(d.doc_id));
  return pool;
}

MinedPools mine_all(const EmbeddingMatrix& query_embeddings, const SearchIndex& index,
                    const Qrels& qrels, const MiningConfig& cfg, std::size_t threads) {
  cfg.validate();
  MinedPools out;
  std::vector<std::string> queries;
  for (const auto& [qid, judgments] : qrels.data()) {
    if (qrels.relevant_count(qid) == 0) out.skipped_no_positive.push_back(qid);
    else if (!query_embeddings.find(qid)) out.skipped_no_embedding.push_back(qid);
    else queries.push_back(qid);
  }

  std::vector<std::vector<std::string>> pools(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    pools[i] = mine_hard_negatives(queries[i], query_embeddings, index, qrels, cfg);
  });
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (pools[i].empty()) out.empty_pools.push_back(queries[i]);
    out.pools.emplace(queries[i], std::move(pools[i]));
  }
  return out;
}

TripletSet build_triplets(const Qrels& qrels,
                          const std::map<std::string, std::vector<std::string>>& pools,
                          const std::vector<std::string>& corpus_ids, const MiningConfig& cfg) {
  cfg.validate();
  const std::size_t want = cfg.negatives_per_query;
  std::vector<std::string> corpus(corpus_ids);
  std::sort(corpus.begin(), corpus.end());
  corpus.erase(std::unique(corpus.begin(), corpus.end()), corpus.end());

  Rng rng(cfg.seed);
  TripletSet out;
  for (const auto& [qid, pool] : pools) {
    const std::vector<std::string> positives = qrels.positives(qid);
    for (const std::string& positive : positives) {
      TrainingInstance inst{qid, positive, {}};
      std::set<std::string> taken;
      for (const std::string& doc : pool) {
        if (inst.negative_ids.size() == want) break;
        if (qrels.grade(qid, doc) > 0 || !taken.insert(doc).second) continue;
        inst.negative_ids.push_back(doc);
      }
      if (inst.negative_ids.size() < want) {
        std::vector<const std::string*> candidates;
        for (const std::string& doc : corpus)
          if (qrels.grade(qid, doc) <= 0 && !taken.contains(doc)) candidates.push_back(&doc);
        while (inst.negative_ids.size() < want && !candidates.empty()) {
          const std::size_t pick = rng.index(candidates.size());
          inst.negative_ids.push_back(*candidates[pick]);
          candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pick));
          ++out.filled_negatives;
        }
      }
      if (inst.negative_ids.size() < want) {
        ++out.skipped;
        continue;
      }
      out.instances.push_back(std::move(inst));
    }
  }
  return out;
}

std::string serialize_triplets(const std::vector<TrainingInstance>& triplets) {
  std::string out;
  for (const TrainingInstance& t : triplets) {
    nlohmann::ordered_json j;
    j["query_id"] = t.query_id;
    j["positive_id"] = t.positive_id;
    j["negative_ids"] = t.negative_ids;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<TrainingInstance> parse_triplets(std::string_view text, const std::string& source) {
  std::vector<TrainingInstance> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TrainingInstance t;
      t.query_id = j.at("query_id").get<std::string>();
      t.positive_id = j.at("positive_id").get<std::string>();
      t.negative_ids = j.at("negative_ids").get<std::vector<std::string>>();
      if (!is_valid_id(t.query_id) || !is_valid_id(t.positive_id))
        throw ParseError(source, line_no, "invalid id");
      if (t.negative_ids.empty()) throw ParseError(source, line_no, "no negatives");
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return out;
}

}  // namespace fuserank
