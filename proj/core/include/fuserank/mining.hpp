#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fuserank/core_model.hpp"
#include "fuserank/search.hpp"

namespace fuserank {

struct MiningConfig {
  std::size_t depth = 50;
  std::size_t negatives_per_query = 3;
  std::uint64_t seed = 0;

  // Throws InvalidCount unless 1 <= negatives_per_query <= depth.
  void validate() const;
};

// One contrastive training example.
struct TrainingInstance {
  std::string query_id;
  std::string positive_id;
  std::vector<std::string> negative_ids;

  friend bool operator==(const TrainingInstance&, const TrainingInstance&) = default;
};

// Retrieves the top cfg.depth documents for the query and drops every
// document judged relevant. What remains, in retrieval order, is the pool of
// hard negatives; unjudged documents count as negatives.
// Throws NoEmbedding, NoPositive.
std::vector<std::string> mine_hard_negatives(const std::string& query_id,
                                             const EmbeddingMatrix& query_embeddings,
                                             const SearchIndex& index, const Qrels& qrels,
                                             const MiningConfig& cfg);

struct MinedPools {
  std::map<std::string, std::vector<std::string>> pools;
  std::vector<std::string> skipped_no_positive;
  std::vector<std::string> skipped_no_embedding;
  std::vector<std::string> empty_pools;
};

// Mines every judged query, in parallel over queries.
MinedPools mine_all(const EmbeddingMatrix& query_embeddings, const SearchIndex& index,
                    const Qrels& qrels, const MiningConfig& cfg, std::size_t threads = 0);

struct TripletSet {
  std::vector<TrainingInstance> instances;
  std::size_t skipped = 0;        // (query, positive) pairs with too few negatives
  std::size_t filled_negatives = 0;
};

// One instance per (query, positive) pair, queries and positives in id order.
// Negatives are the first negatives_per_query pool entries; short pools are
// topped up by seeded uniform sampling (without replacement) from corpus_ids
// minus the query's positives. Pairs that still fall short are skipped.
TripletSet build_triplets(const Qrels& qrels,
                          const std::map<std::string, std::vector<std::string>>& pools,
                          const std::vector<std::string>& corpus_ids, const MiningConfig& cfg);

// JSON lines: {"query_id", "positive_id", "negative_ids"}.
std::string serialize_triplets(const std::vector<TrainingInstance>& triplets);
std::vector<TrainingInstance> parse_triplets(std::string_view text,
                                             const std::string& source = "<triplets>");

}  // namespace fuserank
