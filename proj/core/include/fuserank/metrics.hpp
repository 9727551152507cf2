#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fuserank/core_model.hpp"

namespace fuserank {

enum class Gain {
  Linear,       // grade
  Exponential,  // 2^grade - 1
};

struct MetricConfig {
  std::size_t ndcg_cutoff = 10;
  std::size_t recall_cutoff = 10;
  Gain gain = Gain::Exponential;

  void validate() const;  // throws InvalidCount for a zero cutoff
};

// The five reported metrics, in table order.
enum class Metric { NdcgCut, AP, Ndcg, RR, RecallCut };
inline constexpr std::array<Metric, 5> kAllMetrics = {Metric::NdcgCut, Metric::AP, Metric::Ndcg,
                                                      Metric::RR, Metric::RecallCut};

// "nDCG@10", "AP", "nDCG", "RR", "R@10" (cutoffs from cfg).
std::string metric_name(Metric m, const MetricConfig& cfg);

struct MetricScores {
  std::array<double, 5> values{};

  double& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
  double operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
  friend bool operator==(const MetricScores&, const MetricScores&) = default;
};

// Documents in rank order. Unjudged documents have grade 0. All functions
// throw NoRelevant when the judgments hold no grade > 0.
using RankedIds = std::span<const std::string>;

// DCG / ideal DCG with discount 1 / log2(rank + 1). k == nullopt scores the
// whole ranking against every judged document.
double ndcg_at_k(RankedIds ranking, const Qrels::Judgments& judgments,
                 std::optional<std::size_t> k, const MetricConfig& cfg);
double average_precision(RankedIds ranking, const Qrels::Judgments& judgments);
double reciprocal_rank(RankedIds ranking, const Qrels::Judgments& judgments);
double recall_at_k(RankedIds ranking, const Qrels::Judgments& judgments, std::size_t k);

MetricScores score_query(RankedIds ranking, const Qrels::Judgments& judgments,
                         const MetricConfig& cfg);

struct Evaluation {
  std::map<std::string, MetricScores> per_query;  // every query with a relevant doc
  MetricScores aggregate;  // arithmetic mean over per_query
  std::vector<std::string> no_relevant;       // judged queries without relevant docs
  std::vector<std::string> missing_from_run;  // scored 0 on every metric
  std::vector<std::string> unjudged_in_run;   // run queries absent from qrels
};

// Throws MalformedRun when ranks or scores violate the run invariants.
Evaluation evaluate_run(const RunFile& run, const Qrels& qrels, const MetricConfig& cfg);

// query_id -> dimension -> label
using QueryCategories = std::map<std::string, std::map<CategoryDimension, std::string>>;

struct BreakdownRow {
  CategoryDimension dimension;
  std::string label;
  std::size_t queries = 0;
  double value = 0.0;

  friend bool operator==(const BreakdownRow&, const BreakdownRow&) = default;
};

// Mean of `metric` per (dimension, label) in declared label order. Queries
// without a label for a dimension count as Unknown; labels with no queries
// are omitted.
std::vector<BreakdownRow> breakdown(const std::map<std::string, MetricScores>& per_query,
                                    const QueryCategories& categories, Metric metric);

// JSON lines {"query_id", <metric name>: value, ...}, queries in id order.
std::string serialize_per_query(const Evaluation& eval, const MetricConfig& cfg);
// Fixed-order text table of the aggregates.
std::string format_aggregates(const Evaluation& eval, const MetricConfig& cfg);

}  // namespace fuserank
