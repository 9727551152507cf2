#include "fuserank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>

#include <json.hpp>

#include "fuserank/error.hpp"

namespace fuserank {

namespace {

int grade_of(const Qrels::Judgments& judgments, const std::string& doc) {
  auto it = judgments.find(doc);
  return it == judgments.end() ? 0 : std::max(0, it->second);
}

std::size_t relevant_total(const Qrels::Judgments& judgments) {
  std::size_t n = 0;
  for (const auto& [doc, g] : judgments)
    if (g > 0) ++n;
  return n;
}

std::size_t require_relevant(const Qrels::Judgments& judgments) {
  const std::size_t n = relevant_total(judgments);
  if (n == 0) throw NoRelevant();
  return n;
}

double gain(int grade, Gain g) {
  if (grade <= 0) return 0.0;
  return g == Gain::Exponential ? std::exp2(static_cast<double>(grade)) - 1.0
                                : static_cast<double>(grade);
}

double discount(std::size_t rank) { return 1.0 / std::log2(static_cast<double>(rank) + 1.0); }

}  // namespace

void MetricConfig::validate() const {
  if (ndcg_cutoff == 0) throw InvalidCount("nDCG cutoff must be positive");
  if (recall_cutoff == 0) throw InvalidCount("recall cutoff must be positive");
}

std::string metric_name(Metric m, const MetricConfig& cfg) {
  switch (m) {
    case Metric::NdcgCut: return "nDCG@" + std::to_string(cfg.ndcg_cutoff);
    case Metric::AP: return "AP";
    case Metric::Ndcg: return "nDCG";
    case Metric::RR: return "RR";
    case Metric::RecallCut: return "R@" + std::to_string(cfg.recall_cutoff);
  }
  return "?";
}

double ndcg_at_k(RankedIds ranking, const Qrels::Judgments& judgments,
                 std::optional<std::size_t> k, const MetricConfig& cfg) {
  require_relevant(judgments);
  const std::size_t depth = k ? std::min(*k, ranking.size()) : ranking.size();
  double dcg = 0.0;
  for (std::size_t i = 0; i < depth; ++i)
    dcg += gain(grade_of(judgments, ranking[i]), cfg.gain) * discount(i + 1);

  std::vector<int> ideal;
  for (const auto& [doc, g] : judgments)
    if (g > 0) ideal.push_back(g);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const std::size_t ideal_depth = k ? std::min(*k, ideal.size()) : ideal.size();
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal_depth; ++i) idcg += gain(ideal[i], cfg.gain) * discount(i + 1);
  return dcg / idcg;
}

double average_precision(RankedIds ranking, const Qrels::Judgments& judgments) {
  const std::size_t total = require_relevant(judgments);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    if (grade_of(judgments, ranking[i]) > 0) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(total);
}

double reciprocal_rank(RankedIds ranking, const Qrels::Judgments& judgments) {
  require_relevant(judgments);
  for (std::size_t i = 0; i < ranking.size(); ++i)
    if (grade_of(judgments, ranking[i]) > 0) return 1.0 / static_cast<double>(i + 1);
  return 0.0;
}

double recall_at_k(RankedIds ranking, const Qrels::Judgments& judgments, std::size_t k) {
  const std::size_t total = require_relevant(judgments);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i)
    if (grade_of(judgments, ranking[i]) > 0) ++hits;
  return static_cast<double>(hits) / static_cast<double>(total);
}

MetricScores score_query(RankedIds ranking, const Qrels::Judgments& judgments,
                         const MetricConfig& cfg) {
  MetricScores s;
  s[Metric::NdcgCut] = ndcg_at_k(ranking, judgments, cfg.ndcg_cutoff, cfg);
  s[Metric::AP] = average_precision(ranking, judgments);
  s[Metric::Ndcg] = ndcg_at_k(ranking, judgments, std::nullopt, cfg);
  s[Metric::RR] = reciprocal_rank(ranking, judgments);
  s[Metric::RecallCut] = recall_at_k(ranking, judgments, cfg.recall_cutoff);
  return s;
}

Evaluation evaluate_run(const RunFile& run, const Qrels& qrels, const MetricConfig& cfg) {
  cfg.validate();
  const auto grouped = group_run(run);
  Evaluation eval;
  for (const auto& [qid, ranked] : grouped)
    if (qrels.find(qid) == nullptr) eval.unjudged_in_run.push_back(qid);

  for (const auto& [qid, judgments] : qrels.data()) {
    if (relevant_total(judgments) == 0) {
      eval.no_relevant.push_back(qid);
      continue;
    }
    auto it = grouped.find(qid);
    if (it == grouped.end()) {
      eval.missing_from_run.push_back(qid);
      eval.per_query.emplace(qid, MetricScores{});
      continue;
    }
    std::vector<std::string> ids;
    ids.reserve(it->second.size());
    for (const RankedDoc& d : it->second) ids.push_back(d.doc_id);
    eval.per_query.emplace(qid, score_query(ids, judgments, cfg));
  }

  if (!eval.per_query.empty()) {
    for (const auto& [qid, s] : eval.per_query)
      for (std::size_t i = 0; i < s.values.size(); ++i) eval.aggregate.values[i] += s.values[i];
    for (double& v : eval.aggregate.values) v /= static_cast<double>(eval.per_query.size());
  }
  return eval;
}

std::vector<BreakdownRow> breakdown(const std::map<std::string, MetricScores>& per_query,
                                    const QueryCategories& categories, Metric metric) {
  std::vector<BreakdownRow> rows;
  for (CategoryDimension dim : kAllDimensions) {
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (const auto& [qid, scores] : per_query) {
      std::string label(kUnknownLabel);
      if (auto q = categories.find(qid); q != categories.end())
        if (auto l = q->second.find(dim); l != q->second.end()) label = canonical_label(dim, l->second);
      auto& [sum, n] = sums[label];
      sum += scores[metric];
      ++n;
    }
    for (std::string_view label : declared_labels(dim)) {
      auto it = sums.find(std::string(label));
      if (it == sums.end()) continue;
      rows.push_back({dim, std::string(label), it->second.second,
                      it->second.first / static_cast<double>(it->second.second)});
    }
  }
  return rows;
}

std::string serialize_per_query(const Evaluation& eval, const MetricConfig& cfg) {
  std::string out;
  for (const auto& [qid, s] : eval.per_query) {
    nlohmann::ordered_json j;
    j["query_id"] = qid;
    for (Metric m : kAllMetrics) j[metric_name(m, cfg)] = s[m];
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string format_aggregates(const Evaluation& eval, const MetricConfig& cfg) {
  std::string header;
  std::string values;
  char cell[32];
  for (Metric m : kAllMetrics) {
    std::snprintf(cell, sizeof(cell), "%-9s", metric_name(m, cfg).c_str());
    header += cell;
    std::snprintf(cell, sizeof(cell), "%-9.4f", eval.aggregate[m]);
    values += cell;
  }
  while (!header.empty() && header.back() == ' ') header.pop_back();
  while (!values.empty() && values.back() == ' ') values.pop_back();
  return header + "\n" + values + "\n";
}

}  // namespace fuserank
