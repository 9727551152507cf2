#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace fuserank::testing {

namespace {

double gain_of(int grade, bool exponential) {
  return exponential ? std::pow(2.0, grade) - 1.0 : static_cast<double>(grade);
}

double discount(std::size_t rank) { return std::log(2.0) / std::log(rank + 1.0); }

// 1-based rank of doc in ranking, 0 if absent.
std::size_t rank_of(const std::vector<std::string>& ranking, const std::string& doc) {
  for (std::size_t i = 0; i < ranking.size(); ++i)
    if (ranking[i] == doc) return i + 1;
  return 0;
}

double ndcg_naive(const std::vector<std::string>& ranking, const std::map<std::string, int>& j,
                  std::size_t cutoff, bool exponential) {
  double dcg = 0.0;
  for (const auto& [doc, grade] : j) {
    if (grade <= 0) continue;
    const std::size_t r = rank_of(ranking, doc);
    if (r != 0 && r <= cutoff) dcg += gain_of(grade, exponential) * discount(r);
  }
  std::vector<int> grades;
  for (const auto& [doc, grade] : j)
    if (grade > 0) grades.push_back(grade);
  std::sort(grades.begin(), grades.end(), std::greater<>());
  double ideal = 0.0;
  for (std::size_t i = 0; i < grades.size() && i < cutoff; ++i)
    ideal += gain_of(grades[i], exponential) * discount(i + 1);
  return dcg / ideal;
}

}  // namespace

NaiveScores naive_metrics(const std::vector<std::string>& ranking,
                          const std::map<std::string, int>& judgments, std::size_t ndcg_cutoff,
                          std::size_t recall_cutoff, bool exponential_gain) {
  std::vector<std::size_t> hit_ranks;
  std::size_t relevant = 0;
  for (const auto& [doc, grade] : judgments) {
    if (grade <= 0) continue;
    ++relevant;
    const std::size_t r = rank_of(ranking, doc);
    if (r != 0) hit_ranks.push_back(r);
  }
  std::sort(hit_ranks.begin(), hit_ranks.end());

  NaiveScores s;
  s.ndcg_cut = ndcg_naive(ranking, judgments, ndcg_cutoff, exponential_gain);
  s.ndcg = ndcg_naive(ranking, judgments, ranking.size() + judgments.size(), exponential_gain);
  double precision_sum = 0.0;
  for (std::size_t i = 0; i < hit_ranks.size(); ++i)
    precision_sum += static_cast<double>(i + 1) / static_cast<double>(hit_ranks[i]);
  s.ap = precision_sum / static_cast<double>(relevant);
  s.rr = hit_ranks.empty() ? 0.0 : 1.0 / static_cast<double>(hit_ranks.front());
  std::size_t within = 0;
  for (std::size_t r : hit_ranks)
    if (r <= recall_cutoff) ++within;
  s.recall_cut = static_cast<double>(within) / static_cast<double>(relevant);
  return s;
}

std::vector<NaiveHit> naive_top_k(std::span<const double> query, const EmbeddingMatrix& docs,
                                  std::size_t k) {
  std::vector<NaiveHit> all;
  for (std::size_t d = 0; d < docs.rows(); ++d) {
    const auto row = docs.row(d);
    double s = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) s += query[i] * row[i];
    all.push_back({docs.ids()[d], s});
  }
  std::sort(all.begin(), all.end(), [](const NaiveHit& a, const NaiveHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

RunFile naive_search(const EmbeddingMatrix& queries, const EmbeddingMatrix& docs, std::size_t k,
                     const std::string& tag) {
  RunFile run;
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    const auto hits = naive_top_k(queries.row(q), docs, k);
    for (std::size_t r = 0; r < hits.size(); ++r)
      run.entries.push_back(
          {queries.ids()[q], hits[r].doc_id, static_cast<int>(r + 1), hits[r].score, tag});
  }
  return run;
}

Vector finite_difference_gradient(const InstanceVectors& instance, const ModalityMask& mask,
                                  AdapterSet adapters, double tau, double h) {
  const Vector base = adapters.flatten();
  Vector grad(base.size());
  for (Eigen::Index i = 0; i < base.size(); ++i) {
    Vector p = base;
    p[i] += h;
    adapters.assign(p);
    const double plus = instance_loss(instance, mask, adapters, tau);
    p[i] = base[i] - h;
    adapters.assign(p);
    const double minus = instance_loss(instance, mask, adapters, tau);
    grad[i] = (plus - minus) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Vector& a, const Vector& b, double floor) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace fuserank::testing
