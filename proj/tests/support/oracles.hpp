#pragma once

// Slow, deliberately naive reference implementations used to cross-check
// the library. Nothing here shares code with the code under test beyond the
// plain data types.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fuserank/core_model.hpp"
#include "fuserank/fusion.hpp"

namespace fuserank::testing {

struct NaiveScores {
  double ndcg_cut = 0.0;
  double ap = 0.0;
  double ndcg = 0.0;
  double rr = 0.0;
  double recall_cut = 0.0;
};

// Scores one ranking by looking up every relevant document's rank.
NaiveScores naive_metrics(const std::vector<std::string>& ranking,
                          const std::map<std::string, int>& judgments, std::size_t ndcg_cutoff,
                          std::size_t recall_cutoff, bool exponential_gain);

struct NaiveHit {
  std::string doc_id;
  double score;
};

// Scores every document, sorts the whole list by (score desc, id asc) and
// keeps the first k.
std::vector<NaiveHit> naive_top_k(std::span<const double> query, const EmbeddingMatrix& docs,
                                  std::size_t k);

// Full run for a query matrix, in TREC form.
RunFile naive_search(const EmbeddingMatrix& queries, const EmbeddingMatrix& docs, std::size_t k,
                     const std::string& tag);

// Central differences of instance_loss over AdapterSet::flatten order.
Vector finite_difference_gradient(const InstanceVectors& instance, const ModalityMask& mask,
                                  AdapterSet adapters, double tau, double h);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(const Vector& a, const Vector& b, double floor);

}  // namespace fuserank::testing
