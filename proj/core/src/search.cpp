#include "fuserank/search.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

#include "fuserank/error.hpp"
#include "fuserank/parallel.hpp"

namespace fuserank {

namespace {

struct Candidate {
  double score;
  std::uint32_t order;
  std::uint32_t row;
};

// Sequential accumulation; the summation order is part of the contract so
// scores are reproducible bit-for-bit.
double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void rank_into(std::span<const double> q, const SearchIndex& index, std::size_t k,
               std::vector<Candidate>& scratch, Ranking& out) {
  const EmbeddingMatrix& m = index.matrix();
  const std::size_t n = m.rows();
  scratch.resize(n);
  for (std::size_t r = 0; r < n; ++r)
    scratch[r] = {dot(q.data(), m.row(r).data(), m.dim()), index.id_order(r),
                  static_cast<std::uint32_t>(r)};
  const auto better = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.order < b.order;
  };
  k = std::min(k, n);
  if (k < n) {
    std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k),
                     scratch.end(), better);
  }
  std::sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), better);
  out.clear();
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    out.push_back({m.ids()[scratch[i].row], scratch[i].score});
}

void check_query(std::span<const double> q, const SearchIndex& index, std::size_t k) {
  if (index.size() == 0) throw EmptyIndex();
  if (q.size() != index.dim()) throw DimMismatch(index.dim(), q.size());
  if (k == 0) throw InvalidCount("k must be positive");
}

}  // namespace

SearchIndex::SearchIndex(EmbeddingMatrix matrix) : matrix_(std::move(matrix)) {
  const auto& ids = matrix_.ids();
  std::vector<std::uint32_t> rows(ids.size());
  std::iota(rows.begin(), rows.end(), 0u);
  std::sort(rows.begin(), rows.end(),
            [&](std::uint32_t a, std::uint32_t b) { return ids[a] < ids[b]; });
  id_order_.resize(ids.size());
  for (std::size_t pos = 0; pos < rows.size(); ++pos)
    id_order_[rows[pos]] = static_cast<std::uint32_t>(pos);
}

double similarity(std::span<const double> q, std::span<const double> d) {
  if (q.size() != d.size()) throw DimMismatch(q.size(), d.size());
  return dot(q.data(), d.data(), q.size());
}

Ranking top_k(std::span<const double> q, const SearchIndex& index, std::size_t k) {
  check_query(q, index, k);
  std::vector<Candidate> scratch;
  Ranking out;
  rank_into(q, index, k, scratch, out);
  return out;
}

RunFile batch_search(const EmbeddingMatrix& queries, const SearchIndex& index,
                     std::size_t k, const std::string& tag, std::size_t threads) {
  if (index.size() == 0) throw EmptyIndex();
  if (queries.dim() != index.dim()) throw DimMismatch(index.dim(), queries.dim());
  if (k == 0) throw InvalidCount("k must be positive");

  std::vector<Ranking> rankings(queries.rows());
  parallel_for(queries.rows(), threads, [&](std::size_t qi) {
    thread_local std::vector<Candidate> scratch;
    rank_into(queries.row(qi), index, k, scratch, rankings[qi]);
  });

  RunFile run;
  for (std::size_t qi = 0; qi < queries.rows(); ++qi) {
    int rank = 0;
    for (RankedDoc& d : rankings[qi])
      run.entries.push_back({queries.ids()[qi], std::move(d.doc_id), ++rank, d.score, tag});
  }
  return run;
}

}  // namespace fuserank
