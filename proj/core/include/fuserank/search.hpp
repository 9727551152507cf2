#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fuserank/core_model.hpp"

namespace fuserank {

// Exact dense retrieval over unit-norm rows, so the dot product is the cosine
// similarity. Rankings are ordered by score descending, then doc_id ascending.
class SearchIndex {
 public:
  explicit SearchIndex(EmbeddingMatrix matrix);

  const EmbeddingMatrix& matrix() const { return matrix_; }
  const std::vector<std::string>& ids() const { return matrix_.ids(); }
  std::size_t size() const { return matrix_.rows(); }
  std::size_t dim() const { return matrix_.dim(); }
  // Position of row's id in ascending id order; used for tie-breaks.
  std::uint32_t id_order(std::size_t row) const { return id_order_[row]; }

 private:
  EmbeddingMatrix matrix_;
  std::vector<std::uint32_t> id_order_;
};

using Ranking = std::vector<RankedDoc>;

// Dot product of two unit vectors. Throws DimMismatch.
double similarity(std::span<const double> q, std::span<const double> d);

// The k best documents (all of them if k exceeds the index size).
// Throws DimMismatch, EmptyIndex, InvalidCount for k == 0.
Ranking top_k(std::span<const double> q, const SearchIndex& index, std::size_t k);

// One ranking per query row, in row order, as 1-based run entries. Output is
// identical for every thread count (0 = hardware concurrency).
RunFile batch_search(const EmbeddingMatrix& queries, const SearchIndex& index,
                     std::size_t k, const std::string& tag, std::size_t threads = 0);

}  // namespace fuserank
