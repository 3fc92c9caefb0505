#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bitgear/rng.hpp"

namespace bitgear {

// Row-major (M+N) x d table, users first (rows 0..M-1), items after.
struct DenseEmbeddingTable {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<double> values;

  DenseEmbeddingTable() = default;
  DenseEmbeddingTable(std::size_t rows_, std::size_t dim_)
      : rows(rows_), dim(dim_), values(rows_ * dim_, 0.0) {}

  std::span<double> row(std::size_t r) {
    return {values.data() + r * dim, dim};
  }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * dim, dim};
  }
};

inline DenseEmbeddingTable normal_init(std::size_t rows, std::size_t dim,
                                       double mean, double stddev, Rng& rng) {
  DenseEmbeddingTable t(rows, dim);
  for (double& v : t.values) v = rng.normal(mean, stddev);
  return t;
}

// Per-layer embeddings v^(0..L); layers[0] is the base table itself.
struct LayerOutputs {
  std::vector<DenseEmbeddingTable> layers;

  std::size_t num_layers() const { return layers.size(); }  // L+1
  std::size_t depth() const { return layers.size() - 1; }   // L
};

}  // namespace bitgear
