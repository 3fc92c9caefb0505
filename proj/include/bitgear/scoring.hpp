#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bitgear/binarize.hpp"
#include "bitgear/embedding.hpp"
#include "bitgear/scoring_types.hpp"

namespace bitgear {

// sum_l w_l^2 <v_u^(l), v_i^(l)> -- the inner product of the w_l-scaled
// layer concatenations. Rows are table row indices (item row = M + i).
double score_full(const LayerOutputs& layers, std::size_t user_row,
                  std::size_t item_row, const LayerWeights& weights);

// sum_l w_l^2 alpha_u alpha_i <q_u, q_i> with codes unpacked to +-1.
double score_binary_float(const BinarizedTable& table, std::uint32_t u,
                          std::uint32_t i, const LayerWeights& weights);

// Same value computed as sum_l w_l^2 alpha_u alpha_i
// (2*popcount(xnor & valid_mask) - d); the popcount term is bit-exact.
double score_binary_bitwise(const BinarizedTable& table, std::uint32_t u,
                            std::uint32_t i, const LayerWeights& weights);

// Integer <sign_u, sign_i> for one layer via XNOR+popcount.
std::int64_t popcount_inner(std::span<const std::uint64_t> a,
                            std::span<const std::uint64_t> b,
                            std::uint64_t mask, std::uint32_t dim);

// Full-catalog scoring. The bitwise path streams packed item codes; the
// float path runs over a concatenated +-1 segment matrix prepared once at
// construction so per-query cost is a plain dense inner product.
class BinaryScorer {
 public:
  BinaryScorer(const BinarizedTable& table, LayerWeights weights,
               std::size_t threads = 1);

  void all_items_float(std::uint32_t u, std::span<double> out) const;
  void all_items_bitwise(std::uint32_t u, std::span<double> out) const;
  void all_items(std::uint32_t u, ScorePath path, std::span<double> out) const;

  std::uint32_t num_items() const { return table_->num_items; }
  std::uint32_t num_users() const { return table_->num_users; }
  const LayerWeights& weights() const { return weights_; }

 private:
  const BinarizedTable* table_;
  LayerWeights weights_;
  std::size_t concat_dim_ = 0;
  std::vector<double> item_segments_;  // N x (L+1)d, w_l * alpha * sign
  std::vector<double> wsq_;            // w_l^2
};

// Scores for every item against one user row of a full-precision model.
void score_all_items_full(const LayerOutputs& layers, std::uint32_t num_users,
                          std::uint32_t u, const LayerWeights& weights,
                          std::span<double> out);

// K highest-scoring items not in `exclude`, descending score, ties broken by
// ascending item index. K larger than the candidate count returns all
// candidates ranked.
std::vector<std::uint32_t> top_k(std::span<const double> scores,
                                 std::size_t k,
                                 std::span<const std::uint32_t> exclude_sorted);
std::vector<std::uint32_t> top_k_masked(std::span<const double> scores,
                                        std::size_t k,
                                        const std::vector<std::uint8_t>& excluded);

}  // namespace bitgear
