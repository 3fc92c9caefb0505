#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bitgear/graph.hpp"
#include "bitgear/scoring_types.hpp"

namespace bitgear {

// |ranked[0..K) intersect relevant| / |relevant|; relevant must be nonempty.
double recall_at_k(std::span<const std::uint32_t> ranked,
                   std::span<const std::uint32_t> relevant_sorted,
                   std::size_t k);

// Binary relevance, log2(p+1) discount, IDCG truncated at min(K, |relevant|).
double ndcg_at_k(std::span<const std::uint32_t> ranked,
                 std::span<const std::uint32_t> relevant_sorted,
                 std::size_t k);

struct MetricReport {
  std::vector<std::size_t> ks;
  std::vector<double> recall;
  std::vector<double> ndcg;
  std::size_t users_evaluated = 0;
  double seconds = 0.0;

  std::string to_tsv() const;   // header + one `K recall ndcg` row per K
  std::string to_json() const;
};

// Scores every item for one user into `out` (size num_items).
using ItemScoreFn =
    std::function<void(std::uint32_t user, std::span<double> out)>;

// Users with nonempty (orphan-filtered) test sets are ranked over the
// non-orphan catalog minus their training items; metrics are averaged over
// those users only.
MetricReport evaluate(const ItemScoreFn& score_fn,
                      const InteractionGraph& graph, const DatasetSplit& split,
                      std::span<const std::size_t> ks, std::size_t threads = 1);

}  // namespace bitgear
