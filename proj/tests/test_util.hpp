#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bitgear/binarize.hpp"
#include "bitgear/embedding.hpp"
#include "bitgear/graph.hpp"
#include "bitgear/rng.hpp"
#include "bitgear/scoring_types.hpp"

namespace bitgear::testutil {

// Random bipartite graph where every user and item ends up with degree >= 1.
inline InteractionGraph random_graph(std::uint32_t users, std::uint32_t items,
                                     std::size_t extra_edges, Rng& rng) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  for (std::uint32_t u = 0; u < users; ++u)
    edges.emplace_back(u, rng.index(items));
  for (std::uint32_t i = 0; i < items; ++i)
    edges.emplace_back(rng.index(users), i);
  for (std::size_t e = 0; e < extra_edges; ++e)
    edges.emplace_back(rng.index(users), rng.index(items));
  return InteractionGraph::from_edges(users, items, std::move(edges));
}

inline DenseEmbeddingTable random_table(std::size_t rows, std::size_t dim,
                                        Rng& rng, double scale = 1.0) {
  DenseEmbeddingTable t(rows, dim);
  for (double& v : t.values) v = rng.normal(0.0, scale);
  return t;
}

inline BinarizedTable random_binarized_table(std::uint32_t users,
                                             std::uint32_t items,
                                             std::uint32_t dim,
                                             std::uint32_t num_layers,
                                             Rng& rng) {
  BinarizedTable t;
  t.num_users = users;
  t.num_items = items;
  t.dim = dim;
  t.num_layers = num_layers;
  t.words_per_code = words_for_bits(dim);
  const std::size_t nodes = t.num_nodes();
  t.scalers.resize(nodes * num_layers);
  for (double& a : t.scalers) a = 0.05 + rng.uniform01();
  t.codes.assign(nodes * num_layers * t.words_per_code, 0);
  const std::uint64_t mask = t.valid_mask();
  for (std::size_t node = 0; node < nodes; ++node)
    for (std::size_t l = 0; l < num_layers; ++l) {
      auto code = t.code(node, l);
      for (auto& w : code) w = rng.next();
      code[t.words_per_code - 1] &= mask;
    }
  t.layer_weights.assign(num_layers, 1.0);
  return t;
}

}  // namespace bitgear::testutil
