#include "bitgear/propagation.hpp"

#include <cmath>
#include <stdexcept>

#include "bitgear/parallel.hpp"

namespace bitgear {

namespace {

// Gather form: every destination row is owned by exactly one worker, so the
// parallel loop is race-free and the summation order per row is fixed.
void gather_users(const InteractionGraph& g, const DenseEmbeddingTable& src,
                  DenseEmbeddingTable& dst, NormMode mode, bool transpose,
                  std::size_t threads) {
  const std::size_t d = src.dim;
  const std::size_t m = g.num_users();
  parallel_for(0, m, threads, [&](std::size_t uz) {
    const auto u = static_cast<std::uint32_t>(uz);
    double* out = dst.values.data() + uz * d;
    const double du = static_cast<double>(g.user_degree(u));
    for (std::uint32_t i : g.items_of(u)) {
      double c;
      if (mode == NormMode::Symmetric) {
        c = 1.0 / std::sqrt(du * static_cast<double>(g.item_degree(i)));
      } else {
        // left: 1/|N(neighbor)|; the transpose flips it onto the destination
        c = transpose ? 1.0 / du
                      : 1.0 / static_cast<double>(g.item_degree(i));
      }
      const double* in = src.values.data() + (g.num_users() + i) * d;
      for (std::size_t k = 0; k < d; ++k) out[k] += c * in[k];
    }
  });
}

void gather_items(const InteractionGraph& g, const DenseEmbeddingTable& src,
                  DenseEmbeddingTable& dst, NormMode mode, bool transpose,
                  std::size_t threads) {
  const std::size_t d = src.dim;
  const std::size_t n = g.num_items();
  const std::size_t m = g.num_users();
  parallel_for(0, n, threads, [&](std::size_t iz) {
    const auto i = static_cast<std::uint32_t>(iz);
    double* out = dst.values.data() + (m + iz) * d;
    const double di = static_cast<double>(g.item_degree(i));
    for (std::uint32_t u : g.users_of(i)) {
      double c;
      if (mode == NormMode::Symmetric) {
        c = 1.0 / std::sqrt(di * static_cast<double>(g.user_degree(u)));
      } else {
        c = transpose ? 1.0 / di
                      : 1.0 / static_cast<double>(g.user_degree(u));
      }
      const double* in = src.values.data() + u * d;
      for (std::size_t k = 0; k < d; ++k) out[k] += c * in[k];
    }
  });
}

}  // namespace

DenseEmbeddingTable propagate_step(const InteractionGraph& graph,
                                   const DenseEmbeddingTable& src,
                                   NormMode mode, bool transpose,
                                   std::size_t threads) {
  if (src.rows != graph.num_nodes())
    throw std::invalid_argument("table rows do not match graph");
  DenseEmbeddingTable dst(src.rows, src.dim);
  gather_users(graph, src, dst, mode, transpose, threads);
  gather_items(graph, src, dst, mode, transpose, threads);
  return dst;
}

LayerOutputs propagate(const InteractionGraph& graph,
                       const DenseEmbeddingTable& base, std::size_t depth,
                       NormMode mode, std::size_t threads) {
  if (base.rows != graph.num_nodes())
    throw std::invalid_argument("base rows do not match graph");
  LayerOutputs out;
  out.layers.reserve(depth + 1);
  out.layers.push_back(base);
  for (std::size_t l = 1; l <= depth; ++l)
    out.layers.push_back(
        propagate_step(graph, out.layers[l - 1], mode, false, threads));
  return out;
}

DenseEmbeddingTable propagate_adjoint(
    const InteractionGraph& graph,
    const std::vector<DenseEmbeddingTable>& grad_layers, NormMode mode,
    std::size_t threads) {
  if (grad_layers.empty())
    throw std::invalid_argument("adjoint needs at least the layer-0 gradient");
  for (const auto& t : grad_layers) {
    if (t.rows != graph.num_nodes() || t.dim != grad_layers[0].dim)
      throw std::invalid_argument("gradient table shape mismatch");
  }
  DenseEmbeddingTable acc = grad_layers.back();
  for (std::size_t l = grad_layers.size() - 1; l-- > 0;) {
    DenseEmbeddingTable pushed =
        propagate_step(graph, acc, mode, /*transpose=*/true, threads);
    const DenseEmbeddingTable& g = grad_layers[l];
    for (std::size_t k = 0; k < pushed.values.size(); ++k)
      pushed.values[k] += g.values[k];
    acc = std::move(pushed);
  }
  return acc;
}

}  // namespace bitgear
