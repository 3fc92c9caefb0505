#pragma once

#include <cstddef>

#include "bitgear/embedding.hpp"
#include "bitgear/graph.hpp"

namespace bitgear {

// Degree-normalized neighbor averaging without transforms, self-loops or
// nonlinearities. Layer l is computed entirely from layer l-1: user rows
// gather from item rows and vice versa.
LayerOutputs propagate(const InteractionGraph& graph,
                       const DenseEmbeddingTable& base, std::size_t depth,
                       NormMode mode, std::size_t threads = 1);

// Reverse-mode of propagate. grad_layers[l] holds dLoss/dv^(l) for
// l = 0..L; the result is dLoss/dv^(0), accumulated by running the
// transposed step from layer L down to 0. The symmetric-mode operator is
// self-adjoint, so its transpose reuses the forward kernel.
DenseEmbeddingTable propagate_adjoint(
    const InteractionGraph& graph,
    const std::vector<DenseEmbeddingTable>& grad_layers, NormMode mode,
    std::size_t threads = 1);

// One application of the propagation operator (or its transpose) to a full
// table. Exposed for the adjoint identity and self-adjointness tests.
DenseEmbeddingTable propagate_step(const InteractionGraph& graph,
                                   const DenseEmbeddingTable& src,
                                   NormMode mode, bool transpose,
                                   std::size_t threads = 1);

}  // namespace bitgear
