#pragma once

#include <cstddef>
#include <vector>

#include "bitgear/config.hpp"

namespace bitgear {

// Per-layer contribution weights w_l, length L+1. At least one entry must be
// positive; all entries nonnegative.
struct LayerWeights {
  std::vector<double> w;

  static LayerWeights for_scheme(WlScheme scheme, std::size_t depth);
  std::size_t num_layers() const { return w.size(); }
  void validate() const;  // throws std::invalid_argument
};

enum class ScorePath { Full, BinaryFloat, Bitwise };

}  // namespace bitgear
