#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bitgear/embedding.hpp"
#include "bitgear/scoring_types.hpp"

namespace bitgear {

// Sign codes packed into 64-bit words: bit k of the vector lives at
// word k/64, position k%64; sign +1 <-> bit 1, -1 <-> bit 0. Padding bits
// beyond bit_len are zero in storage.
struct PackedBits {
  std::vector<std::uint64_t> words;
  std::uint32_t bit_len = 0;
};

inline std::size_t words_for_bits(std::uint32_t bits) {
  return (static_cast<std::size_t>(bits) + 63) / 64;
}

// All-ones over the valid bits of the final word (all-ones when d % 64 == 0).
inline std::uint64_t tail_mask(std::uint32_t bits) {
  const std::uint32_t rem = bits % 64;
  return rem == 0 ? ~0ULL : ((1ULL << rem) - 1);
}

// sign(0) := +1.
inline std::int8_t sign_of(double v) { return v < 0.0 ? -1 : 1; }

PackedBits pack_bits(std::span<const std::int8_t> signs);
std::vector<std::int8_t> unpack_bits(const PackedBits& packed);

// Eq.-style 1-bit quantization of one row: elementwise sign plus the mean
// of the L1 norm as the positive scaler.
double l1_mean_scaler(std::span<const double> v);
void sign_row(std::span<const double> v, std::span<std::int8_t> out);

struct LayerBinarization {
  std::vector<std::int8_t> signs;  // rows x d
  std::vector<double> scalers;     // rows
};
LayerBinarization binarize_layer(const DenseEmbeddingTable& layer);

// The deployable model: per node x and layer l a scaler alpha_x^(l) and a
// packed code q_x^(l), plus the layer weights used at serving time.
// Layout is node-major so full-catalog scans touch contiguous memory.
struct BinarizedTable {
  std::uint32_t num_users = 0;
  std::uint32_t num_items = 0;
  std::uint32_t dim = 0;
  std::uint32_t num_layers = 0;  // L+1
  std::size_t words_per_code = 0;
  std::vector<double> scalers;        // (M+N) * (L+1)
  std::vector<std::uint64_t> codes;   // (M+N) * (L+1) * words_per_code
  std::vector<double> layer_weights;  // L+1

  std::size_t num_nodes() const {
    return static_cast<std::size_t>(num_users) + num_items;
  }
  std::size_t user_node(std::uint32_t u) const { return u; }
  std::size_t item_node(std::uint32_t i) const {
    return static_cast<std::size_t>(num_users) + i;
  }
  double scaler(std::size_t node, std::size_t layer) const {
    return scalers[node * num_layers + layer];
  }
  std::span<const std::uint64_t> code(std::size_t node,
                                      std::size_t layer) const {
    return {codes.data() + (node * num_layers + layer) * words_per_code,
            words_per_code};
  }
  std::span<std::uint64_t> code(std::size_t node, std::size_t layer) {
    return {codes.data() + (node * num_layers + layer) * words_per_code,
            words_per_code};
  }
  std::uint64_t valid_mask() const { return tail_mask(dim); }
};

BinarizedTable build_tables(const LayerOutputs& layers,
                            std::uint32_t num_users,
                            const LayerWeights& weights,
                            std::size_t threads = 1);

}  // namespace bitgear
