#include "bitgear/binarize.hpp"

#include <cmath>
#include <stdexcept>

#include "bitgear/parallel.hpp"

namespace bitgear {

PackedBits pack_bits(std::span<const std::int8_t> signs) {
  PackedBits out;
  out.bit_len = static_cast<std::uint32_t>(signs.size());
  out.words.assign(words_for_bits(out.bit_len), 0);
  for (std::size_t k = 0; k < signs.size(); ++k)
    if (signs[k] > 0) out.words[k >> 6] |= (1ULL << (k & 63));
  return out;
}

std::vector<std::int8_t> unpack_bits(const PackedBits& packed) {
  std::vector<std::int8_t> out(packed.bit_len);
  for (std::size_t k = 0; k < out.size(); ++k)
    out[k] = (packed.words[k >> 6] >> (k & 63)) & 1 ? 1 : -1;
  return out;
}

double l1_mean_scaler(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double sum = 0.0;
  for (double x : v) sum += std::abs(x);
  return sum / static_cast<double>(v.size());
}

void sign_row(std::span<const double> v, std::span<std::int8_t> out) {
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = sign_of(v[k]);
}

LayerBinarization binarize_layer(const DenseEmbeddingTable& layer) {
  LayerBinarization out;
  out.signs.resize(layer.rows * layer.dim);
  out.scalers.resize(layer.rows);
  for (std::size_t r = 0; r < layer.rows; ++r) {
    const auto row = layer.row(r);
    sign_row(row, {out.signs.data() + r * layer.dim, layer.dim});
    out.scalers[r] = l1_mean_scaler(row);
  }
  return out;
}

BinarizedTable build_tables(const LayerOutputs& layers,
                            std::uint32_t num_users,
                            const LayerWeights& weights,
                            std::size_t threads) {
  if (layers.layers.empty()) throw std::invalid_argument("no layers");
  if (weights.num_layers() != layers.num_layers())
    throw std::invalid_argument("layer weights length mismatch");
  const std::size_t rows = layers.layers[0].rows;
  const std::size_t d = layers.layers[0].dim;
  if (rows < num_users) throw std::invalid_argument("fewer rows than users");

  BinarizedTable t;
  t.num_users = num_users;
  t.num_items = static_cast<std::uint32_t>(rows - num_users);
  t.dim = static_cast<std::uint32_t>(d);
  t.num_layers = static_cast<std::uint32_t>(layers.num_layers());
  t.words_per_code = words_for_bits(t.dim);
  t.scalers.assign(rows * t.num_layers, 0.0);
  t.codes.assign(rows * t.num_layers * t.words_per_code, 0);
  t.layer_weights = weights.w;

  parallel_for(0, rows, threads, [&](std::size_t node) {
    std::vector<std::int8_t> signs(d);
    for (std::size_t l = 0; l < layers.num_layers(); ++l) {
      const auto row = layers.layers[l].row(node);
      sign_row(row, signs);
      t.scalers[node * t.num_layers + l] = l1_mean_scaler(row);
      auto code = t.code(node, l);
      for (std::size_t k = 0; k < d; ++k)
        if (signs[k] > 0) code[k >> 6] |= (1ULL << (k & 63));
    }
  });
  return t;
}

}  // namespace bitgear
