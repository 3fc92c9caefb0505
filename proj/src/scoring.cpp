#include "bitgear/scoring.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "bitgear/parallel.hpp"

namespace bitgear {

LayerWeights LayerWeights::for_scheme(WlScheme scheme, std::size_t depth) {
  LayerWeights lw;
  lw.w.resize(depth + 1);
  switch (scheme) {
    case WlScheme::LinearShifted: {
      // w_l proportional to l, shifted by one so the layer-0 segment stays
      // alive; normalized to sum 1.
      double sum = 0.0;
      for (std::size_t l = 0; l <= depth; ++l) sum += static_cast<double>(l + 1);
      for (std::size_t l = 0; l <= depth; ++l)
        lw.w[l] = static_cast<double>(l + 1) / sum;
      break;
    }
    case WlScheme::Uniform:
      for (std::size_t l = 0; l <= depth; ++l)
        lw.w[l] = 1.0 / static_cast<double>(depth + 1);
      break;
    case WlScheme::InvRemaining:
      for (std::size_t l = 0; l <= depth; ++l)
        lw.w[l] = 1.0 / static_cast<double>(depth + 1 - l);
      break;
    case WlScheme::Exp:
      for (std::size_t l = 0; l <= depth; ++l)
        lw.w[l] = std::pow(2.0, -static_cast<double>(depth + 1 - l));
      break;
  }
  return lw;
}

void LayerWeights::validate() const {
  if (w.empty()) throw std::invalid_argument("layer weights empty");
  bool any_positive = false;
  for (double x : w) {
    if (x < 0.0) throw std::invalid_argument("layer weights must be >= 0");
    if (x > 0.0) any_positive = true;
  }
  if (!any_positive)
    throw std::invalid_argument("at least one layer weight must be positive");
}

double score_full(const LayerOutputs& layers, std::size_t user_row,
                  std::size_t item_row, const LayerWeights& weights) {
  if (weights.num_layers() != layers.num_layers())
    throw std::invalid_argument("layer weights length mismatch");
  double score = 0.0;
  for (std::size_t l = 0; l < layers.num_layers(); ++l) {
    const auto vu = layers.layers[l].row(user_row);
    const auto vi = layers.layers[l].row(item_row);
    double dot = 0.0;
    for (std::size_t k = 0; k < vu.size(); ++k) dot += vu[k] * vi[k];
    score += weights.w[l] * weights.w[l] * dot;
  }
  return score;
}

double score_binary_float(const BinarizedTable& table, std::uint32_t u,
                          std::uint32_t i, const LayerWeights& weights) {
  const std::size_t un = table.user_node(u);
  const std::size_t in = table.item_node(i);
  double score = 0.0;
  for (std::size_t l = 0; l < table.num_layers; ++l) {
    const auto cu = table.code(un, l);
    const auto ci = table.code(in, l);
    double dot = 0.0;
    for (std::uint32_t k = 0; k < table.dim; ++k) {
      const double su = (cu[k >> 6] >> (k & 63)) & 1 ? 1.0 : -1.0;
      const double si = (ci[k >> 6] >> (k & 63)) & 1 ? 1.0 : -1.0;
      dot += su * si;
    }
    score += weights.w[l] * weights.w[l] * table.scaler(un, l) *
             table.scaler(in, l) * dot;
  }
  return score;
}

std::int64_t popcount_inner(std::span<const std::uint64_t> a,
                            std::span<const std::uint64_t> b,
                            std::uint64_t mask, std::uint32_t dim) {
  std::int64_t agree = 0;
  const std::size_t last = a.size() - 1;
  for (std::size_t w = 0; w < a.size(); ++w) {
    std::uint64_t x = ~(a[w] ^ b[w]);
    if (w == last) x &= mask;
    agree += std::popcount(x);
  }
  return 2 * agree - static_cast<std::int64_t>(dim);
}

double score_binary_bitwise(const BinarizedTable& table, std::uint32_t u,
                            std::uint32_t i, const LayerWeights& weights) {
  const std::size_t un = table.user_node(u);
  const std::size_t in = table.item_node(i);
  const std::uint64_t mask = table.valid_mask();
  double score = 0.0;
  for (std::size_t l = 0; l < table.num_layers; ++l) {
    const auto inner = popcount_inner(table.code(un, l), table.code(in, l),
                                      mask, table.dim);
    score += weights.w[l] * weights.w[l] * table.scaler(un, l) *
             table.scaler(in, l) * static_cast<double>(inner);
  }
  return score;
}

BinaryScorer::BinaryScorer(const BinarizedTable& table, LayerWeights weights,
                           std::size_t threads)
    : table_(&table), weights_(std::move(weights)) {
  if (weights_.num_layers() != table.num_layers)
    throw std::invalid_argument("layer weights length mismatch");
  weights_.validate();
  concat_dim_ = static_cast<std::size_t>(table.dim) * table.num_layers;
  wsq_.resize(table.num_layers);
  for (std::size_t l = 0; l < table.num_layers; ++l)
    wsq_[l] = weights_.w[l] * weights_.w[l];

  // Item side of Eq.-6-style segments: concat_l of w_l * alpha_i^(l) * q_i.
  item_segments_.assign(static_cast<std::size_t>(table.num_items) *
                            concat_dim_,
                        0.0);
  parallel_for(0, table.num_items, threads, [&](std::size_t i) {
    double* seg = item_segments_.data() + i * concat_dim_;
    const std::size_t node = table.item_node(static_cast<std::uint32_t>(i));
    for (std::size_t l = 0; l < table.num_layers; ++l) {
      const double f = weights_.w[l] * table.scaler(node, l);
      const auto code = table.code(node, l);
      double* out = seg + l * table.dim;
      for (std::uint32_t k = 0; k < table.dim; ++k)
        out[k] = (code[k >> 6] >> (k & 63)) & 1 ? f : -f;
    }
  });
}

void BinaryScorer::all_items_float(std::uint32_t u,
                                   std::span<double> out) const {
  const BinarizedTable& t = *table_;
  // user segment, built once per query
  std::vector<double> useg(concat_dim_);
  const std::size_t un = t.user_node(u);
  for (std::size_t l = 0; l < t.num_layers; ++l) {
    const double f = weights_.w[l] * t.scaler(un, l);
    const auto code = t.code(un, l);
    double* dst = useg.data() + l * t.dim;
    for (std::uint32_t k = 0; k < t.dim; ++k)
      dst[k] = (code[k >> 6] >> (k & 63)) & 1 ? f : -f;
  }
  for (std::uint32_t i = 0; i < t.num_items; ++i) {
    const double* seg = item_segments_.data() + i * concat_dim_;
    double dot = 0.0;
    for (std::size_t k = 0; k < concat_dim_; ++k) dot += useg[k] * seg[k];
    out[i] = dot;
  }
}

void BinaryScorer::all_items_bitwise(std::uint32_t u,
                                     std::span<double> out) const {
  const BinarizedTable& t = *table_;
  const std::size_t un = t.user_node(u);
  const std::uint64_t mask = t.valid_mask();
  const std::size_t words = t.words_per_code;
  // per-layer factors w_l^2 * alpha_u^(l), fetched once per query
  std::vector<double> ufac(t.num_layers);
  for (std::size_t l = 0; l < t.num_layers; ++l)
    ufac[l] = wsq_[l] * t.scaler(un, l);
  const std::uint64_t* ucodes = t.codes.data() + un * t.num_layers * words;
  const double df = static_cast<double>(t.dim);

  const std::uint64_t* icodes =
      t.codes.data() + t.item_node(0) * t.num_layers * words;
  const double* iscal = t.scalers.data() + t.item_node(0) * t.num_layers;
  for (std::uint32_t i = 0; i < t.num_items; ++i) {
    double score = 0.0;
    const std::uint64_t* ic = icodes + static_cast<std::size_t>(i) *
                                           t.num_layers * words;
    const double* is = iscal + static_cast<std::size_t>(i) * t.num_layers;
    for (std::size_t l = 0; l < t.num_layers; ++l) {
      const std::uint64_t* a = ucodes + l * words;
      const std::uint64_t* b = ic + l * words;
      std::int64_t agree = 0;
      for (std::size_t w = 0; w + 1 < words; ++w)
        agree += std::popcount(~(a[w] ^ b[w]));
      agree += std::popcount((~(a[words - 1] ^ b[words - 1])) & mask);
      score += ufac[l] * is[l] * (2.0 * static_cast<double>(agree) - df);
    }
    out[i] = score;
  }
}

void BinaryScorer::all_items(std::uint32_t u, ScorePath path,
                             std::span<double> out) const {
  switch (path) {
    case ScorePath::BinaryFloat: all_items_float(u, out); return;
    case ScorePath::Bitwise: all_items_bitwise(u, out); return;
    case ScorePath::Full:
      throw std::invalid_argument(
          "full path needs full-precision layers, not a binarized table");
  }
}

void score_all_items_full(const LayerOutputs& layers, std::uint32_t num_users,
                          std::uint32_t u, const LayerWeights& weights,
                          std::span<double> out) {
  const std::size_t num_items = layers.layers[0].rows - num_users;
  for (std::size_t i = 0; i < num_items; ++i)
    out[i] = score_full(layers, u, num_users + i, weights);
}

namespace {

std::vector<std::uint32_t> rank_candidates(std::span<const double> scores,
                                           std::size_t k,
                                           std::vector<std::uint32_t> cand) {
  const auto better = [&scores](std::uint32_t a, std::uint32_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  k = std::min(k, cand.size());
  std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), better);
  cand.resize(k);
  return cand;
}

}  // namespace

std::vector<std::uint32_t> top_k(std::span<const double> scores,
                                 std::size_t k,
                                 std::span<const std::uint32_t> exclude_sorted) {
  std::vector<std::uint32_t> cand;
  cand.reserve(scores.size());
  for (std::uint32_t i = 0; i < scores.size(); ++i)
    if (!std::binary_search(exclude_sorted.begin(), exclude_sorted.end(), i))
      cand.push_back(i);
  return rank_candidates(scores, k, std::move(cand));
}

std::vector<std::uint32_t> top_k_masked(
    std::span<const double> scores, std::size_t k,
    const std::vector<std::uint8_t>& excluded) {
  std::vector<std::uint32_t> cand;
  cand.reserve(scores.size());
  for (std::uint32_t i = 0; i < scores.size(); ++i)
    if (!excluded[i]) cand.push_back(i);
  return rank_candidates(scores, k, std::move(cand));
}

}  // namespace bitgear
