#include "bitgear/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "bitgear/parallel.hpp"
#include "bitgear/scoring.hpp"

#include "json.hpp"

namespace bitgear {

double recall_at_k(std::span<const std::uint32_t> ranked,
                   std::span<const std::uint32_t> relevant_sorted,
                   std::size_t k) {
  if (relevant_sorted.empty())
    throw std::domain_error("recall of an empty relevant set");
  const std::size_t upto = std::min(k, ranked.size());
  std::size_t hits = 0;
  for (std::size_t p = 0; p < upto; ++p)
    if (std::binary_search(relevant_sorted.begin(), relevant_sorted.end(),
                           ranked[p]))
      ++hits;
  return static_cast<double>(hits) /
         static_cast<double>(relevant_sorted.size());
}

double ndcg_at_k(std::span<const std::uint32_t> ranked,
                 std::span<const std::uint32_t> relevant_sorted,
                 std::size_t k) {
  if (relevant_sorted.empty())
    throw std::domain_error("ndcg of an empty relevant set");
  const std::size_t upto = std::min(k, ranked.size());
  double dcg = 0.0;
  for (std::size_t p = 0; p < upto; ++p) {
    if (std::binary_search(relevant_sorted.begin(), relevant_sorted.end(),
                           ranked[p]))
      dcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  }
  const std::size_t ideal = std::min(k, relevant_sorted.size());
  double idcg = 0.0;
  for (std::size_t p = 0; p < ideal; ++p)
    idcg += 1.0 / std::log2(static_cast<double>(p) + 2.0);
  return dcg / idcg;
}

std::string MetricReport::to_tsv() const {
  std::ostringstream os;
  os << "K\trecall\tndcg\n";
  for (std::size_t j = 0; j < ks.size(); ++j)
    os << ks[j] << '\t' << recall[j] << '\t' << ndcg[j] << '\n';
  return os.str();
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  j["users_evaluated"] = users_evaluated;
  j["seconds"] = seconds;
  j["metrics"] = nlohmann::json::array();
  for (std::size_t i = 0; i < ks.size(); ++i)
    j["metrics"].push_back(
        {{"k", ks[i]}, {"recall", recall[i]}, {"ndcg", ndcg[i]}});
  return j.dump(2);
}

MetricReport evaluate(const ItemScoreFn& score_fn,
                      const InteractionGraph& graph, const DatasetSplit& split,
                      std::span<const std::size_t> ks, std::size_t threads) {
  const auto start = std::chrono::steady_clock::now();
  const std::uint32_t num_items = graph.num_items();
  std::size_t max_k = 0;
  for (std::size_t k : ks) max_k = std::max(max_k, k);
  if (max_k == 0) throw std::invalid_argument("K must be >= 1");

  // Items unseen in training cannot be ranked by propagation; keep them out
  // of every candidate set and every relevant set.
  std::vector<std::uint8_t> orphan_item(num_items, 0);
  for (std::uint32_t i : split.orphan_items) orphan_item[i] = 1;

  std::vector<std::uint32_t> users;
  std::vector<std::vector<std::uint32_t>> relevant;
  for (std::uint32_t u = 0; u < graph.num_users(); ++u) {
    if (split.test_items[u].empty()) continue;
    if (graph.user_degree(u) == 0) continue;  // test-only user
    std::vector<std::uint32_t> rel;
    for (std::uint32_t i : split.test_items[u])
      if (!orphan_item[i]) rel.push_back(i);
    if (rel.empty()) continue;
    users.push_back(u);
    relevant.push_back(std::move(rel));
  }

  // Per-user slots reduced in user order afterwards, so the report is
  // bit-identical for any thread count.
  std::vector<double> recall_user(users.size() * ks.size(), 0.0);
  std::vector<double> ndcg_user(users.size() * ks.size(), 0.0);
  const std::size_t workers = std::max<std::size_t>(threads, 1);

  parallel_chunks(0, users.size(), workers,
                  [&](std::size_t, std::size_t lo, std::size_t hi) {
    std::vector<double> scores(num_items);
    std::vector<std::uint8_t> excluded(num_items);
    for (std::size_t idx = lo; idx < hi; ++idx) {
      const std::uint32_t u = users[idx];
      score_fn(u, scores);
      excluded.assign(orphan_item.begin(), orphan_item.end());
      for (std::uint32_t i : graph.items_of(u)) excluded[i] = 1;
      const auto ranked = top_k_masked(scores, max_k, excluded);
      for (std::size_t j = 0; j < ks.size(); ++j) {
        recall_user[idx * ks.size() + j] =
            recall_at_k(ranked, relevant[idx], ks[j]);
        ndcg_user[idx * ks.size() + j] =
            ndcg_at_k(ranked, relevant[idx], ks[j]);
      }
    }
  });
  std::vector<double> recall_sums(ks.size(), 0.0);
  std::vector<double> ndcg_sums(ks.size(), 0.0);
  for (std::size_t idx = 0; idx < users.size(); ++idx)
    for (std::size_t j = 0; j < ks.size(); ++j) {
      recall_sums[j] += recall_user[idx * ks.size() + j];
      ndcg_sums[j] += ndcg_user[idx * ks.size() + j];
    }

  MetricReport report;
  report.ks.assign(ks.begin(), ks.end());
  report.users_evaluated = users.size();
  report.recall.resize(ks.size(), 0.0);
  report.ndcg.resize(ks.size(), 0.0);
  if (!users.empty()) {
    for (std::size_t j = 0; j < ks.size(); ++j) {
      report.recall[j] = recall_sums[j] / static_cast<double>(users.size());
      report.ndcg[j] = ndcg_sums[j] / static_cast<double>(users.size());
    }
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

}  // namespace bitgear
