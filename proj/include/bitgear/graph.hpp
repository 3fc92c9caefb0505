#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace bitgear {

enum class NormMode { Symmetric, Left };

// Bipartite user-item graph in CSR form over both sides. Immutable after
// construction; adjacency lists are sorted and duplicate-free so membership
// checks are binary searches.
class InteractionGraph {
 public:
  InteractionGraph() = default;

  // Edges may contain duplicates; they are collapsed. Indices must lie in
  // [0, num_users) x [0, num_items). Nodes without edges are allowed (they
  // simply have degree 0).
  static InteractionGraph from_edges(
      std::uint32_t num_users, std::uint32_t num_items,
      std::vector<std::pair<std::uint32_t, std::uint32_t>> edges);

  std::uint32_t num_users() const { return num_users_; }
  std::uint32_t num_items() const { return num_items_; }
  std::size_t num_nodes() const {
    return static_cast<std::size_t>(num_users_) + num_items_;
  }
  std::size_t num_edges() const { return user_items_.size(); }

  std::span<const std::uint32_t> items_of(std::uint32_t u) const {
    return {user_items_.data() + user_offsets_[u],
            user_items_.data() + user_offsets_[u + 1]};
  }
  std::span<const std::uint32_t> users_of(std::uint32_t i) const {
    return {item_users_.data() + item_offsets_[i],
            item_users_.data() + item_offsets_[i + 1]};
  }
  std::size_t user_degree(std::uint32_t u) const {
    return user_offsets_[u + 1] - user_offsets_[u];
  }
  std::size_t item_degree(std::uint32_t i) const {
    return item_offsets_[i + 1] - item_offsets_[i];
  }
  bool user_has_item(std::uint32_t u, std::uint32_t i) const;

  // Edge k in sampling order; k in [0, num_edges).
  std::pair<std::uint32_t, std::uint32_t> edge(std::size_t k) const {
    return {edge_users_[k], user_items_[k]};
  }

 private:
  std::uint32_t num_users_ = 0;
  std::uint32_t num_items_ = 0;
  std::vector<std::size_t> user_offsets_;  // M+1
  std::vector<std::uint32_t> user_items_;  // E, sorted per user
  std::vector<std::size_t> item_offsets_;  // N+1
  std::vector<std::uint32_t> item_users_;  // E, sorted per item
  std::vector<std::uint32_t> edge_users_;  // owner of user_items_[k]
};

// Coefficient applied to neighbor i when aggregating into user u.
double user_item_coefficient(const InteractionGraph& g, std::uint32_t u,
                             std::uint32_t i, NormMode mode);
// Coefficient applied to neighbor u when aggregating into item i.
double item_user_coefficient(const InteractionGraph& g, std::uint32_t i,
                             std::uint32_t u, NormMode mode);

struct DatasetSplit {
  // Per user, sorted held-out items. Sized num_users (empty vectors allowed).
  std::vector<std::vector<std::uint32_t>> test_items;
  // Nodes referenced only by the test file (train degree 0). They stay in
  // the index but cannot be ranked by propagation alone.
  std::vector<std::uint32_t> orphan_users;
  std::vector<std::uint32_t> orphan_items;
  std::size_t test_edge_count = 0;
};

struct LoadReport {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t train_edges = 0;
  std::size_t test_edges = 0;
  std::size_t orphan_test_nodes = 0;
  std::string to_key_values() const;
};

enum class EdgeFormat {
  Auto,   // Pairs when every line has exactly two tokens, else Multi
  Pairs,  // <user> <item> [ignored...]
  Multi,  // <user> <item1> <item2> ...
};

struct LoadOptions {
  EdgeFormat format = EdgeFormat::Auto;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t line)
      : std::runtime_error(msg + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// First-seen dense reindexing of arbitrary string ids.
class IdIndex {
 public:
  std::uint32_t get_or_add(std::string_view token);
  std::optional<std::uint32_t> find(std::string_view token) const;
  const std::string& token(std::uint32_t idx) const { return tokens_[idx]; }
  std::uint32_t size() const {
    return static_cast<std::uint32_t>(tokens_.size());
  }

 private:
  std::unordered_map<std::string, std::uint32_t> map_;
  std::vector<std::string> tokens_;
};

struct LoadResult {
  InteractionGraph graph;  // built from train edges only
  DatasetSplit split;
  IdIndex user_ids;
  IdIndex item_ids;
  LoadReport report;
};

LoadResult load_edge_list(const std::string& train_path,
                          const std::optional<std::string>& test_path,
                          const LoadOptions& options = {});
LoadResult load_edge_list_text(std::string_view train_text,
                               std::optional<std::string_view> test_text,
                               const LoadOptions& options = {});

// Pair-per-line dump in adjacency order; reloading reproduces the graph.
void write_edge_list(const InteractionGraph& g, const IdIndex& user_ids,
                     const IdIndex& item_ids, std::ostream& out);

}  // namespace bitgear
