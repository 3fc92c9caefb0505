#include "bitgear/graph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

namespace bitgear {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string_view> split_tokens(std::string_view line) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i])))
      ++i;
    std::size_t j = i;
    while (j < line.size() &&
           !std::isspace(static_cast<unsigned char>(line[j])))
      ++j;
    if (j > i) toks.push_back(line.substr(i, j - i));
    i = j;
  }
  return toks;
}

struct RawEdges {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
};

bool is_skippable(std::string_view line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;  // blank
}

EdgeFormat detect_format(std::string_view text) {
  std::size_t pos = 0;
  bool saw_line = false;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                      : nl - pos);
    if (!is_skippable(line)) {
      saw_line = true;
      if (split_tokens(line).size() > 2) return EdgeFormat::Multi;
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  (void)saw_line;
  return EdgeFormat::Pairs;
}

RawEdges parse_edges(std::string_view text, EdgeFormat format,
                     IdIndex& user_ids, IdIndex& item_ids) {
  RawEdges out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    ++line_no;
    const std::size_t nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos
                                                      : nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!is_skippable(line)) {
      const auto toks = split_tokens(line);
      if (toks.size() < 2)
        throw ParseError("expected at least 2 tokens", line_no);
      const std::uint32_t u = user_ids.get_or_add(toks[0]);
      if (format == EdgeFormat::Pairs) {
        out.edges.emplace_back(u, item_ids.get_or_add(toks[1]));
      } else {
        for (std::size_t t = 1; t < toks.size(); ++t)
          out.edges.emplace_back(u, item_ids.get_or_add(toks[t]));
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return out;
}

}  // namespace

std::uint32_t IdIndex::get_or_add(std::string_view token) {
  auto it = map_.find(std::string(token));
  if (it != map_.end()) return it->second;
  const std::uint32_t idx = static_cast<std::uint32_t>(tokens_.size());
  tokens_.emplace_back(token);
  map_.emplace(tokens_.back(), idx);
  return idx;
}

std::optional<std::uint32_t> IdIndex::find(std::string_view token) const {
  auto it = map_.find(std::string(token));
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

InteractionGraph InteractionGraph::from_edges(
    std::uint32_t num_users, std::uint32_t num_items,
    std::vector<std::pair<std::uint32_t, std::uint32_t>> edges) {
  for (const auto& [u, i] : edges) {
    if (u >= num_users || i >= num_items)
      throw std::invalid_argument("edge index out of range");
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  InteractionGraph g;
  g.num_users_ = num_users;
  g.num_items_ = num_items;
  g.user_offsets_.assign(num_users + 1, 0);
  g.item_offsets_.assign(num_items + 1, 0);
  g.user_items_.reserve(edges.size());
  g.edge_users_.reserve(edges.size());
  for (const auto& [u, i] : edges) {
    ++g.user_offsets_[u + 1];
    ++g.item_offsets_[i + 1];
    g.user_items_.push_back(i);
    g.edge_users_.push_back(u);
  }
  for (std::uint32_t u = 0; u < num_users; ++u)
    g.user_offsets_[u + 1] += g.user_offsets_[u];
  for (std::uint32_t i = 0; i < num_items; ++i)
    g.item_offsets_[i + 1] += g.item_offsets_[i];

  g.item_users_.resize(edges.size());
  std::vector<std::size_t> cursor(g.item_offsets_.begin(),
                                  g.item_offsets_.end() - 1);
  for (const auto& [u, i] : edges) g.item_users_[cursor[i]++] = u;
  return g;
}

bool InteractionGraph::user_has_item(std::uint32_t u, std::uint32_t i) const {
  const auto items = items_of(u);
  return std::binary_search(items.begin(), items.end(), i);
}

double user_item_coefficient(const InteractionGraph& g, std::uint32_t u,
                             std::uint32_t i, NormMode mode) {
  const std::size_t du = g.user_degree(u);
  const std::size_t di = g.item_degree(i);
  if (du == 0 || di == 0)
    throw std::domain_error("norm coefficient of a zero-degree node");
  if (mode == NormMode::Symmetric)
    return 1.0 / std::sqrt(static_cast<double>(du) * static_cast<double>(di));
  return 1.0 / static_cast<double>(di);  // depends on the aggregated neighbor
}

double item_user_coefficient(const InteractionGraph& g, std::uint32_t i,
                             std::uint32_t u, NormMode mode) {
  const std::size_t du = g.user_degree(u);
  const std::size_t di = g.item_degree(i);
  if (du == 0 || di == 0)
    throw std::domain_error("norm coefficient of a zero-degree node");
  if (mode == NormMode::Symmetric)
    return 1.0 / std::sqrt(static_cast<double>(du) * static_cast<double>(di));
  return 1.0 / static_cast<double>(du);
}

std::string LoadReport::to_key_values() const {
  std::ostringstream os;
  os << "users=" << users << "\n"
     << "items=" << items << "\n"
     << "train_edges=" << train_edges << "\n"
     << "test_edges=" << test_edges << "\n"
     << "orphan_test_nodes=" << orphan_test_nodes << "\n";
  return os.str();
}

LoadResult load_edge_list_text(std::string_view train_text,
                               std::optional<std::string_view> test_text,
                               const LoadOptions& options) {
  LoadResult res;
  EdgeFormat format = options.format;
  if (format == EdgeFormat::Auto) {
    format = detect_format(train_text);
    if (format == EdgeFormat::Pairs && test_text &&
        detect_format(*test_text) == EdgeFormat::Multi)
      format = EdgeFormat::Multi;
  }

  RawEdges train = parse_edges(train_text, format, res.user_ids, res.item_ids);
  if (train.edges.empty()) throw std::runtime_error("no edges");

  const std::uint32_t train_users = res.user_ids.size();
  const std::uint32_t train_items = res.item_ids.size();

  RawEdges test;
  if (test_text)
    test = parse_edges(*test_text, format, res.user_ids, res.item_ids);

  const std::uint32_t num_users = res.user_ids.size();
  const std::uint32_t num_items = res.item_ids.size();

  res.graph =
      InteractionGraph::from_edges(num_users, num_items, train.edges);

  res.split.test_items.assign(num_users, {});
  if (test_text) {
    std::sort(test.edges.begin(), test.edges.end());
    test.edges.erase(std::unique(test.edges.begin(), test.edges.end()),
                     test.edges.end());
    // train and test must stay disjoint; drop test duplicates of train edges
    for (const auto& [u, i] : test.edges) {
      if (res.graph.user_has_item(u, i)) continue;
      res.split.test_items[u].push_back(i);
      ++res.split.test_edge_count;
    }
  }
  for (std::uint32_t u = train_users; u < num_users; ++u)
    res.split.orphan_users.push_back(u);
  for (std::uint32_t i = train_items; i < num_items; ++i)
    res.split.orphan_items.push_back(i);

  res.report.users = num_users;
  res.report.items = num_items;
  res.report.train_edges = res.graph.num_edges();
  res.report.test_edges = res.split.test_edge_count;
  res.report.orphan_test_nodes =
      res.split.orphan_users.size() + res.split.orphan_items.size();
  return res;
}

LoadResult load_edge_list(const std::string& train_path,
                          const std::optional<std::string>& test_path,
                          const LoadOptions& options) {
  const std::string train_text = read_file(train_path);
  std::optional<std::string> test_text;
  if (test_path) test_text = read_file(*test_path);
  return load_edge_list_text(
      train_text,
      test_text ? std::optional<std::string_view>(*test_text) : std::nullopt,
      options);
}

void write_edge_list(const InteractionGraph& g, const IdIndex& user_ids,
                     const IdIndex& item_ids, std::ostream& out) {
  for (std::uint32_t u = 0; u < g.num_users(); ++u)
    for (std::uint32_t i : g.items_of(u))
      out << user_ids.token(u) << ' ' << item_ids.token(i) << '\n';
}

}  // namespace bitgear
