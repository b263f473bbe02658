#ifndef LOSSBENCH_GRAPH_HPP
#define LOSSBENCH_GRAPH_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lossbench/tensor.hpp"

namespace lossbench {

constexpr int kNoLabel = -1;

/// Immutable sparse graph: symmetric CSR adjacency, node features, labels.
struct Graph {
  std::size_t n = 0;
  std::vector<std::size_t> adj_ptr;                     // CSR offsets, size n+1
  std::vector<std::size_t> adj;                         // sorted neighbor lists
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // unique undirected, u < v
  Tensor features;                                      // n x d_in
  std::vector<int> labels;                              // kNoLabel when absent
  std::string name;
  bool directed_source = false;

  std::size_t degree(std::size_t i) const { return adj_ptr[i + 1] - adj_ptr[i]; }
  std::span<const std::size_t> neighbors(std::size_t i) const {
    return {adj.data() + adj_ptr[i], degree(i)};
  }
  bool has_edge(std::size_t u, std::size_t v) const {
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }
  std::size_t num_edges() const { return edges.size(); }
  std::size_t feature_dim() const { return features.cols; }

  std::size_t num_classes() const {
    int mx = -1;
    for (int l : labels) mx = std::max(mx, l);
    return static_cast<std::size_t>(mx + 1);
  }
  bool has_labels() const {
    for (int l : labels)
      if (l != kNoLabel) return true;
    return false;
  }

  /// Symmetrizes, dedupes, and drops self-loops.
  static Graph from_edge_list(std::size_t n,
                              const std::vector<std::pair<std::size_t, std::size_t>>& raw,
                              Tensor features, std::vector<int> labels, std::string name = "",
                              bool directed_source = false) {
    Graph g;
    g.n = n;
    g.features = std::move(features);
    g.labels = std::move(labels);
    g.name = std::move(name);
    g.directed_source = directed_source;
    std::set<std::pair<std::size_t, std::size_t>> uniq;
    for (auto [u, v] : raw) {
      if (u >= n || v >= n) throw std::invalid_argument("from_edge_list: endpoint out of range");
      if (u == v) continue;
      uniq.emplace(std::min(u, v), std::max(u, v));
    }
    g.edges.assign(uniq.begin(), uniq.end());
    std::vector<std::size_t> deg(n, 0);
    for (auto [u, v] : g.edges) {
      deg[u]++;
      deg[v]++;
    }
    g.adj_ptr.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) g.adj_ptr[i + 1] = g.adj_ptr[i] + deg[i];
    g.adj.resize(g.adj_ptr[n]);
    std::vector<std::size_t> fill(g.adj_ptr.begin(), g.adj_ptr.end() - 1);
    for (auto [u, v] : g.edges) {
      g.adj[fill[u]++] = v;
      g.adj[fill[v]++] = u;
    }
    for (std::size_t i = 0; i < n; ++i)
      std::sort(g.adj.begin() + static_cast<std::ptrdiff_t>(g.adj_ptr[i]),
                g.adj.begin() + static_cast<std::ptrdiff_t>(g.adj_ptr[i + 1]));
    return g;
  }
};

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return in;
}

}  // namespace detail

/// Canonical node-table ingestion. Nodes file is TSV with header
/// `id<TAB>f0..f{d-1}<TAB>label` (`-` = unlabeled); edges file is TSV
/// `src<TAB>dst` with `#` comments. Node ids are remapped to 0..n-1 in
/// file order; edges are symmetrized and self-loops dropped.
inline Graph load_node_table(const std::string& nodes_path, const std::string& edges_path,
                             const std::string& name = "") {
  auto in = detail::open_or_throw(nodes_path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(nodes_path + ": empty file");
  const std::size_t ncols = detail::split(line, '\t').size();
  if (ncols < 3) throw std::runtime_error(nodes_path + ": need id, features, label columns");
  const std::size_t d_in = ncols - 2;

  std::unordered_map<std::string, std::size_t> id_map;
  std::vector<std::vector<double>> feats;
  std::vector<std::string> label_tokens;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() != ncols)
      throw std::runtime_error(nodes_path + ":" + std::to_string(lineno) + ": ragged row (" +
                               std::to_string(cols.size()) + " columns, expected " +
                               std::to_string(ncols) + ")");
    id_map.emplace(cols[0], feats.size());
    std::vector<double> row(d_in);
    for (std::size_t j = 0; j < d_in; ++j) row[j] = std::stod(cols[1 + j]);
    feats.push_back(std::move(row));
    label_tokens.push_back(cols.back());
  }
  const std::size_t n = feats.size();

  // label tokens -> class ids in first-appearance order
  std::vector<int> labels(n, kNoLabel);
  std::unordered_map<std::string, int> cls;
  for (std::size_t i = 0; i < n; ++i) {
    if (label_tokens[i] == "-") continue;
    auto [it, inserted] = cls.emplace(label_tokens[i], static_cast<int>(cls.size()));
    labels[i] = it->second;
  }

  Tensor X(n, d_in);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d_in; ++j) X(i, j) = feats[i][j];

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  auto ein = detail::open_or_throw(edges_path);
  lineno = 0;
  while (std::getline(ein, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto cols = detail::split(line, '\t');
    if (cols.size() < 2)
      throw std::runtime_error(edges_path + ":" + std::to_string(lineno) + ": bad edge row");
    auto su = id_map.find(cols[0]);
    auto sv = id_map.find(cols[1]);
    if (su == id_map.end() || sv == id_map.end())
      throw std::runtime_error(edges_path + ":" + std::to_string(lineno) +
                               ": dangling edge endpoint");
    edges.emplace_back(su->second, sv->second);
  }
  return Graph::from_edge_list(n, edges, std::move(X), std::move(labels),
                               name.empty() ? nodes_path : name);
}

/// Elliptic three-CSV layout: features (no header, txId + 166 columns),
/// edgelist (header txId1,txId2), classes (header txId,class with
/// class in {1=illicit, 2=licit, unknown}).
inline Graph load_elliptic_csv(const std::string& features_path, const std::string& edges_path,
                               const std::string& classes_path) {
  auto fin = detail::open_or_throw(features_path);
  std::string line;
  std::unordered_map<std::string, std::size_t> id_map;
  std::vector<std::vector<double>> feats;
  std::size_t d_in = 0;
  while (std::getline(fin, line)) {
    if (line.empty()) continue;
    auto cols = detail::split(line, ',');
    if (d_in == 0) d_in = cols.size() - 1;
    if (cols.size() != d_in + 1)
      throw std::runtime_error(features_path + ": inconsistent feature row width");
    id_map.emplace(cols[0], feats.size());
    std::vector<double> row(d_in);
    for (std::size_t j = 0; j < d_in; ++j) row[j] = std::stod(cols[1 + j]);
    feats.push_back(std::move(row));
  }
  const std::size_t n = feats.size();
  Tensor X(n, d_in);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d_in; ++j) X(i, j) = feats[i][j];

  std::vector<int> labels(n, kNoLabel);
  auto cin_ = detail::open_or_throw(classes_path);
  std::getline(cin_, line);  // header
  while (std::getline(cin_, line)) {
    if (line.empty()) continue;
    auto cols = detail::split(line, ',');
    auto it = id_map.find(cols[0]);
    if (it == id_map.end()) continue;  // class rows for unseen ids are ignored
    if (cols[1] == "1")
      labels[it->second] = 1;  // illicit
    else if (cols[1] == "2")
      labels[it->second] = 0;  // licit
  }

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  auto ein = detail::open_or_throw(edges_path);
  std::getline(ein, line);  // header
  std::size_t lineno = 1;
  while (std::getline(ein, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto cols = detail::split(line, ',');
    auto su = id_map.find(cols[0]);
    auto sv = id_map.find(cols[1]);
    if (su == id_map.end() || sv == id_map.end())
      throw std::runtime_error(edges_path + ":" + std::to_string(lineno) +
                               ": txId not present in features");
    edges.emplace_back(su->second, sv->second);
  }
  return Graph::from_edge_list(n, edges, std::move(X), std::move(labels), "elliptic",
                               /*directed_source=*/true);
}

/// Induced subgraph on `target_n` nodes found by seeded BFS from a random
/// labeled node; frontier order is randomized. Node ids are remapped to
/// BFS visit order.
inline Graph subgraph_sample(const Graph& g, std::size_t target_n, std::uint64_t seed) {
  if (target_n > g.n) throw std::invalid_argument("subgraph_sample: target_n exceeds node count");
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < g.n; ++i)
    if (g.labels[i] != kNoLabel) labeled.push_back(i);
  if (labeled.empty()) throw std::invalid_argument("subgraph_sample: graph has no labeled node");

  std::mt19937_64 rng(seed);
  std::vector<bool> visited(g.n, false);
  std::vector<std::size_t> order;
  order.reserve(target_n);
  std::vector<std::size_t> queue;
  std::size_t head = 0;

  auto push_start = [&](std::size_t s) {
    visited[s] = true;
    queue.push_back(s);
  };
  push_start(labeled[rng() % labeled.size()]);

  while (order.size() < target_n) {
    if (head == queue.size()) {
      // component exhausted; restart from a random unvisited node
      std::vector<std::size_t> rest;
      for (std::size_t i = 0; i < g.n; ++i)
        if (!visited[i]) rest.push_back(i);
      push_start(rest[rng() % rest.size()]);
    }
    std::size_t u = queue[head++];
    order.push_back(u);
    std::vector<std::size_t> fresh;
    for (std::size_t v : g.neighbors(u))
      if (!visited[v]) {
        visited[v] = true;
        fresh.push_back(v);
      }
    std::shuffle(fresh.begin(), fresh.end(), rng);
    queue.insert(queue.end(), fresh.begin(), fresh.end());
  }

  std::vector<std::size_t> remap(g.n, g.n);
  for (std::size_t k = 0; k < order.size(); ++k) remap[order[k]] = k;

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (auto [u, v] : g.edges)
    if (remap[u] < g.n && remap[v] < g.n) edges.emplace_back(remap[u], remap[v]);

  Tensor X(target_n, g.feature_dim());
  std::vector<int> labels(target_n);
  for (std::size_t k = 0; k < target_n; ++k) {
    for (std::size_t j = 0; j < g.feature_dim(); ++j) X(k, j) = g.features(order[k], j);
    labels[k] = g.labels[order[k]];
  }
  return Graph::from_edge_list(target_n, edges, std::move(X), std::move(labels),
                               g.name + "-sub" + std::to_string(target_n), g.directed_source);
}

/// Held-out edges for link prediction plus an equal number of sampled
/// non-edge pairs.
struct EdgeSplit {
  std::vector<std::pair<std::size_t, std::size_t>> train_edges;
  std::vector<std::pair<std::size_t, std::size_t>> test_pos_edges;
  std::vector<std::pair<std::size_t, std::size_t>> test_neg_pairs;
  double ratio = 0.0;
};

inline EdgeSplit edge_split(const Graph& g, double holdout, std::uint64_t seed) {
  if (holdout <= 0.0 || holdout >= 1.0)
    throw std::invalid_argument("edge_split: holdout must be in (0,1)");
  const std::size_t m = g.num_edges();
  const auto n_test = static_cast<std::size_t>(std::llround(holdout * static_cast<double>(m)));
  if (n_test >= m) throw std::invalid_argument("edge_split: holdout removes all edges");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  EdgeSplit split;
  split.ratio = holdout;
  for (std::size_t k = 0; k < m; ++k) {
    if (k < n_test)
      split.test_pos_edges.push_back(g.edges[perm[k]]);
    else
      split.train_edges.push_back(g.edges[perm[k]]);
  }
  std::sort(split.train_edges.begin(), split.train_edges.end());
  std::sort(split.test_pos_edges.begin(), split.test_pos_edges.end());

  std::set<std::pair<std::size_t, std::size_t>> negs;
  if (g.n >= 2) {
    const std::size_t max_pairs = g.n * (g.n - 1) / 2;
    if (max_pairs - m < n_test) throw std::invalid_argument("edge_split: not enough non-edges");
    while (negs.size() < n_test) {
      std::size_t u = rng() % g.n, v = rng() % g.n;
      if (u == v) continue;
      auto p = std::minmax(u, v);
      std::pair<std::size_t, std::size_t> e{p.first, p.second};
      if (g.has_edge(e.first, e.second)) continue;
      negs.insert(e);
    }
  }
  split.test_neg_pairs.assign(negs.begin(), negs.end());
  return split;
}

/// Training subgraph induced by an edge split (same nodes, train edges only).
inline Graph train_graph(const Graph& g, const EdgeSplit& split) {
  return Graph::from_edge_list(g.n, split.train_edges, g.features, g.labels, g.name + "-train",
                               g.directed_source);
}

}  // namespace lossbench

#endif  // LOSSBENCH_GRAPH_HPP
