#pragma once

#include "layoutgen/types.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace layoutgen {

using Edge = std::pair<int, int>;

/// Immutable undirected simple graph.
///
/// Construction canonicalizes the edge list: each edge is stored once as
/// (u, v) with u < v, self-loops are dropped (and counted) and duplicates
/// collapse. Node indices are dense in [0, n).
class Graph {
 public:
  Graph() = default;
  Graph(std::size_t node_count, std::span<const Edge> edges, std::vector<std::string> labels = {});

  std::size_t node_count() const noexcept { return adjacency_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::span<const int> neighbors(int v) const { return adjacency_[static_cast<std::size_t>(v)]; }
  std::size_t degree(int v) const { return adjacency_[static_cast<std::size_t>(v)].size(); }
  bool has_edge(int u, int v) const;
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::size_t dropped_self_loops() const noexcept { return dropped_self_loops_; }

  // Index of each node in the graph this one was derived from (identity for
  // loaded graphs, the kept node ids after largest_component).
  const std::vector<int>& source_index() const noexcept { return source_index_; }

  bool is_connected() const;

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.edges_ == b.edges_ && a.adjacency_.size() == b.adjacency_.size() && a.labels_ == b.labels_;
  }

 private:
  friend Graph largest_component(const Graph& g);

  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
  std::vector<std::string> labels_;
  std::vector<int> source_index_;
  std::size_t dropped_self_loops_ = 0;
};

enum class GraphFormat { edge_list, matrix_market, json };

Graph load_graph(std::istream& in, GraphFormat format);
Graph load_graph(const std::string& text, GraphFormat format);

// Picks the format from the extension: .mtx, .json, anything else edge list.
Graph load_graph_file(const std::filesystem::path& path);

/// Induced subgraph on the largest connected component. Ties are broken by
/// the smallest node id. Kept nodes retain their relative order.
Graph largest_component(const Graph& g);

/// Structural-equivalence classes of a graph.
///
/// Two nodes u != v are equivalent iff N(u) \ {v} == N(v) \ {u}: either they
/// are non-adjacent with identical neighbour sets, or adjacent with identical
/// closed neighbourhoods. Swapping two members of a class is an automorphism.
struct SenPartition {
  std::vector<int> class_of;
  std::vector<std::vector<int>> classes;  // each sorted, ordered by smallest member
  std::size_t nontrivial_count = 0;       // nodes in classes of size >= 2

  std::size_t class_count() const noexcept { return classes.size(); }
};

SenPartition structural_equivalence(const Graph& g);

// n x n identity, the per-node one-hot identity features.
Matrix one_hot_features(const Graph& g);

}  // namespace layoutgen
