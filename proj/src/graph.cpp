#include "layoutgen/graph.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace layoutgen {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

long long parse_index(std::string_view token, std::size_t line_no) {
  long long value = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc{} || ptr != token.data() + token.size()) {
    throw ParseError("expected integer node id, got '" + std::string(token) + "'", line_no);
  }
  return value;
}

bool is_number(std::string_view token) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  return ec == std::errc{} && ptr == token.data() + token.size();
}

// "# node <id> <label>" comment lines name nodes.
void read_label_comment(std::string_view comment, std::map<long long, std::string>& labels) {
  auto tokens = split_ws(comment);
  if (tokens.size() < 3 || tokens[0] != "node") return;
  long long id = 0;
  auto [ptr, ec] = std::from_chars(tokens[1].data(), tokens[1].data() + tokens[1].size(), id);
  if (ec != std::errc{} || ptr != tokens[1].data() + tokens[1].size() || id < 0) return;
  const std::size_t start = static_cast<std::size_t>(tokens[2].data() - comment.data());
  std::string_view rest = comment.substr(start);
  while (!rest.empty() && std::isspace(static_cast<unsigned char>(rest.back()))) rest.remove_suffix(1);
  labels[id] = std::string(rest);
}

Graph parse_edge_list(std::istream& in) {
  std::vector<Edge> edges;
  std::map<long long, std::string> named;
  long long max_id = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (!view.empty() && view.front() == '#') read_label_comment(view.substr(1), named);
    if (auto hash = view.find_first_of("#%"); hash != std::string_view::npos) view = view.substr(0, hash);
    auto tokens = split_ws(view);
    if (tokens.empty()) continue;
    if (tokens.size() < 2) throw ParseError("expected 'u v' pair", line_no);
    // A trailing weight column is tolerated and ignored.
    for (std::size_t t = 2; t < tokens.size(); ++t) {
      if (!is_number(tokens[t])) throw ParseError("unexpected token '" + std::string(tokens[t]) + "'", line_no);
    }
    const long long u = parse_index(tokens[0], line_no);
    const long long v = parse_index(tokens[1], line_no);
    if (u < 0 || v < 0) throw ParseError("negative node id", line_no);
    if (u > std::numeric_limits<int>::max() - 1 || v > std::numeric_limits<int>::max() - 1) {
      throw ParseError("node id out of range", line_no);
    }
    max_id = std::max({max_id, u, v});
    edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
  }
  if (max_id < 0) throw ParseError("empty graph", 0);
  std::vector<std::string> labels;
  if (!named.empty()) {
    // Labels only apply when every node is named.
    if (named.size() == static_cast<std::size_t>(max_id + 1) && named.rbegin()->first == max_id) {
      for (auto& [id, name] : named) labels.push_back(std::move(name));
    }
  }
  return Graph(static_cast<std::size_t>(max_id + 1), edges, std::move(labels));
}

Graph parse_matrix_market(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError("empty graph", 0);
  ++line_no;
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
  };
  if (banner != "%%MatrixMarket" || lower(object) != "matrix") throw ParseError("missing MatrixMarket banner", line_no);
  if (lower(format) != "coordinate") throw ParseError("only coordinate matrices are supported", line_no);
  field = lower(field);
  if (field != "pattern" && field != "real" && field != "integer") {
    throw ParseError("unsupported field '" + field + "'", line_no);
  }
  if (lower(symmetry) != "symmetric") throw ParseError("only symmetric matrices are supported", line_no);

  long long rows = -1, cols = -1, entries = -1;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_ws(line);
    if (tokens.empty() || tokens[0].front() == '%') continue;
    if (tokens.size() < 3) throw ParseError("expected 'rows cols entries'", line_no);
    rows = parse_index(tokens[0], line_no);
    cols = parse_index(tokens[1], line_no);
    entries = parse_index(tokens[2], line_no);
    break;
  }
  if (rows < 0) throw ParseError("missing size line", line_no);
  if (rows != cols) throw ParseError("adjacency matrix must be square", line_no);
  if (rows == 0) throw ParseError("empty graph", line_no);

  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(std::max<long long>(entries, 0)));
  const std::size_t expected_tokens = field == "pattern" ? 2 : 3;
  while (std::getline(in, line)) {
    ++line_no;
    auto tokens = split_ws(line);
    if (tokens.empty() || tokens[0].front() == '%') continue;
    if (tokens.size() < expected_tokens) throw ParseError("truncated entry", line_no);
    const long long i = parse_index(tokens[0], line_no);
    const long long j = parse_index(tokens[1], line_no);
    if (i < 1 || j < 1 || i > rows || j > cols) throw ParseError("index out of range", line_no);
    if (expected_tokens == 3 && !is_number(tokens[2])) throw ParseError("malformed value", line_no);
    edges.emplace_back(static_cast<int>(i - 1), static_cast<int>(j - 1));
  }
  if (entries >= 0 && static_cast<long long>(edges.size()) != entries) {
    throw ParseError("expected " + std::to_string(entries) + " entries, found " + std::to_string(edges.size()), line_no);
  }
  return Graph(static_cast<std::size_t>(rows), edges);
}

Graph parse_json(std::istream& in) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed json: ") + e.what(), 0);
  }
  if (!doc.is_object() || !doc.contains("nodes") || !doc.contains("edges")) {
    throw ParseError("json graph needs 'nodes' and 'edges'", 0);
  }
  if (!doc["nodes"].is_number_integer() || doc["nodes"].get<long long>() < 0) {
    throw ParseError("'nodes' must be a non-negative integer", 0);
  }
  const auto n = doc["nodes"].get<long long>();
  if (n == 0) throw ParseError("empty graph", 0);
  std::vector<Edge> edges;
  for (std::size_t k = 0; k < doc["edges"].size(); ++k) {
    const auto& e = doc["edges"][k];
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer()) {
      throw ParseError("edge " + std::to_string(k) + " is not a [u, v] pair", 0);
    }
    const auto u = e[0].get<long long>();
    const auto v = e[1].get<long long>();
    if (u < 0 || v < 0 || u >= n || v >= n) throw ParseError("edge " + std::to_string(k) + " out of range", 0);
    edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
  }
  std::vector<std::string> labels;
  if (doc.contains("labels")) {
    labels = doc["labels"].get<std::vector<std::string>>();
    if (static_cast<long long>(labels.size()) != n) throw ParseError("'labels' length must equal 'nodes'", 0);
  }
  return Graph(static_cast<std::size_t>(n), edges, std::move(labels));
}

}  // namespace

Graph::Graph(std::size_t node_count, std::span<const Edge> edges, std::vector<std::string> labels)
    : adjacency_(node_count), labels_(std::move(labels)), source_index_(node_count) {
  if (!labels_.empty() && labels_.size() != node_count) throw std::invalid_argument("label count != node count");
  std::iota(source_index_.begin(), source_index_.end(), 0);
  edges_.reserve(edges.size());
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= node_count || static_cast<std::size_t>(v) >= node_count) {
      throw std::out_of_range("edge endpoint out of range");
    }
    if (u == v) {
      ++dropped_self_loops_;
      continue;
    }
    edges_.emplace_back(std::min(u, v), std::max(u, v));
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  for (auto [u, v] : edges_) {
    adjacency_[static_cast<std::size_t>(u)].push_back(v);
    adjacency_[static_cast<std::size_t>(v)].push_back(u);
  }
  for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
}

bool Graph::has_edge(int u, int v) const {
  if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= node_count() || static_cast<std::size_t>(v) >= node_count()) {
    return false;
  }
  const auto nbrs = neighbors(u);
  return std::binary_search(nbrs.begin(), nbrs.end(), v);
}

bool Graph::is_connected() const {
  if (node_count() == 0) return false;
  std::vector<char> seen(node_count(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  std::size_t visited = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (int u : neighbors(v)) {
      if (!seen[static_cast<std::size_t>(u)]) {
        seen[static_cast<std::size_t>(u)] = 1;
        ++visited;
        stack.push_back(u);
      }
    }
  }
  return visited == node_count();
}

Graph load_graph(std::istream& in, GraphFormat format) {
  switch (format) {
    case GraphFormat::edge_list: return parse_edge_list(in);
    case GraphFormat::matrix_market: return parse_matrix_market(in);
    case GraphFormat::json: return parse_json(in);
  }
  throw std::invalid_argument("unknown graph format");
}

Graph load_graph(const std::string& text, GraphFormat format) {
  std::istringstream in(text);
  return load_graph(in, format);
}

Graph load_graph_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open graph file " + path.string());
  const auto ext = path.extension().string();
  GraphFormat format = GraphFormat::edge_list;
  if (ext == ".mtx") format = GraphFormat::matrix_market;
  if (ext == ".json") format = GraphFormat::json;
  return load_graph(in, format);
}

Graph largest_component(const Graph& g) {
  const std::size_t n = g.node_count();
  if (n == 0) throw std::invalid_argument("largest_component of an empty graph");
  std::vector<int> comp(n, -1);
  std::vector<std::size_t> sizes;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    const int id = static_cast<int>(sizes.size());
    sizes.push_back(0);
    std::vector<int> stack{static_cast<int>(s)};
    comp[s] = id;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      ++sizes.back();
      for (int u : g.neighbors(v)) {
        if (comp[static_cast<std::size_t>(u)] < 0) {
          comp[static_cast<std::size_t>(u)] = id;
          stack.push_back(u);
        }
      }
    }
  }
  // max_element returns the first maximum, i.e. the component holding the smallest id.
  const int best = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  if (sizes.size() == 1) return g;

  std::vector<int> new_index(n, -1);
  std::vector<int> kept;
  for (std::size_t v = 0; v < n; ++v) {
    if (comp[v] == best) {
      new_index[v] = static_cast<int>(kept.size());
      kept.push_back(static_cast<int>(v));
    }
  }
  std::vector<Edge> edges;
  for (auto [u, v] : g.edges()) {
    if (comp[static_cast<std::size_t>(u)] == best) {
      edges.emplace_back(new_index[static_cast<std::size_t>(u)], new_index[static_cast<std::size_t>(v)]);
    }
  }
  std::vector<std::string> labels;
  if (!g.labels().empty()) {
    for (int v : kept) labels.push_back(g.labels()[static_cast<std::size_t>(v)]);
  }
  Graph out(kept.size(), edges, std::move(labels));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    out.source_index_[i] = g.source_index()[static_cast<std::size_t>(kept[i])];
  }
  return out;
}

SenPartition structural_equivalence(const Graph& g) {
  const std::size_t n = g.node_count();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  };

  // Non-adjacent twins share the open neighbourhood, adjacent twins the
  // closed one. No node can have both kinds of twin, so the union of the two
  // groupings is the twin relation itself.
  std::map<std::vector<int>, int> open_groups, closed_groups;
  for (std::size_t v = 0; v < n; ++v) {
    const auto nbrs = g.neighbors(static_cast<int>(v));
    std::vector<int> open(nbrs.begin(), nbrs.end());
    std::vector<int> closed = open;
    closed.insert(std::lower_bound(closed.begin(), closed.end(), static_cast<int>(v)), static_cast<int>(v));
    auto [it_open, fresh_open] = open_groups.emplace(std::move(open), static_cast<int>(v));
    if (!fresh_open) unite(it_open->second, static_cast<int>(v));
    auto [it_closed, fresh_closed] = closed_groups.emplace(std::move(closed), static_cast<int>(v));
    if (!fresh_closed) unite(it_closed->second, static_cast<int>(v));
  }

  SenPartition part;
  part.class_of.assign(n, -1);
  std::vector<int> class_of_root(n, -1);
  for (std::size_t v = 0; v < n; ++v) {
    const int root = find(static_cast<int>(v));
    int& cls = class_of_root[static_cast<std::size_t>(root)];
    if (cls < 0) {
      cls = static_cast<int>(part.classes.size());
      part.classes.emplace_back();
    }
    part.class_of[v] = cls;
    part.classes[static_cast<std::size_t>(cls)].push_back(static_cast<int>(v));
  }
  for (const auto& c : part.classes) {
    if (c.size() >= 2) part.nontrivial_count += c.size();
  }
  return part;
}

Matrix one_hot_features(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  return Matrix::Identity(n, n);
}

}  // namespace layoutgen
