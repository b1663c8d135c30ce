#include "layoutgen/bundle.hpp"

#include "layoutgen/io.hpp"

#include <boost/crc.hpp>

namespace layoutgen {

namespace {

constexpr std::string_view kMagic = "GLB1";

std::uint32_t crc32(std::string_view data) {
  boost::crc_32_type crc;
  crc.process_bytes(data.data(), data.size());
  return crc.checksum();
}

}  // namespace

ModelBundle make_bundle(const Graph& g, const ModelParams& params, std::string graph_id, int grid_resolution) {
  if (params.config.node_count != g.node_count()) {
    throw std::invalid_argument("model is for " + std::to_string(params.config.node_count) + " nodes, graph has " +
                                std::to_string(g.node_count()));
  }
  ModelBundle b;
  b.graph_id = std::move(graph_id);
  b.graph = g;
  b.partition = structural_equivalence(g);
  b.params = params;
  b.grid_resolution = grid_resolution;
  if (grid_resolution > 0) {
    const GraphContext ctx = GraphContext::from(g);
    b.grid = decode_batch(ctx, params, latent_grid(grid_resolution));
  }
  return b;
}

std::string encode_bundle(const ModelBundle& b) {
  std::string payload;
  io::Writer w(payload);
  w.str(b.graph_id);
  w.u64(b.graph.node_count());
  w.u64(b.graph.edge_count());
  for (const auto& [u, v] : b.graph.edges()) {
    w.u32(static_cast<std::uint32_t>(u));
    w.u32(static_cast<std::uint32_t>(v));
  }
  w.u64(b.graph.labels().size());
  for (const std::string& l : b.graph.labels()) w.str(l);
  for (int c : b.partition.class_of) w.u32(static_cast<std::uint32_t>(c));
  io::write_model(w, b.params);
  w.u32(static_cast<std::uint32_t>(b.grid_resolution));
  w.u64(b.grid.size());
  for (const Positions& p : b.grid) w.matrix_f64(p);
  w.u64(b.heatmaps.size());
  for (const auto& [key, grid] : b.heatmaps) {
    w.str(metric_name(key.first));
    w.u32(static_cast<std::uint32_t>(key.second));
    w.matrix_f64(grid);
  }

  std::string out;
  io::Writer head(out);
  head.bytes(kMagic.data(), kMagic.size());
  head.u64(payload.size());
  head.bytes(payload.data(), payload.size());
  head.u32(crc32(payload));
  return out;
}

ModelBundle decode_bundle(std::string_view data) {
  if (data.size() < kMagic.size()) throw BundleChecksumError("bundle is truncated (no header)");
  const std::string_view magic = data.substr(0, kMagic.size());
  if (magic != kMagic) {
    if (magic.substr(0, 3) == "GLB") {
      throw BundleVersionError("bundle version '" + std::string(magic) + "' is not supported (expected GLB1)");
    }
    throw FormatError("not a model bundle (bad magic)");
  }
  io::Reader head(data.substr(kMagic.size()));
  if (head.remaining() < 8) throw BundleChecksumError("bundle is truncated (no length)");
  const std::uint64_t length = head.u64();
  if (head.remaining() < 4 || length > head.remaining() - 4) {
    throw BundleChecksumError("bundle is truncated: checksum cannot be verified");
  }
  const std::string_view payload = data.substr(kMagic.size() + 8, length);
  io::Reader tail(data.substr(kMagic.size() + 8 + length));
  const std::uint32_t stored = tail.u32();
  if (!tail.done()) throw BundleChecksumError("bundle has trailing bytes after the checksum");
  if (stored != crc32(payload)) throw BundleChecksumError("bundle checksum mismatch");

  io::Reader r(payload);
  ModelBundle b;
  b.graph_id = r.str();
  const std::uint64_t n = r.u64(), m = r.u64();
  std::vector<Edge> edges;
  edges.reserve(m);
  for (std::uint64_t i = 0; i < m; ++i) {
    const auto u = static_cast<int>(r.u32());
    const auto v = static_cast<int>(r.u32());
    edges.emplace_back(u, v);
  }
  std::vector<std::string> labels(r.u64());
  for (std::string& l : labels) l = r.str();
  b.graph = Graph(n, edges, std::move(labels));
  b.partition = structural_equivalence(b.graph);
  for (std::uint64_t v = 0; v < n; ++v) {
    if (static_cast<int>(r.u32()) != b.partition.class_of[v]) {
      throw FormatError("bundle equivalence classes disagree with its graph");
    }
  }
  b.params = io::read_model(r);
  if (b.params.config.node_count != n) throw FormatError("bundle model and graph sizes differ");
  b.grid_resolution = static_cast<int>(r.u32());
  b.grid.resize(r.u64());
  if (b.grid.size() != static_cast<std::size_t>(b.grid_resolution) * static_cast<std::size_t>(b.grid_resolution)) {
    throw FormatError("bundle grid has the wrong number of layouts");
  }
  for (Positions& p : b.grid) p = r.matrix_f64();
  const std::uint64_t maps = r.u64();
  for (std::uint64_t i = 0; i < maps; ++i) {
    const Metric metric = metric_from_name(r.str());
    const auto res = static_cast<int>(r.u32());
    b.heatmaps[{metric, res}] = r.matrix_f64();
  }
  if (!r.done()) throw FormatError("bundle payload has trailing bytes");
  return b;
}

void save_bundle(const ModelBundle& b, const std::filesystem::path& path) { io::write_file(path, encode_bundle(b)); }

ModelBundle load_bundle(const std::filesystem::path& path) { return decode_bundle(io::read_file(path)); }

}  // namespace layoutgen
