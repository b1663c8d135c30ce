#pragma once

// GLB1 bundle: everything the inference service needs for one graph.
//
//   "GLB1" | u64 payload length | payload | u32 CRC-32 of payload
//
// The payload holds the graph, its structural-equivalence classes, the GLM1
// model, the precomputed sample grid (float64, decode-exact) and any cached
// heatmaps.

#include "layoutgen/graph.hpp"
#include "layoutgen/metrics.hpp"
#include "layoutgen/model.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace layoutgen {

class BundleChecksumError : public FormatError {
 public:
  using FormatError::FormatError;
};

class BundleVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

struct ModelBundle {
  std::string graph_id;
  Graph graph;
  SenPartition partition;
  ModelParams params;
  int grid_resolution = 0;
  std::vector<Positions> grid;  // decoded at latent_grid(grid_resolution)
  std::map<std::pair<Metric, int>, Matrix> heatmaps;
};

ModelBundle make_bundle(const Graph& g, const ModelParams& params, std::string graph_id, int grid_resolution = 8);

std::string encode_bundle(const ModelBundle& b);
// Verifies the checksum before parsing anything.
ModelBundle decode_bundle(std::string_view data);
void save_bundle(const ModelBundle& b, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

}  // namespace layoutgen
