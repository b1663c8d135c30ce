#pragma once

#include "layoutgen/graph.hpp"
#include "layoutgen/layout.hpp"

#include <random>
#include <vector>

namespace fixtures {

// Connected graph shaped like lesmis: a sparse core of `core` nodes plus
// `leaves` pendant nodes grouped on a few hubs, so each group is a class of
// structurally equivalent nodes.
inline layoutgen::Graph hub_and_leaves(std::size_t core, std::size_t leaves, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<layoutgen::Edge> edges;
  for (std::size_t i = 1; i < core; ++i) {
    std::uniform_int_distribution<std::size_t> parent(0, i - 1);
    edges.emplace_back(static_cast<int>(parent(rng)), static_cast<int>(i));
  }
  std::uniform_int_distribution<std::size_t> any(0, core - 1);
  for (std::size_t k = 0; k < core / 2; ++k) {
    const auto u = static_cast<int>(any(rng)), v = static_cast<int>(any(rng));
    if (u != v) edges.emplace_back(u, v);
  }
  const std::size_t hubs = std::max<std::size_t>(1, leaves / 4);
  for (std::size_t l = 0; l < leaves; ++l) {
    edges.emplace_back(static_cast<int>((l % hubs) * (core / hubs)), static_cast<int>(core + l));
  }
  return layoutgen::Graph(core + leaves, edges);
}

inline std::vector<layoutgen::Positions> positions_of(const layoutgen::TrainingCorpus& c) {
  std::vector<layoutgen::Positions> out;
  for (const auto& r : c.records) out.push_back(r.positions);
  return out;
}

}  // namespace fixtures
