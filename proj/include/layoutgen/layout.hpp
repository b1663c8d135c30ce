#pragma once

#include "layoutgen/graph.hpp"
#include "layoutgen/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace layoutgen {

enum class Engine { spring, linlog_gravity, exponent_force };

std::string_view engine_name(Engine e);
Engine engine_from_name(std::string_view name);
std::vector<Engine> all_engines();

// Hooke springs toward a rest length plus inverse-distance charge repulsion,
// integrated with velocity damping.
struct SpringParams {
  double link_distance = 30.0;     // [1, 100]
  double charge_strength = -30.0;  // [-100, -1], negative repels
  double velocity_decay = 0.4;     // [0.1, 0.7]
};

// Degree-weighted repulsion with linear or logarithmic attraction and a
// central gravity term.
struct LinLogParams {
  double gravity = 1.0;        // [1, 10]
  double scaling_ratio = 2.0;  // [1, 10]
  bool adjust_sizes = false;
  bool linlog = false;
  bool outbound_attraction_distribution = false;
  bool strong_gravity = false;
};

// Repulsion C / d^p and attraction mu * d^mu_p on edges, unit-length steps.
struct ExponentForceParams {
  double repulsive_strength = 0.2;   // C    (0, 5]
  double repulsive_exponent = 2.0;   // p    [0, 5]
  double attractive_strength = 1.0;  // mu   (0, 5]
  double attractive_exponent = 2.0;  // mu_p [0, 5]
};

using LayoutParams = std::variant<SpringParams, LinLogParams, ExponentForceParams>;

struct ParamRange {
  std::string_view name;
  double lo;
  double hi;
  bool lo_open;
  bool hi_open;

  bool contains(double v) const {
    return (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
  }
};

std::span<const ParamRange> numeric_ranges(Engine e);

Engine engine_of(const LayoutParams& p);
LayoutParams default_params(Engine e);
// Throws std::out_of_range naming the first parameter outside its range.
void validate(const LayoutParams& p);

nlohmann::json params_to_json(const LayoutParams& p);
LayoutParams params_from_json(Engine e, const nlohmann::json& j);

struct Provenance {
  Engine engine = Engine::spring;
  LayoutParams params = SpringParams{};
  std::uint64_t seed = 0;
};

struct Layout {
  Positions positions;
  Provenance provenance;
};

// Engines run a fixed 500-iteration schedule with linear cooling from a
// uniform random start; output depends only on (graph, params, seed).
constexpr int kEngineIterations = 500;

Layout spring_layout(const Graph& g, const SpringParams& p, std::uint64_t seed);
// Requires a connected graph (gravity-free components drift apart).
Layout linlog_gravity_layout(const Graph& g, const LinLogParams& p, std::uint64_t seed);
Layout exponent_force_layout(const Graph& g, const ExponentForceParams& p, std::uint64_t seed);
Layout run_engine(const Graph& g, const LayoutParams& p, std::uint64_t seed);

// Uniform over each numeric range, uniform over {false, true} for flags.
LayoutParams sample_params(Engine e, std::mt19937_64& rng);

// True when positions are finite and at least two points differ.
bool is_valid_layout(const Positions& p);

// Seed for record `index`, attempt `attempt` under a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index, std::uint64_t attempt = 0);

// Per-engine record counts: equal shares, the first (count % k) engines get
// one extra. Records are assigned round-robin, so record i uses engine i % k.
std::vector<std::size_t> engine_shares(std::size_t count, std::size_t engine_count);

enum class Execution { serial, parallel };

struct CorpusStats {
  std::size_t produced = 0;
  std::size_t failures = 0;  // failed attempts that were resampled
  std::vector<std::size_t> per_engine;
};

using LayoutSink = std::function<void(Layout&&)>;

/// Generates `count` layouts, delivering them to `sink` in record order as
/// they complete. Records are computed in parallel chunks with independent
/// seeds, so serial and parallel execution produce identical streams. A
/// failing attempt (engine error or degenerate output) is retried with the
/// next derived seed.
CorpusStats generate_corpus(const Graph& g, std::size_t count, std::span<const Engine> engines, std::uint64_t seed,
                            const LayoutSink& sink, Execution exec = Execution::parallel);

struct TrainingCorpus {
  std::string graph_id;
  std::size_t node_count = 0;
  std::vector<Layout> records;
  std::vector<int> folds;  // empty until assigned

  std::size_t size() const noexcept { return records.size(); }
};

TrainingCorpus collect_corpus(const Graph& g, std::size_t count, std::span<const Engine> engines, std::uint64_t seed,
                              Execution exec = Execution::parallel);

}  // namespace layoutgen
