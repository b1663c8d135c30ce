#include "layoutgen/features.hpp"
#include "layoutgen/layout.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace layoutgen;

namespace {

Graph path_graph(int n) {
  std::vector<Edge> e;
  for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
  return Graph(static_cast<std::size_t>(n), e);
}

Graph triangle() {
  std::vector<Edge> e{{0, 1}, {1, 2}, {0, 2}};
  return Graph(3, e);
}

double diameter(const Positions& p) { return pairwise_distances(p).maxCoeff(); }

double distance_ratio(const Positions& p) {
  Matrix d = pairwise_distances(p);
  double lo = 1e300, hi = 0;
  for (int i = 0; i < p.rows(); ++i)
    for (int j = i + 1; j < p.rows(); ++j) {
      lo = std::min(lo, d(i, j));
      hi = std::max(hi, d(i, j));
    }
  return hi / lo;
}

}  // namespace

TEST(Spring, SingleEdgeSeparates) {
  Layout l = spring_layout(path_graph(2), SpringParams{}, 1);
  EXPECT_TRUE(is_valid_layout(l.positions));
  EXPECT_GT(diameter(l.positions), 0.0);
}

TEST(Spring, TriangleIsNearlyEquilateral) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Layout l = spring_layout(triangle(), SpringParams{}, seed);
    EXPECT_LT(distance_ratio(l.positions), 1.2) << "seed " << seed;
  }
}

TEST(Engines, Deterministic) {
  std::mt19937_64 rng(4);
  Graph g = largest_component(oracle::random_graph(30, 0.15, rng));
  for (Engine e : all_engines()) {
    std::mt19937_64 prng(9);
    LayoutParams p = sample_params(e, prng);
    Layout a = run_engine(g, p, 77);
    Layout b = run_engine(g, p, 77);
    EXPECT_EQ(a.positions, b.positions) << engine_name(e);
    EXPECT_TRUE(is_valid_layout(a.positions));
  }
}

TEST(LinLog, StrongGravityIsTighter) {
  std::mt19937_64 rng(2);
  Graph g = largest_component(oracle::random_graph(40, 0.1, rng));
  for (bool linlog : {false, true}) {
    LinLogParams weak;
    weak.linlog = linlog;
    LinLogParams strong = weak;
    strong.strong_gravity = true;
    EXPECT_LT(diameter(linlog_gravity_layout(g, strong, 5).positions),
              diameter(linlog_gravity_layout(g, weak, 5).positions));
  }
}

TEST(LinLog, RejectsDisconnected) {
  std::vector<Edge> e{{0, 1}, {2, 3}};
  EXPECT_THROW(linlog_gravity_layout(Graph(4, e), LinLogParams{}, 1), std::invalid_argument);
}

TEST(ExponentForce, BoundsAccepted) {
  Graph g = path_graph(6);
  for (double c : {5.0, 1e-9})
    for (double p : {0.0, 5.0})
      for (double mu : {5.0, 1e-9})
        for (double mp : {0.0, 5.0}) {
          ExponentForceParams params{c, p, mu, mp};
          EXPECT_NO_THROW(validate(params));
          Layout l = exponent_force_layout(g, params, 3);
          EXPECT_TRUE(l.positions.allFinite());
        }
  EXPECT_THROW(validate(ExponentForceParams{0.0, 2, 1, 2}), std::out_of_range);
  EXPECT_THROW(validate(ExponentForceParams{0.2, 5.5, 1, 2}), std::out_of_range);
}

TEST(ExponentForce, RepulsionSpreadsLayout) {
  Graph g = path_graph(10);
  double previous = 0.0;
  for (double c : {0.5, 1.0, 2.0}) {
    ExponentForceParams params;
    params.repulsive_strength = c;
    const double mean = pairwise_distances(exponent_force_layout(g, params, 12).positions).mean();
    EXPECT_GT(mean, previous) << "C=" << c;
    previous = mean;
  }
}

TEST(SampleParams, InRangeAndReproducible) {
  for (Engine e : all_engines()) {
    std::mt19937_64 a(42), b(42);
    EXPECT_EQ(params_to_json(sample_params(e, a)), params_to_json(sample_params(e, b)));
  }
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100000; ++i) {
    const Engine e = all_engines()[static_cast<std::size_t>(i % 3)];
    EXPECT_NO_THROW(validate(sample_params(e, rng)));
  }
}

TEST(SampleParams, ExponentForceStrengthOpenAtZero) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10000; ++i) {
    auto p = std::get<ExponentForceParams>(sample_params(Engine::exponent_force, rng));
    ASSERT_GT(p.repulsive_strength, 0.0);
    ASSERT_LE(p.repulsive_strength, 5.0);
  }
}

TEST(SampleParams, UniformMean) {
  std::mt19937_64 rng(8);
  double sum = 0;
  for (int i = 0; i < 10000; ++i) sum += std::get<LinLogParams>(sample_params(Engine::linlog_gravity, rng)).gravity;
  EXPECT_NEAR(sum / 10000, 5.5, 0.1);
}

TEST(Params, JsonRoundTrip) {
  std::mt19937_64 rng(5);
  for (Engine e : all_engines()) {
    LayoutParams p = sample_params(e, rng);
    EXPECT_EQ(params_to_json(params_from_json(e, params_to_json(p))), params_to_json(p));
  }
  EXPECT_EQ(engine_from_name("linlog-gravity"), Engine::linlog_gravity);
  EXPECT_THROW(engine_from_name("fm3"), std::invalid_argument);
}

TEST(Corpus, EmptyCount) {
  auto engines = all_engines();
  TrainingCorpus c = collect_corpus(path_graph(5), 0, engines, 1);
  EXPECT_EQ(c.size(), 0u);
}

TEST(Corpus, EqualSharesAndProvenance) {
  EXPECT_EQ(engine_shares(20000, 4), (std::vector<std::size_t>(4, 5000)));
  EXPECT_EQ(engine_shares(2000, 3), (std::vector<std::size_t>{667, 667, 666}));
  auto engines = all_engines();
  Graph g = path_graph(8);
  std::size_t seen = 0;
  CorpusStats stats = generate_corpus(g, 30, engines, 99, [&](Layout&& l) {
    EXPECT_EQ(l.provenance.engine, engines[seen % 3]);
    EXPECT_EQ(engine_of(l.provenance.params), l.provenance.engine);
    EXPECT_EQ(l.positions.rows(), 8);
    EXPECT_TRUE(is_valid_layout(l.positions));
    // The record is reproducible from its provenance alone.
    EXPECT_EQ(run_engine(g, l.provenance.params, l.provenance.seed).positions, l.positions);
    ++seen;
  });
  EXPECT_EQ(seen, 30u);
  EXPECT_EQ(stats.per_engine, (std::vector<std::size_t>{10, 10, 10}));
}

TEST(Corpus, SerialEqualsParallel) {
  auto engines = all_engines();
  Graph g = path_graph(7);
  TrainingCorpus a = collect_corpus(g, 70, engines, 5, Execution::serial);
  TrainingCorpus b = collect_corpus(g, 70, engines, 5, Execution::parallel);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.records[i].positions, b.records[i].positions);
}
