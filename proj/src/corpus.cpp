#include "layoutgen/kernels.hpp"
#include "layoutgen/layout.hpp"

#include <optional>
#include <stdexcept>

namespace layoutgen {

namespace {

constexpr int kMaxAttempts = 64;
constexpr std::size_t kChunk = 64;

struct RecordResult {
  std::optional<Layout> layout;
  std::size_t failures = 0;
  std::string last_error;
};

RecordResult make_record(const Graph& g, Engine engine, std::uint64_t master, std::size_t index) {
  RecordResult out;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const std::uint64_t seed = derive_seed(master, index, static_cast<std::uint64_t>(attempt));
    std::mt19937_64 rng(seed);
    const LayoutParams params = sample_params(engine, rng);
    try {
      Layout l = run_engine(g, params, seed);
      if (is_valid_layout(l.positions)) {
        out.layout = std::move(l);
        return out;
      }
      out.last_error = "degenerate layout";
    } catch (const LayoutEngineError& e) {
      out.last_error = e.what();
    }
    ++out.failures;
  }
  return out;
}

}  // namespace

std::vector<std::size_t> engine_shares(std::size_t count, std::size_t engine_count) {
  if (engine_count == 0) throw std::invalid_argument("no layout engines given");
  std::vector<std::size_t> shares(engine_count, count / engine_count);
  for (std::size_t e = 0; e < count % engine_count; ++e) ++shares[e];
  return shares;
}

CorpusStats generate_corpus(const Graph& g, std::size_t count, std::span<const Engine> engines, std::uint64_t seed,
                            const LayoutSink& sink, Execution exec) {
  CorpusStats stats;
  stats.per_engine.assign(engines.size(), 0);
  if (count == 0) return stats;
  if (engines.empty()) throw std::invalid_argument("no layout engines given");
  for (Engine e : engines) {
    if (e == Engine::linlog_gravity && !g.is_connected()) {
      throw std::invalid_argument("linlog-gravity requires a connected graph (use largest_component)");
    }
  }

  std::vector<RecordResult> chunk;
  for (std::size_t begin = 0; begin < count; begin += kChunk) {
    const std::size_t len = std::min(kChunk, count - begin);
    chunk.assign(len, RecordResult{});
    const auto body = [&](std::size_t k) {
      const std::size_t index = begin + k;
      chunk[k] = make_record(g, engines[index % engines.size()], seed, index);
    };
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic) num_threads(thread_limit())
      for (std::size_t k = 0; k < len; ++k) body(k);
    } else {
      for (std::size_t k = 0; k < len; ++k) body(k);
    }
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t index = begin + k;
      stats.failures += chunk[k].failures;
      if (!chunk[k].layout) {
        throw LayoutEngineError("record " + std::to_string(index) + " failed " + std::to_string(kMaxAttempts) +
                                " attempts: " + chunk[k].last_error);
      }
      ++stats.per_engine[index % engines.size()];
      ++stats.produced;
      sink(std::move(*chunk[k].layout));
    }
  }
  return stats;
}

TrainingCorpus collect_corpus(const Graph& g, std::size_t count, std::span<const Engine> engines, std::uint64_t seed,
                              Execution exec) {
  TrainingCorpus corpus;
  corpus.node_count = g.node_count();
  corpus.records.reserve(count);
  generate_corpus(
      g, count, engines, seed, [&](Layout&& l) { corpus.records.push_back(std::move(l)); }, exec);
  return corpus;
}

}  // namespace layoutgen
