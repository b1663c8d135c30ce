#pragma once

#include "layoutgen/layout.hpp"
#include "layoutgen/model.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <stdexcept>

namespace layoutgen {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 50;
  std::size_t batch_size = 100;  // see default_batch_size
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool shuffle = true;
  int checkpoint_every = 1;              // epochs; 0 disables
  std::filesystem::path checkpoint_dir;  // no files when empty
};

void validate(const TrainConfig& c);

class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& parameter)
      : std::runtime_error("non-finite gradient for parameter '" + parameter + "'"), parameter_(parameter) {}
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

struct AdamState {
  std::int64_t step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

// One bias-corrected Adam update. State is sized on first use.
void adam_step(std::span<nn::Parameter* const> params, std::span<const Matrix> grads, AdamState& state,
               const TrainConfig& config);

struct BatchRecord {
  int epoch = 0;
  std::size_t batch = 0;
  std::size_t size = 0;
  double recon = 0.0;
  double variational = 0.0;
  double total = 0.0;
  std::size_t degenerate = 0;
};

struct TrainHistory {
  std::vector<BatchRecord> batches;
  std::vector<double> epoch_seconds;
  std::vector<std::filesystem::path> checkpoints;
  std::size_t skipped_layouts = 0;  // degenerate inputs left out
  bool starved = false;             // streaming stopped on timeout

  std::vector<double> epoch_mean_total() const;
};

void write_history_csv(std::ostream& out, const TrainHistory& h);

// Everything needed to continue a run exactly where it stopped.
struct TrainCheckpoint {
  ModelParams params;
  AdamState adam;
  int epochs_done = 0;
  TrainHistory history;
};

std::string encode_checkpoint(const TrainCheckpoint& c);  // magic "GLK1"
TrainCheckpoint decode_checkpoint(std::string_view data);
TrainCheckpoint load_checkpoint(const std::filesystem::path& path);

struct TrainResult {
  ModelParams params;
  TrainHistory history;
};

// Called after every epoch with the epoch index and the current parameters.
using EpochHook = std::function<void(int epoch, const ModelParams& params, const TrainHistory& history)>;

// Batch layout for `count` items: ceil(count / size) batches, except that a
// trailing batch of one (which batch norm cannot use) joins the one before.
std::vector<std::size_t> batch_sizes(std::size_t count, std::size_t size);

/// Mini-batch training of the autoencoder on layouts of `g`.
///
/// Degenerate layouts are skipped and counted. Epoch e shuffles with a seed
/// derived from (tc.seed, e) and batch b draws prior samples and slices from
/// (tc.seed, e, b), so a resumed run reproduces an uninterrupted one bit for
/// bit. The model is initialized from mc.seed unless `resume` is given.
TrainResult train(const Graph& g, std::span<const Positions> layouts, const ModelConfig& mc, const TrainConfig& tc,
                  const EpochHook& hook = {}, const TrainCheckpoint* resume = nullptr);
TrainResult train(const Graph& g, const TrainingCorpus& corpus, const ModelConfig& mc, const TrainConfig& tc,
                  const EpochHook& hook = {}, const TrainCheckpoint* resume = nullptr);

/// Thread-safe layout queue between a generator and train_streaming.
class LayoutStream {
 public:
  void push(Positions p);
  void close();
  // Waits until more than `have` layouts were pushed or the stream is closed.
  // Returns false on timeout.
  bool wait_for(std::size_t have, std::chrono::milliseconds timeout);
  std::size_t size() const;
  bool closed() const;
  Positions at(std::size_t i) const;

 private:
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Positions> items_;
  bool closed_ = false;
};

struct StreamConfig {
  std::size_t cap = std::numeric_limits<std::size_t>::max();  // layouts consumed at most
  std::chrono::milliseconds timeout{30000};                    // starvation limit
};

/// Trains while layouts arrive. Epoch 0 consumes batches in arrival order;
/// later epochs revisit the received layouts in the same order. The math
/// equals train() with shuffling disabled on the same sequence. On
/// starvation the run stops with the parameters reached so far.
TrainResult train_streaming(const Graph& g, LayoutStream& source, const ModelConfig& mc, const TrainConfig& tc,
                            const StreamConfig& sc = {}, const EpochHook& hook = {});

// Generates a corpus on a worker thread and trains on it as it arrives.
TrainResult generate_and_train(const Graph& g, std::size_t count, std::span<const Engine> engines,
                               std::uint64_t corpus_seed, const ModelConfig& mc, const TrainConfig& tc,
                               const EpochHook& hook = {});

// Per-layout reconstruction loss of the encode-decode round trip in eval mode,
// matched within structural-equivalence classes when mc.use_gw is set.
std::vector<double> evaluate_reconstruction(const GraphContext& ctx, const ModelParams& params,
                                            const SenPartition& part, std::span<const Positions> layouts);

// Fold of each of `count` items: a seeded shuffle cut into k contiguous blocks.
// Requires count divisible by k.
std::vector<int> assign_folds(std::size_t count, int k, std::uint64_t seed);

struct FoldResult {
  int repeat = 0;
  int fold = 0;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
  double test_loss = 0.0;
  std::optional<double> train_loss;  // with evaluate_train
};

struct CrossValidation {
  std::vector<FoldResult> folds;
  double mean_test_loss = 0.0;
};

/// k-fold cross-validation, repeated with fresh fold seeds and fresh model
/// initializations. Repeat r uses folds from derive_seed(seed, r) and a
/// model seed derived from (mc.seed, r).
CrossValidation cross_validate(const Graph& g, std::span<const Positions> layouts, const ModelConfig& mc,
                               const TrainConfig& tc, int k, int repeats, std::uint64_t seed,
                               bool evaluate_train = false);

}  // namespace layoutgen
