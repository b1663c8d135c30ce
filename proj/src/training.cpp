#include "layoutgen/training.hpp"

#include "layoutgen/features.hpp"
#include "layoutgen/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <thread>

namespace layoutgen {

namespace {

constexpr std::string_view kCheckpointMagic = "GLK1";

using Clock = std::chrono::steady_clock;

std::uint64_t shuffle_seed(std::uint64_t seed, int epoch) {
  return derive_seed(seed, static_cast<std::uint64_t>(epoch), 0);
}

std::uint64_t noise_seed(std::uint64_t seed, int epoch, std::size_t batch) {
  return derive_seed(derive_seed(seed, static_cast<std::uint64_t>(epoch), 1), batch);
}

std::vector<Matrix> features_of(std::span<const Positions> layouts, std::span<const std::size_t> idx) {
  std::vector<Matrix> out(idx.size());
#pragma omp parallel for schedule(static) num_threads(thread_limit())
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = layout_feature(layouts[idx[i]]);
  return out;
}

// Shared optimizer state and per-batch update for train and train_streaming.
class Trainer {
 public:
  Trainer(const Graph& g, const ModelConfig& mc, const TrainConfig& tc, const TrainCheckpoint* resume)
      : tc_(tc), ctx_(GraphContext::from(g)), part_(structural_equivalence(g)) {
    validate(tc);
    if (resume) {
      params_ = resume->params;
      adam_ = resume->adam;
      history_ = resume->history;
      epochs_done_ = resume->epochs_done;
      if (params_.config.node_count != g.node_count()) throw std::invalid_argument("checkpoint is for another graph");
    } else {
      ModelConfig c = mc;
      c.node_count = g.node_count();
      params_ = ModelParams::initialize(c);
    }
  }

  void step(int epoch, std::size_t batch, std::span<const Matrix> features) {
    nn::Tape tape;
    nn::Binder bind(tape);
    std::vector<BatchStat> stats;
    const BatchLoss loss =
        batch_loss(bind, params_, ctx_, BatchInputs{features, &part_, noise_seed(tc_.seed, epoch, batch), nullptr},
                   ForwardPass{nn::Mode::train, &stats});
    tape.backward(loss.total);
    const std::vector<nn::Parameter*> trainable = params_.trainable();
    std::vector<Matrix> grads;
    grads.reserve(trainable.size());
    for (const nn::Parameter* p : trainable) {
      const auto it = std::find_if(bind.bound().begin(), bind.bound().end(),
                                   [&](const auto& b) { return b.first == p; });
      grads.push_back(it == bind.bound().end() ? Matrix::Zero(p->value.rows(), p->value.cols())
                                               : Matrix(it->second.grad()));
    }
    adam_step(trainable, grads, adam_, tc_);
    for (nn::Parameter* p : trainable) p->value = p->value.cast<float>().cast<double>();
    params_.apply_batch_stats(stats);
    history_.batches.push_back({epoch, batch, features.size(), loss.recon.value()(0, 0),
                                loss.variational.value()(0, 0), loss.total.value()(0, 0), loss.degenerate});
  }

  void end_epoch(int epoch, double seconds, const EpochHook& hook) {
    history_.epoch_seconds.push_back(seconds);
    epochs_done_ = epoch + 1;
    if (tc_.checkpoint_every > 0 && !tc_.checkpoint_dir.empty() && epochs_done_ % tc_.checkpoint_every == 0) {
      std::filesystem::create_directories(tc_.checkpoint_dir);
      char name[32];
      std::snprintf(name, sizeof name, "epoch-%04d.glk", epochs_done_);
      const auto path = tc_.checkpoint_dir / name;
      history_.checkpoints.push_back(path);
      io::write_file(path, encode_checkpoint(TrainCheckpoint{params_, adam_, epochs_done_, history_}));
    }
    if (hook) hook(epoch, params_, history_);
  }

  int epochs_done() const { return epochs_done_; }
  TrainHistory& history() { return history_; }
  TrainResult result() { return {std::move(params_), std::move(history_)}; }

 private:
  TrainConfig tc_;
  GraphContext ctx_;
  SenPartition part_;
  ModelParams params_;
  AdamState adam_;
  TrainHistory history_;
  int epochs_done_ = 0;
};

void write_history(io::Writer& w, const TrainHistory& h) {
  w.u64(h.batches.size());
  for (const BatchRecord& r : h.batches) {
    w.u64(static_cast<std::uint64_t>(r.epoch));
    w.u64(r.batch);
    w.u64(r.size);
    w.f64(r.recon);
    w.f64(r.variational);
    w.f64(r.total);
    w.u64(r.degenerate);
  }
  w.u64(h.epoch_seconds.size());
  for (double s : h.epoch_seconds) w.f64(s);
  w.u64(h.checkpoints.size());
  for (const auto& p : h.checkpoints) w.str(p.string());
  w.u64(h.skipped_layouts);
}

TrainHistory read_history(io::Reader& r) {
  TrainHistory h;
  h.batches.resize(r.u64());
  for (BatchRecord& b : h.batches) {
    b.epoch = static_cast<int>(r.u64());
    b.batch = r.u64();
    b.size = r.u64();
    b.recon = r.f64();
    b.variational = r.f64();
    b.total = r.f64();
    b.degenerate = r.u64();
  }
  h.epoch_seconds.resize(r.u64());
  for (double& s : h.epoch_seconds) s = r.f64();
  h.checkpoints.resize(r.u64());
  for (auto& p : h.checkpoints) p = r.str();
  h.skipped_layouts = r.u64();
  return h;
}

}  // namespace

void validate(const TrainConfig& c) {
  if (!(c.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (c.epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (c.batch_size < 2) throw std::invalid_argument("batch size must be at least 2 (batch norm)");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(c.epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
  if (c.checkpoint_every < 0) throw std::invalid_argument("checkpoint cadence must be nonnegative");
}

void adam_step(std::span<nn::Parameter* const> params, std::span<const Matrix> grads, AdamState& state,
               const TrainConfig& config) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const nn::Parameter* p : params) {
      state.m.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      state.v.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam: state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].rows() != params[i]->value.rows() || grads[i].cols() != params[i]->value.cols()) {
      throw std::invalid_argument("adam: gradient shape mismatch for '" + params[i]->name + "'");
    }
    if (!grads[i].allFinite()) throw NonFiniteGradient(params[i]->name);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * grads[i];
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * grads[i].cwiseAbs2();
    params[i]->value.array() -=
        config.learning_rate * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + config.epsilon);
  }
}

std::vector<double> TrainHistory::epoch_mean_total() const {
  std::vector<double> sum, count;
  for (const BatchRecord& r : batches) {
    if (static_cast<std::size_t>(r.epoch) >= sum.size()) {
      sum.resize(static_cast<std::size_t>(r.epoch) + 1, 0.0);
      count.resize(sum.size(), 0.0);
    }
    sum[static_cast<std::size_t>(r.epoch)] += r.total;
    count[static_cast<std::size_t>(r.epoch)] += 1.0;
  }
  for (std::size_t e = 0; e < sum.size(); ++e) sum[e] = count[e] > 0 ? sum[e] / count[e] : 0.0;
  return sum;
}

void write_history_csv(std::ostream& out, const TrainHistory& h) {
  out << "epoch,batch,size,recon,variational,total,degenerate\n";
  const auto old = out.precision(17);
  for (const BatchRecord& r : h.batches) {
    out << r.epoch << ',' << r.batch << ',' << r.size << ',' << r.recon << ',' << r.variational << ',' << r.total
        << ',' << r.degenerate << '\n';
  }
  out.precision(old);
}

std::string encode_checkpoint(const TrainCheckpoint& c) {
  std::string out;
  io::Writer w(out);
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.u64(static_cast<std::uint64_t>(c.epochs_done));
  io::write_model(w, c.params);
  w.u64(static_cast<std::uint64_t>(c.adam.step));
  w.u64(c.adam.m.size());
  for (std::size_t i = 0; i < c.adam.m.size(); ++i) {
    w.matrix_f64(c.adam.m[i]);
    w.matrix_f64(c.adam.v[i]);
  }
  write_history(w, c.history);
  return out;
}

TrainCheckpoint decode_checkpoint(std::string_view data) {
  io::Reader r(data);
  r.expect_magic(kCheckpointMagic);
  TrainCheckpoint c;
  c.epochs_done = static_cast<int>(r.u64());
  c.params = io::read_model(r);
  c.adam.step = static_cast<std::int64_t>(r.u64());
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    c.adam.m.push_back(r.matrix_f64());
    c.adam.v.push_back(r.matrix_f64());
  }
  c.history = read_history(r);
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return c;
}

TrainCheckpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

std::vector<std::size_t> batch_sizes(std::size_t count, std::size_t size) {
  if (size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<std::size_t> out;
  for (std::size_t start = 0; start < count; start += size) out.push_back(std::min(size, count - start));
  if (out.size() > 1 && out.back() == 1) {
    out.pop_back();
    out.back() += 1;
  }
  return out;
}

TrainResult train(const Graph& g, std::span<const Positions> layouts, const ModelConfig& mc, const TrainConfig& tc,
                  const EpochHook& hook, const TrainCheckpoint* resume) {
  Trainer trainer(g, mc, tc, resume);
  std::vector<std::size_t> valid;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < layouts.size(); ++i) {
    if (static_cast<std::size_t>(layouts[i].rows()) != g.node_count()) {
      throw std::invalid_argument("layout " + std::to_string(i) + " has " + std::to_string(layouts[i].rows()) +
                                  " positions for a " + std::to_string(g.node_count()) + "-node graph");
    }
    if (is_valid_layout(layouts[i])) {
      valid.push_back(i);
    } else {
      ++skipped;
    }
  }
  trainer.history().skipped_layouts = skipped;
  if (valid.size() < 2) throw std::invalid_argument("training needs at least 2 usable layouts");
  const std::vector<std::size_t> sizes = batch_sizes(valid.size(), tc.batch_size);
  for (int epoch = trainer.epochs_done(); epoch < tc.epochs; ++epoch) {
    const auto start = Clock::now();
    std::vector<std::size_t> order = valid;
    if (tc.shuffle) {
      std::mt19937_64 rng(shuffle_seed(tc.seed, epoch));
      std::shuffle(order.begin(), order.end(), rng);
    }
    std::size_t offset = 0;
    for (std::size_t b = 0; b < sizes.size(); ++b) {
      const std::span<const std::size_t> idx(order.data() + offset, sizes[b]);
      trainer.step(epoch, b, features_of(layouts, idx));
      offset += sizes[b];
    }
    trainer.end_epoch(epoch, std::chrono::duration<double>(Clock::now() - start).count(), hook);
  }
  return trainer.result();
}

TrainResult train(const Graph& g, const TrainingCorpus& corpus, const ModelConfig& mc, const TrainConfig& tc,
                  const EpochHook& hook, const TrainCheckpoint* resume) {
  std::vector<Positions> layouts;
  layouts.reserve(corpus.size());
  for (const Layout& l : corpus.records) layouts.push_back(l.positions);
  return train(g, layouts, mc, tc, hook, resume);
}

void LayoutStream::push(Positions p) {
  {
    std::lock_guard lock(mutex_);
    if (closed_) throw std::logic_error("push on a closed layout stream");
    items_.push_back(std::move(p));
  }
  cv_.notify_all();
}

void LayoutStream::close() {
  {
    std::lock_guard lock(mutex_);
    closed_ = true;
  }
  cv_.notify_all();
}

bool LayoutStream::wait_for(std::size_t have, std::chrono::milliseconds timeout) {
  std::unique_lock lock(mutex_);
  return cv_.wait_for(lock, timeout, [&] { return items_.size() > have || closed_; });
}

std::size_t LayoutStream::size() const {
  std::lock_guard lock(mutex_);
  return items_.size();
}

bool LayoutStream::closed() const {
  std::lock_guard lock(mutex_);
  return closed_;
}

Positions LayoutStream::at(std::size_t i) const {
  std::lock_guard lock(mutex_);
  return items_.at(i);
}

TrainResult train_streaming(const Graph& g, LayoutStream& source, const ModelConfig& mc, const TrainConfig& tc,
                            const StreamConfig& sc, const EpochHook& hook) {
  Trainer trainer(g, mc, tc, nullptr);
  if (sc.cap == 0) return trainer.result();
  std::vector<Positions> received;  // usable layouts in arrival order
  std::size_t seen = 0;
  bool finished = false;  // no more input will be consumed
  const auto pull = [&]() {
    const std::size_t available = std::min(source.size(), sc.cap);
    for (; seen < available; ++seen) {
      Positions p = source.at(seen);
      if (static_cast<std::size_t>(p.rows()) != g.node_count()) {
        throw std::invalid_argument("streamed layout has " + std::to_string(p.rows()) + " positions");
      }
      if (is_valid_layout(p)) {
        received.push_back(std::move(p));
      } else {
        ++trainer.history().skipped_layouts;
      }
    }
    if (seen >= sc.cap || (source.closed() && seen == source.size())) finished = true;
  };

  // Epoch 0: a full batch is taken once it is certain not to be followed by
  // a lone trailing layout, which train() would merge into it.
  const auto start = Clock::now();
  std::size_t offset = 0, batch = 0;
  while (true) {
    pull();
    if (finished) break;
    if (received.size() >= offset + tc.batch_size + 2) {
      trainer.step(0, batch++, features_of(received, [&] {
                     std::vector<std::size_t> idx(tc.batch_size);
                     std::iota(idx.begin(), idx.end(), offset);
                     return idx;
                   }()));
      offset += tc.batch_size;
      continue;
    }
    if (!source.wait_for(seen, sc.timeout)) {
      trainer.history().starved = true;
      return trainer.result();
    }
  }
  if (received.size() < 2) return trainer.result();
  const std::vector<std::size_t> sizes = batch_sizes(received.size(), tc.batch_size);
  for (std::size_t b = batch; b < sizes.size(); ++b) {
    std::vector<std::size_t> idx(sizes[b]);
    std::iota(idx.begin(), idx.end(), offset);
    trainer.step(0, b, features_of(received, idx));
    offset += sizes[b];
  }
  trainer.end_epoch(0, std::chrono::duration<double>(Clock::now() - start).count(), hook);

  std::vector<std::size_t> order(received.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch < tc.epochs; ++epoch) {
    const auto t0 = Clock::now();
    std::size_t off = 0;
    for (std::size_t b = 0; b < sizes.size(); ++b) {
      trainer.step(epoch, b, features_of(received, std::span<const std::size_t>(order.data() + off, sizes[b])));
      off += sizes[b];
    }
    trainer.end_epoch(epoch, std::chrono::duration<double>(Clock::now() - t0).count(), hook);
  }
  return trainer.result();
}

TrainResult generate_and_train(const Graph& g, std::size_t count, std::span<const Engine> engines,
                               std::uint64_t corpus_seed, const ModelConfig& mc, const TrainConfig& tc,
                               const EpochHook& hook) {
  LayoutStream stream;
  std::exception_ptr failure;
  std::thread producer([&] {
    try {
      generate_corpus(g, count, engines, corpus_seed, [&](Layout&& l) { stream.push(std::move(l.positions)); });
    } catch (...) {
      failure = std::current_exception();
    }
    stream.close();
  });
  TrainResult result;
  try {
    result = train_streaming(g, stream, mc, tc, StreamConfig{count, std::chrono::milliseconds(600000)}, hook);
  } catch (...) {
    producer.join();
    throw;
  }
  producer.join();
  if (failure) std::rethrow_exception(failure);
  return result;
}

std::vector<double> evaluate_reconstruction(const GraphContext& ctx, const ModelParams& params,
                                            const SenPartition& part, std::span<const Positions> layouts) {
  constexpr std::size_t kChunk = 128;
  std::vector<double> out(layouts.size());
  for (std::size_t start = 0; start < layouts.size(); start += kChunk) {
    const std::size_t end = std::min(layouts.size(), start + kChunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const std::vector<Matrix> features = features_of(layouts, idx);
    const Matrix z = encode_batch(ctx, params, features);
    const std::vector<Positions> recon = decode_batch(ctx, params, z);
#pragma omp parallel for schedule(dynamic) num_threads(thread_limit())
    for (std::size_t i = start; i < end; ++i) {
      out[i] = reconstruction_loss(layouts[i], recon[i - start], part, params.config.use_gw, params.config.sen);
    }
  }
  return out;
}

std::vector<int> assign_folds(std::size_t count, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("need at least 2 folds");
  if (count % static_cast<std::size_t>(k) != 0) {
    throw std::invalid_argument("corpus size " + std::to_string(count) + " is not divisible by k = " +
                                std::to_string(k));
  }
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t block = count / static_cast<std::size_t>(k);
  std::vector<int> folds(count);
  for (std::size_t i = 0; i < count; ++i) folds[order[i]] = static_cast<int>(i / block);
  return folds;
}

CrossValidation cross_validate(const Graph& g, std::span<const Positions> layouts, const ModelConfig& mc,
                               const TrainConfig& tc, int k, int repeats, std::uint64_t seed, bool evaluate_train) {
  if (repeats < 1) throw std::invalid_argument("repeats must be at least 1");
  const GraphContext ctx = GraphContext::from(g);
  const SenPartition part = structural_equivalence(g);
  CrossValidation cv;
  double sum = 0.0;
  for (int r = 0; r < repeats; ++r) {
    const std::vector<int> folds = assign_folds(layouts.size(), k, derive_seed(seed, static_cast<std::uint64_t>(r)));
    ModelConfig m = mc;
    m.seed = derive_seed(mc.seed, static_cast<std::uint64_t>(r), 1);
    for (int f = 0; f < k; ++f) {
      std::vector<Positions> train_set, test_set;
      for (std::size_t i = 0; i < layouts.size(); ++i) (folds[i] == f ? test_set : train_set).push_back(layouts[i]);
      TrainConfig t = tc;
      if (!t.checkpoint_dir.empty()) t.checkpoint_dir /= "repeat" + std::to_string(r) + "-fold" + std::to_string(f);
      const TrainResult trained = train(g, train_set, m, t);
      FoldResult res{r, f, train_set.size(), test_set.size(), 0.0, std::nullopt};
      const std::vector<double> test = evaluate_reconstruction(ctx, trained.params, part, test_set);
      res.test_loss = std::accumulate(test.begin(), test.end(), 0.0) / static_cast<double>(test.size());
      if (evaluate_train) {
        const std::vector<double> tr = evaluate_reconstruction(ctx, trained.params, part, train_set);
        res.train_loss = std::accumulate(tr.begin(), tr.end(), 0.0) / static_cast<double>(tr.size());
      }
      sum += res.test_loss;
      cv.folds.push_back(res);
    }
  }
  cv.mean_test_loss = sum / static_cast<double>(cv.folds.size());
  return cv;
}

}  // namespace layoutgen
