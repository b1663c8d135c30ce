#include "layoutgen/model.hpp"

#include "layoutgen/features.hpp"

#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace layoutgen {

namespace {

nn::Var norm(nn::Binder& bind, const nn::BatchNorm& bn, nn::Var x, const ForwardPass& pass) {
  if (pass.mode == nn::Mode::train && pass.stats) {
    std::pair<RowVector, RowVector> observed;
    nn::Var y = bn(bind, x, nn::Mode::train, &observed);
    pass.stats->push_back({bn.running_mean.name, std::move(observed.first), std::move(observed.second)});
    return y;
  }
  return bn(bind, x, pass.mode);
}

GnnLayer make_layer(GnnKind kind, const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
  GnnLayer layer;
  layer.kind = kind;
  layer.lin0 = nn::Linear(name + ".lin0", in, out, rng);
  layer.norm0 = nn::BatchNorm(name + ".norm0", out);
  if (kind == GnnKind::gin_mlp) {
    layer.lin1 = nn::Linear(name + ".lin1", out, out, rng);
    layer.norm1 = nn::BatchNorm(name + ".norm1", out);
  }
  return layer;
}

template <typename Params, typename Fn>
void for_each_array(Params& p, Fn&& fn) {
  const auto linear = [&](auto& l) {
    fn(l.weight, true);
    fn(l.bias, true);
  };
  const auto batch_norm = [&](auto& bn) {
    fn(bn.gamma, true);
    fn(bn.beta, true);
    fn(bn.running_mean, false);
    fn(bn.running_var, false);
  };
  const auto layers = [&](auto& list) {
    for (auto& layer : list) {
      linear(layer.lin0);
      batch_norm(layer.norm0);
      if (layer.kind == GnnKind::gin_mlp) {
        linear(layer.lin1);
        batch_norm(layer.norm1);
      }
    }
  };
  layers(p.encoder.layers);
  linear(p.encoder.head0);
  batch_norm(p.encoder.head_norm);
  linear(p.encoder.head1);
  layers(p.decoder.layers);
  linear(p.decoder.head);
}

template <typename Params, typename Fn>
void for_each_batch_norm(Params& p, Fn&& fn) {
  for (auto& layer : p.encoder.layers) {
    fn(layer.norm0);
    if (layer.kind == GnnKind::gin_mlp) fn(layer.norm1);
  }
  fn(p.encoder.head_norm);
  for (auto& layer : p.decoder.layers) {
    fn(layer.norm0);
    if (layer.kind == GnnKind::gin_mlp) fn(layer.norm1);
  }
}

Matrix stack_features(std::span<const Matrix> features, std::size_t n) {
  const auto nn_ = static_cast<Eigen::Index>(n);
  Matrix x(static_cast<Eigen::Index>(features.size()) * nn_, nn_);
  for (std::size_t b = 0; b < features.size(); ++b) {
    if (features[b].rows() != nn_ || features[b].cols() != nn_) {
      throw std::invalid_argument("encode: feature is " + std::to_string(features[b].rows()) + "x" +
                                  std::to_string(features[b].cols()) + ", model expects " + std::to_string(n) + "x" +
                                  std::to_string(n));
    }
    x.middleRows(static_cast<Eigen::Index>(b) * nn_, nn_) = features[b];
  }
  return x;
}

void check_latent(const RowVector& z) {
  if (z.size() != 2 || !z.allFinite() || z.cwiseAbs().maxCoeff() > 1.0) {
    throw std::out_of_range("latent point must lie in [-1, 1]^2");
  }
}

}  // namespace

std::string_view gnn_kind_name(GnnKind k) {
  switch (k) {
    case GnnKind::mlp: return "mlp";
    case GnnKind::gcn: return "gcn";
    case GnnKind::gin1: return "gin1";
    case GnnKind::gin_mlp: return "ginmlp";
  }
  return "unknown";
}

GnnKind gnn_kind_from_name(std::string_view name) {
  for (GnnKind k : {GnnKind::mlp, GnnKind::gcn, GnnKind::gin1, GnnKind::gin_mlp}) {
    if (gnn_kind_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown model kind '" + std::string(name) + "' (expected mlp, gcn, gin1, ginmlp)");
}

int default_hidden_width(std::size_t node_count) {
  if (node_count < 150) return 32;
  if (node_count < 500) return 64;
  return 128;
}

std::size_t default_batch_size(std::size_t node_count) { return node_count < 500 ? 100 : 40; }

void validate(const ModelConfig& c) {
  if (c.hidden != 32 && c.hidden != 64 && c.hidden != 128) {
    throw std::invalid_argument("hidden width must be 32, 64 or 128, got " + std::to_string(c.hidden));
  }
  if (c.latent_dim != 2) throw std::invalid_argument("latent dimension must be 2");
  if (c.layers < 1) throw std::invalid_argument("need at least one GNN layer");
  if (c.node_count < 2) throw std::invalid_argument("model needs a graph with at least 2 nodes");
  if (!(c.beta >= 0.0)) throw std::invalid_argument("beta must be nonnegative");
  if (c.slices < 1) throw std::invalid_argument("slice count must be positive");
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"gnn", gnn_kind_name(c.kind)},
          {"use_gw", c.use_gw},
          {"layers", c.layers},
          {"hidden", c.hidden},
          {"latent_dim", c.latent_dim},
          {"beta", c.beta},
          {"slices", c.slices},
          {"seed", c.seed},
          {"node_count", c.node_count},
          {"sen",
           {{"exact_max", c.sen.exact_max},
            {"linear_weight", c.sen.linear_weight},
            {"gw",
             {{"epsilon_scale", c.sen.gw.epsilon_scale},
              {"outer_iterations", c.sen.gw.outer_iterations},
              {"sinkhorn_iterations", c.sen.gw.sinkhorn_iterations},
              {"restarts", c.sen.gw.restarts},
              {"local_search_starts", c.sen.gw.local_search_starts},
              {"seed", c.sen.gw.seed},
              {"tolerance", c.sen.gw.tolerance}}}}}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kind = gnn_kind_from_name(j.at("gnn").get<std::string>());
  c.use_gw = j.at("use_gw").get<bool>();
  c.layers = j.at("layers").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.beta = j.at("beta").get<double>();
  c.slices = j.at("slices").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.node_count = j.at("node_count").get<std::size_t>();
  if (j.contains("sen")) {
    const auto& s = j["sen"];
    c.sen.exact_max = s.value("exact_max", c.sen.exact_max);
    c.sen.linear_weight = s.value("linear_weight", c.sen.linear_weight);
    if (s.contains("gw")) {
      const auto& g = s["gw"];
      c.sen.gw.epsilon_scale = g.value("epsilon_scale", c.sen.gw.epsilon_scale);
      c.sen.gw.outer_iterations = g.value("outer_iterations", c.sen.gw.outer_iterations);
      c.sen.gw.sinkhorn_iterations = g.value("sinkhorn_iterations", c.sen.gw.sinkhorn_iterations);
      c.sen.gw.restarts = g.value("restarts", c.sen.gw.restarts);
      c.sen.gw.local_search_starts = g.value("local_search_starts", c.sen.gw.local_search_starts);
      c.sen.gw.seed = g.value("seed", c.sen.gw.seed);
      c.sen.gw.tolerance = g.value("tolerance", c.sen.gw.tolerance);
    }
  }
  validate(c);
  return c;
}

GraphContext GraphContext::from(const Graph& g) {
  return GraphContext{g.node_count(), SparseOperator::neighbor_mean(g), SparseOperator::gcn(g)};
}

nn::Var GnnLayer::operator()(nn::Binder& bind, nn::Var h, const GraphContext& ctx, std::size_t batch,
                             const ForwardPass& pass) const {
  nn::Var x;
  switch (kind) {
    case GnnKind::mlp:
      x = lin0(bind, h);
      break;
    case GnnKind::gcn:
      x = nn::add_row(nn::propagate(ctx.gcn, nn::matmul(h, bind(lin0.weight)), batch), bind(lin0.bias));
      break;
    case GnnKind::gin1:
    case GnnKind::gin_mlp:
      x = lin0(bind, nn::add(h, nn::propagate(ctx.neighbor_mean, h, batch)));
      break;
  }
  x = nn::elu(norm(bind, norm0, x, pass));
  if (kind == GnnKind::gin_mlp) x = nn::elu(norm(bind, norm1, lin1(bind, x), pass));
  return x;
}

nn::Var Encoder::operator()(nn::Binder& bind, nn::Var x, const GraphContext& ctx, std::size_t batch,
                            const ForwardPass& pass) const {
  std::vector<nn::Var> outputs;
  nn::Var h = x;
  for (const auto& layer : layers) {
    h = layer(bind, h, ctx, batch, pass);
    outputs.push_back(h);
  }
  nn::Var pooled = nn::mean_readout(nn::concat_cols(outputs), batch);
  nn::Var g = nn::elu(norm(bind, head_norm, head0(bind, pooled), pass));
  return nn::tanh(head1(bind, g));
}

nn::Var Decoder::operator()(nn::Binder& bind, nn::Var z, const GraphContext& ctx, const ForwardPass& pass) const {
  const auto batch = static_cast<std::size_t>(z.rows());
  std::vector<nn::Var> outputs;
  nn::Var h = nn::fuse(z, ctx.node_count);
  for (const auto& layer : layers) {
    h = layer(bind, h, ctx, batch, pass);
    outputs.push_back(h);
  }
  return head(bind, nn::concat_cols(outputs));
}

ModelParams ModelParams::initialize(const ModelConfig& config) {
  validate(config);
  ModelParams p;
  p.config = config;
  std::mt19937_64 rng(config.seed);
  const auto n = static_cast<Eigen::Index>(config.node_count);
  const Eigen::Index h = config.hidden;
  for (int l = 0; l < config.layers; ++l) {
    p.encoder.layers.push_back(
        make_layer(config.kind, "encoder.gnn" + std::to_string(l), l == 0 ? n : h, h, rng));
  }
  p.encoder.head0 = nn::Linear("encoder.head0", h * config.layers, h, rng);
  p.encoder.head_norm = nn::BatchNorm("encoder.head_norm", h);
  p.encoder.head1 = nn::Linear("encoder.head1", h, config.latent_dim, rng);
  for (int l = 0; l < config.layers; ++l) {
    p.decoder.layers.push_back(
        make_layer(config.kind, "decoder.gnn" + std::to_string(l), l == 0 ? n + config.latent_dim : h, h, rng));
  }
  p.decoder.head = nn::Linear("decoder.head", h * config.layers, 2, rng);
  p.round_to_float();
  return p;
}

std::vector<nn::Parameter*> ModelParams::trainable() {
  std::vector<nn::Parameter*> out;
  for_each_array(*this, [&](nn::Parameter& p, bool train) {
    if (train) out.push_back(&p);
  });
  return out;
}

std::vector<nn::Parameter*> ModelParams::arrays() {
  std::vector<nn::Parameter*> out;
  for_each_array(*this, [&](nn::Parameter& p, bool) { out.push_back(&p); });
  return out;
}

std::vector<const nn::Parameter*> ModelParams::arrays() const {
  std::vector<const nn::Parameter*> out;
  for_each_array(*this, [&](const nn::Parameter& p, bool) { out.push_back(&p); });
  return out;
}

void ModelParams::apply_batch_stats(std::span<const BatchStat> stats, double momentum) {
  std::map<std::string, nn::BatchNorm*> by_name;
  for_each_batch_norm(*this, [&](nn::BatchNorm& bn) { by_name[bn.running_mean.name] = &bn; });
  for (const BatchStat& s : stats) {
    auto it = by_name.find(s.name);
    if (it == by_name.end()) throw std::invalid_argument("unknown batch norm '" + s.name + "'");
    nn::BatchNorm& bn = *it->second;
    bn.running_mean.value = (1.0 - momentum) * bn.running_mean.value + momentum * s.mean;
    bn.running_var.value = (1.0 - momentum) * bn.running_var.value + momentum * s.unbiased_var;
    bn.running_mean.value = bn.running_mean.value.cast<float>().cast<double>();
    bn.running_var.value = bn.running_var.value.cast<float>().cast<double>();
  }
}

void ModelParams::round_to_float() {
  for (nn::Parameter* p : arrays()) p->value = p->value.cast<float>().cast<double>();
}

ModelParams relabel(const ModelParams& params, std::span<const int> perm) {
  const auto n = static_cast<Eigen::Index>(params.config.node_count);
  if (static_cast<Eigen::Index>(perm.size()) != n) throw std::invalid_argument("relabel: permutation size");
  ModelParams out = params;
  const auto permute_rows = [&](Matrix& w) {
    const Matrix old = w;
    for (Eigen::Index i = 0; i < n; ++i) w.row(i) = old.row(perm[static_cast<std::size_t>(i)]);
  };
  permute_rows(out.encoder.layers.front().lin0.weight.value);
  permute_rows(out.decoder.layers.front().lin0.weight.value);
  return out;
}

Matrix encode_batch(const GraphContext& ctx, const ModelParams& params, std::span<const Matrix> features) {
  nn::Tape tape;
  nn::Binder bind(tape, false);
  nn::Var x = tape.constant(stack_features(features, ctx.node_count));
  return params.encoder(bind, x, ctx, features.size(), ForwardPass{nn::Mode::eval, nullptr}).value();
}

RowVector encode(const GraphContext& ctx, const ModelParams& params, const Matrix& feature) {
  return encode_batch(ctx, params, std::span<const Matrix>(&feature, 1)).row(0);
}

std::vector<Positions> decode_batch(const GraphContext& ctx, const ModelParams& params, const Matrix& zs) {
  for (Eigen::Index b = 0; b < zs.rows(); ++b) check_latent(zs.row(b));
  nn::Tape tape;
  nn::Binder bind(tape, false);
  const Matrix& out = params.decoder(bind, tape.constant(zs), ctx, ForwardPass{nn::Mode::eval, nullptr}).value();
  const auto n = static_cast<Eigen::Index>(ctx.node_count);
  std::vector<Positions> layouts;
  for (Eigen::Index b = 0; b < zs.rows(); ++b) layouts.emplace_back(out.middleRows(b * n, n));
  return layouts;
}

Positions decode(const GraphContext& ctx, const ModelParams& params, const RowVector& z) {
  Matrix zs(1, z.size());
  zs.row(0) = z;
  return decode_batch(ctx, params, zs).front();
}

Matrix fuse(const RowVector& z, std::size_t node_count) {
  const auto n = static_cast<Eigen::Index>(node_count);
  Matrix out = Matrix::Zero(n, n + z.size());
  out.leftCols(n).setIdentity();
  out.rightCols(z.size()).rowwise() = z;
  return out;
}

nn::Var reconstruction_loss(nn::Var recon, std::span<const Matrix> targets, std::vector<double>* per_sample,
                            std::size_t* degenerate) {
  const auto batch = static_cast<Eigen::Index>(targets.size());
  if (batch == 0 || recon.cols() != 2 || recon.rows() % batch != 0) {
    throw std::invalid_argument("reconstruction_loss: positions do not split into the target count");
  }
  const Eigen::Index n = recon.rows() / batch;
  const double n2 = static_cast<double>(n * n);
  std::vector<double> losses(static_cast<std::size_t>(batch), 0.0);
  std::vector<char> valid(static_cast<std::size_t>(batch), 0);
  // Per-sample dLoss/dPositions, filled in the forward pass.
  std::vector<Matrix> grads(static_cast<std::size_t>(batch));
  const Matrix& all = recon.value();
#pragma omp parallel for schedule(dynamic) num_threads(thread_limit())
  for (Eigen::Index b = 0; b < batch; ++b) {
    const Matrix& target = targets[static_cast<std::size_t>(b)];
    const Positions p = all.middleRows(b * n, n);
    const Matrix d = kernels::serial::pairwise_distances(p);
    const double mean = d.mean();
    if (!(mean > 0.0) || !std::isfinite(mean) || target.rows() != n) continue;
    const Matrix diff = target - d / mean;
    losses[static_cast<std::size_t>(b)] = diff.cwiseAbs().mean();
    valid[static_cast<std::size_t>(b)] = 1;
    const Matrix g = -diff.unaryExpr([](double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }) / n2;
    const double gd = g.cwiseProduct(d).sum();
    const Matrix h = (g / mean).array() - gd / (mean * mean * n2);
    const Matrix hs = h + h.transpose();
    Matrix grad = Matrix::Zero(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (d(i, j) <= 0.0) continue;
        const double w = hs(i, j) / d(i, j);
        grad(i, 0) += w * (p(i, 0) - p(j, 0));
        grad(i, 1) += w * (p(i, 1) - p(j, 1));
      }
    }
    grads[static_cast<std::size_t>(b)] = std::move(grad);
  }
  double valid_sum = 0.0;
  std::size_t valid_count = 0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (valid[static_cast<std::size_t>(b)]) {
      valid_sum += losses[static_cast<std::size_t>(b)];
      ++valid_count;
    }
  }
  const double penalty = kDegeneratePenalty * (valid_count ? valid_sum / static_cast<double>(valid_count) : 1.0);
  double total = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    if (!valid[static_cast<std::size_t>(b)]) losses[static_cast<std::size_t>(b)] = penalty;
    total += losses[static_cast<std::size_t>(b)];
  }
  if (degenerate) *degenerate = static_cast<std::size_t>(batch) - valid_count;
  if (per_sample) *per_sample = losses;
  Matrix out(1, 1);
  out(0, 0) = total / static_cast<double>(batch);
  return recon.tape->record(std::move(out), {recon},
                            [recon, n, batch, grads = std::move(grads)](nn::Tape& t, const Matrix&, const Matrix& g) {
                              Matrix d = Matrix::Zero(recon.rows(), 2);
                              const double s = g(0, 0) / static_cast<double>(batch);
                              for (Eigen::Index b = 0; b < batch; ++b) {
                                const Matrix& gb = grads[static_cast<std::size_t>(b)];
                                if (gb.size() != 0) d.middleRows(b * n, n) = s * gb;
                              }
                              t.accumulate(recon.id, d);
                            });
}

double reconstruction_loss(const Positions& input, const Positions& recon, const SenPartition& part, bool use_gw,
                           const SenConfig& sen) {
  const Matrix x_in = layout_feature(input);
  Matrix x_rec;
  try {
    x_rec = layout_feature(recon);
  } catch (const DegenerateLayoutError&) {
    return kDegeneratePenalty;
  }
  if (!use_gw) return (x_in - x_rec).cwiseAbs().mean();
  const SenPermutation m = sen_permutation(x_in, x_rec, part, sen);
  return (permute_feature(x_in, m.perm) - x_rec).cwiseAbs().mean();
}

Matrix sample_prior(std::size_t count, std::size_t dim, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index k = 0; k < out.cols(); ++k) out(i, k) = u(rng);
  return out;
}

nn::Var variational_loss(nn::Var z, const Matrix& prior, const SliceSet& slices) {
  Matrix grad;
  Matrix out(1, 1);
  out(0, 0) = sliced_wasserstein(z.value(), prior, slices, &grad);
  return z.tape->record(std::move(out), {z}, [z, grad = std::move(grad)](nn::Tape& t, const Matrix&, const Matrix& g) {
    t.accumulate(z.id, g(0, 0) * grad);
  });
}

nn::Var total_loss(nn::Var recon, nn::Var variational, double beta) {
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be nonnegative");
  return nn::add(recon, nn::scale(variational, beta));
}

BatchLoss batch_loss(nn::Binder& bind, const ModelParams& params, const GraphContext& ctx, const BatchInputs& in,
                     const ForwardPass& pass) {
  const std::size_t batch = in.features.size();
  if (batch == 0) throw std::invalid_argument("batch_loss: empty batch");
  nn::Tape& tape = bind.tape();
  nn::Var x = tape.constant(stack_features(in.features, ctx.node_count));
  nn::Var z = params.encoder(bind, x, ctx, batch, pass);
  nn::Var recon = params.decoder(bind, z, ctx, pass);

  BatchLoss out;
  out.perms.resize(batch);
  const auto n = static_cast<Eigen::Index>(ctx.node_count);
  std::vector<Matrix> targets(batch);
  const Matrix& positions = recon.value();
  const bool match = params.config.use_gw && in.partition && !in.fixed_perms;
#pragma omp parallel for schedule(dynamic) num_threads(thread_limit())
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<int>& perm = out.perms[b];
    if (in.fixed_perms) {
      perm = (*in.fixed_perms)[b];
    } else {
      perm.resize(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), 0);
      if (match) {
        const Positions p = positions.middleRows(static_cast<Eigen::Index>(b) * n, n);
        const Matrix d = kernels::serial::pairwise_distances(p);
        const double mean = d.mean();
        if (mean > 0.0 && std::isfinite(mean)) {
          perm = sen_permutation(in.features[b], d / mean, *in.partition, params.config.sen).perm;
        }
      }
    }
    targets[b] = permute_feature(in.features[b], perm);
  }
  out.recon = reconstruction_loss(recon, targets, &out.per_sample_recon, &out.degenerate);

  std::mt19937_64 rng(in.noise_seed);
  const Matrix prior = sample_prior(batch, static_cast<std::size_t>(params.config.latent_dim), rng);
  const SliceSet slices = make_slices(static_cast<std::size_t>(params.config.slices),
                                      static_cast<std::size_t>(params.config.latent_dim), rng());
  out.variational = variational_loss(z, prior, slices);
  out.total = total_loss(out.recon, out.variational, params.config.beta);
  out.z = z.value();
  return out;
}

}  // namespace layoutgen
