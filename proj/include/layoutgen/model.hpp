#pragma once

#include "layoutgen/graph.hpp"
#include "layoutgen/kernels.hpp"
#include "layoutgen/nn.hpp"
#include "layoutgen/ot.hpp"

#include "json.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace layoutgen {

enum class GnnKind { mlp, gcn, gin1, gin_mlp };

std::string_view gnn_kind_name(GnnKind k);  // "mlp", "gcn", "gin1", "ginmlp"
GnnKind gnn_kind_from_name(std::string_view name);

struct ModelConfig {
  GnnKind kind = GnnKind::gin_mlp;
  bool use_gw = true;
  int layers = 3;
  int hidden = 32;  // 32, 64 or 128
  int latent_dim = 2;
  double beta = 10.0;
  int slices = 50;
  std::uint64_t seed = 0;
  std::size_t node_count = 0;
  SenConfig sen;
};

// Width and batch size keyed to graph size: 32 / 100 below 150 nodes,
// 64 / 100 below 500, 128 / 40 above.
int default_hidden_width(std::size_t node_count);
std::size_t default_batch_size(std::size_t node_count);

void validate(const ModelConfig& c);
nlohmann::json config_to_json(const ModelConfig& c);
ModelConfig config_from_json(const nlohmann::json& j);

// Sparse propagation operators of one graph.
struct GraphContext {
  std::size_t node_count = 0;
  SparseOperator neighbor_mean;
  SparseOperator gcn;

  static GraphContext from(const Graph& g);
};

// Running statistics observed by a train-mode batch norm, applied after the
// pass so forward passes never mutate parameters.
struct BatchStat {
  std::string name;
  RowVector mean;
  RowVector unbiased_var;
};

struct ForwardPass {
  nn::Mode mode = nn::Mode::train;
  std::vector<BatchStat>* stats = nullptr;  // collected in train mode when set
};

/// One message-passing layer followed by batch norm and ELU.
struct GnnLayer {
  GnnKind kind = GnnKind::gin_mlp;
  nn::Linear lin0;
  nn::BatchNorm norm0;
  nn::Linear lin1;  // second perceptron layer, GIN-MLP only
  nn::BatchNorm norm1;

  nn::Var operator()(nn::Binder& bind, nn::Var h, const GraphContext& ctx, std::size_t batch,
                     const ForwardPass& pass) const;
};

struct Encoder {
  std::vector<GnnLayer> layers;
  nn::Linear head0;
  nn::BatchNorm head_norm;
  nn::Linear head1;

  // x: batch stacked N x N layout features. Returns batch x 2 latents.
  nn::Var operator()(nn::Binder& bind, nn::Var x, const GraphContext& ctx, std::size_t batch,
                     const ForwardPass& pass) const;
};

struct Decoder {
  std::vector<GnnLayer> layers;
  nn::Linear head;

  // z: batch x 2. Returns batch stacked N x 2 positions.
  nn::Var operator()(nn::Binder& bind, nn::Var z, const GraphContext& ctx, const ForwardPass& pass) const;
};

/// All learnable arrays plus batch-norm running statistics.
///
/// Values are kept representable in 32-bit floats (the storage format), so a
/// save/load round trip is exact.
struct ModelParams {
  ModelConfig config;
  Encoder encoder;
  Decoder decoder;

  static ModelParams initialize(const ModelConfig& config);

  std::vector<nn::Parameter*> trainable();
  std::vector<nn::Parameter*> arrays();  // trainable plus running statistics
  std::vector<const nn::Parameter*> arrays() const;

  void apply_batch_stats(std::span<const BatchStat> stats, double momentum = 0.1);
  void round_to_float();
};

/// Parameters of the same model on nodes relabelled by `perm` (new node i is
/// old node perm[i]): node-indexed input weight rows are permuted.
ModelParams relabel(const ModelParams& params, std::span<const int> perm);

// ---- inference (eval mode) -------------------------------------------------

RowVector encode(const GraphContext& ctx, const ModelParams& params, const Matrix& feature);
Matrix encode_batch(const GraphContext& ctx, const ModelParams& params, std::span<const Matrix> features);
// z must lie in [-1, 1]^2.
Positions decode(const GraphContext& ctx, const ModelParams& params, const RowVector& z);
std::vector<Positions> decode_batch(const GraphContext& ctx, const ModelParams& params, const Matrix& zs);

// n x (n + 2): one-hot row i followed by z.
Matrix fuse(const RowVector& z, std::size_t node_count);

// ---- losses ----------------------------------------------------------------

// Substituted for a degenerate reconstruction: this multiple of the batch
// mean over non-degenerate samples (or of 1 when none are valid).
constexpr double kDegeneratePenalty = 10.0;

/// Mean over the batch of mean |target_b - X(recon_b)|, where X is the
/// normalized distance feature of each N-row block of `recon`. Targets are
/// constants (no gradient flows into them).
nn::Var reconstruction_loss(nn::Var recon, std::span<const Matrix> targets, std::vector<double>* per_sample = nullptr,
                            std::size_t* degenerate = nullptr);

// Scalar reconstruction loss of one layout pair.
double reconstruction_loss(const Positions& input, const Positions& recon, const SenPartition& part, bool use_gw,
                           const SenConfig& sen = {});

// Uniform samples on [-1, 1]^d.
Matrix sample_prior(std::size_t count, std::size_t dim, std::mt19937_64& rng);

/// Sliced-Wasserstein distance between the latent batch and `prior`.
nn::Var variational_loss(nn::Var z, const Matrix& prior, const SliceSet& slices);

nn::Var total_loss(nn::Var recon, nn::Var variational, double beta);

struct BatchLoss {
  nn::Var total;
  nn::Var recon;
  nn::Var variational;
  Matrix z;
  std::vector<double> per_sample_recon;
  std::vector<std::vector<int>> perms;  // matching used per sample
  std::size_t degenerate = 0;
};

struct BatchInputs {
  std::span<const Matrix> features;  // input layout features
  const SenPartition* partition = nullptr;
  std::uint64_t noise_seed = 0;  // prior samples and slices
  // When set, these matchings are used instead of solving for them.
  const std::vector<std::vector<int>>* fixed_perms = nullptr;
};

/// Full objective on one batch: encode, decode, match, reconstruction and
/// variational losses.
BatchLoss batch_loss(nn::Binder& bind, const ModelParams& params, const GraphContext& ctx, const BatchInputs& in,
                     const ForwardPass& pass);

}  // namespace layoutgen
