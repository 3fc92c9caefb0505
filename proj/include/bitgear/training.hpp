#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bitgear/binarize.hpp"
#include "bitgear/config.hpp"
#include "bitgear/embedding.hpp"
#include "bitgear/graph.hpp"
#include "bitgear/rng.hpp"
#include "bitgear/scoring_types.hpp"

namespace bitgear {

struct BprTriple {
  std::uint32_t user;
  std::uint32_t pos;
  std::uint32_t neg;
};

// (u, pos) uniform over training edges; neg uniform over items with
// rejection until it is outside N(u). After 1000 rejections the edge is
// resampled (dense user); a slot that keeps failing is dropped with a
// warning so the worst case stays bounded.
std::vector<BprTriple> sample_bpr_batch(const InteractionGraph& graph,
                                        std::size_t batch_size, Rng& rng);

struct BprGrad {
  double loss;   // -ln sigmoid(pos - neg)
  double d_pos;  // -sigmoid(neg - pos)
  double d_neg;  // +sigmoid(neg - pos)
};
BprGrad bpr_loss_and_score_grads(double pos_score, double neg_score);

// Backward surrogate g for d sign / d v. dirac_gauss is
// (2*gamma/sqrt(pi)) * exp(-(gamma v)^2); ste is 1; tanh is
// gamma * (1 - tanh^2(gamma v)).
double estimator_factor(double v, Estimator kind, double gamma);
void estimate_sign_gradient(std::span<const double> v,
                            std::span<const double> upstream, Estimator kind,
                            double gamma, std::span<double> out);

// Rank-decay weights w_k for the distillation loss, k = 1..R.
std::vector<double> distill_rank_weights(WkScheme scheme, std::uint32_t top_r,
                                         double lambda1, double lambda2);

// Per user and layer, the top-R items under the teacher's layer segment
// scores (descending, index tie-break). Stored user-major.
struct TeacherCache {
  std::uint32_t num_users = 0;
  std::uint32_t num_layers = 0;  // L+1
  std::uint32_t top_r = 0;       // effective (clamped to N)
  std::vector<std::uint32_t> items;

  std::span<const std::uint32_t> items_for(std::uint32_t u,
                                           std::size_t layer) const {
    const std::size_t off =
        (static_cast<std::size_t>(u) * num_layers + layer) * top_r;
    return {items.data() + off, top_r};
  }
};

TeacherCache build_teacher_cache(const LayerOutputs& teacher_layers,
                                 std::uint32_t num_users,
                                 const LayerWeights& weights,
                                 std::uint32_t top_r, std::size_t threads = 1);

struct DistillResult {
  double loss = 0.0;
  std::vector<double> d_scores;  // per (layer, k) flattened, layer-major
};

// L_ID(u) = -(1/R) sum_l sum_k w_k ln sigmoid(y_std^(l)(u, item_k));
// student_scores is flattened (layer-major) over the cached items.
DistillResult distill_loss_and_score_grads(
    std::span<const double> student_scores, std::uint32_t num_layers,
    std::span<const double> rank_weights);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t size = 0) : m(size, 0.0), v(size, 0.0) {}
};

void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads, double eta);

// Quantization applied in the student forward. Identity replaces sign by the
// raw values with unit scalers and disables the estimator, which makes the
// whole backward exact -- the gradient-oracle path.
enum class QuantMode { Sign, Identity };

struct BatchLosses {
  double bpr = 0.0;
  double id = 0.0;
  double l2 = 0.0;
  double total() const { return bpr + id + l2; }
};

// Batch loss = sum of BPR terms + sum of L_ID over distinct batch users
// (students only) + lambda * ||base||^2. The gradient lands on the base
// table via the propagation adjoint.
BatchLosses teacher_batch_gradient(const InteractionGraph& graph,
                                   const DenseEmbeddingTable& base,
                                   const TrainingConfig& cfg,
                                   std::span<const BprTriple> batch,
                                   DenseEmbeddingTable& grad_out,
                                   std::size_t threads = 1);
double teacher_batch_loss(const InteractionGraph& graph,
                          const DenseEmbeddingTable& base,
                          const TrainingConfig& cfg,
                          std::span<const BprTriple> batch);

BatchLosses student_batch_gradient(const InteractionGraph& graph,
                                   const DenseEmbeddingTable& base,
                                   const TeacherCache& cache,
                                   const TrainingConfig& cfg,
                                   std::span<const BprTriple> batch,
                                   QuantMode quant,
                                   DenseEmbeddingTable& grad_out,
                                   std::size_t threads = 1);
double student_batch_loss(const InteractionGraph& graph,
                          const DenseEmbeddingTable& base,
                          const TeacherCache& cache, const TrainingConfig& cfg,
                          std::span<const BprTriple> batch, QuantMode quant);

struct EpochLog {
  std::size_t epoch = 0;
  double loss_bpr = 0.0;  // mean per batch
  double loss_id = 0.0;
  double loss_l2 = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};
using EpochCallback = std::function<void(const EpochLog&)>;

struct TrainOptions {
  std::size_t threads = 1;
  bool deterministic = false;  // force sequential gradient reduction
  EpochCallback on_epoch;
};

struct TeacherResult {
  DenseEmbeddingTable base;
  LayerOutputs layers;
};

TeacherResult pretrain_teacher(const InteractionGraph& graph,
                               const TrainingConfig& cfg,
                               const TrainOptions& options = {});

struct StudentResult {
  BinarizedTable table;
  DenseEmbeddingTable base;  // final latent embeddings
};

StudentResult train_student(const InteractionGraph& graph,
                            const DenseEmbeddingTable& teacher_base,
                            const TeacherCache& cache,
                            const TrainingConfig& cfg,
                            const TrainOptions& options = {});

}  // namespace bitgear
