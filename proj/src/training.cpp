#include "bitgear/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "bitgear/parallel.hpp"
#include "bitgear/propagation.hpp"
#include "bitgear/scoring.hpp"

namespace bitgear {

namespace {

constexpr double kPi = 3.14159265358979323846;

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::vector<BprTriple> sample_bpr_batch(const InteractionGraph& graph,
                                        std::size_t batch_size, Rng& rng) {
  const std::size_t num_edges = graph.num_edges();
  if (num_edges == 0) throw std::invalid_argument("graph has no edges");
  const std::uint32_t num_items = graph.num_items();

  std::vector<BprTriple> batch;
  batch.reserve(batch_size);
  bool warned = false;
  for (std::size_t slot = 0; slot < batch_size; ++slot) {
    bool filled = false;
    for (std::size_t edge_try = 0; edge_try < 100 && !filled; ++edge_try) {
      const auto [u, pos] = graph.edge(rng.below(num_edges));
      for (std::size_t rej = 0; rej < 1000; ++rej) {
        const std::uint32_t j = rng.index(num_items);
        if (!graph.user_has_item(u, j)) {
          batch.push_back({u, pos, j});
          filled = true;
          break;
        }
      }
      if (!filled && !warned) {
        std::cerr << "warning: negative sampling hit the rejection cap for "
                     "user "
                  << u << "; resampling\n";
        warned = true;
      }
    }
    // a slot that cannot be filled (every sampled user interacts with
    // everything) is dropped
  }
  return batch;
}

BprGrad bpr_loss_and_score_grads(double pos_score, double neg_score) {
  const double x = pos_score - neg_score;
  const double s = sigmoid(-x);
  return {softplus(-x), -s, s};
}

double estimator_factor(double v, Estimator kind, double gamma) {
  switch (kind) {
    case Estimator::DiracGauss: {
      const double gv = gamma * v;
      return 2.0 * gamma / std::sqrt(kPi) * std::exp(-gv * gv);
    }
    case Estimator::Ste:
      return 1.0;
    case Estimator::Tanh: {
      const double t = std::tanh(gamma * v);
      return gamma * (1.0 - t * t);
    }
  }
  return 1.0;
}

void estimate_sign_gradient(std::span<const double> v,
                            std::span<const double> upstream, Estimator kind,
                            double gamma, std::span<double> out) {
  for (std::size_t k = 0; k < v.size(); ++k)
    out[k] = upstream[k] * estimator_factor(v[k], kind, gamma);
}

std::vector<double> distill_rank_weights(WkScheme scheme, std::uint32_t top_r,
                                         double lambda1, double lambda2) {
  std::vector<double> w(top_r);
  for (std::uint32_t k = 1; k <= top_r; ++k) {
    double v = 0.0;
    switch (scheme) {
      case WkScheme::Geometric:
        v = lambda1 * std::exp(-lambda2 * static_cast<double>(k));
        break;
      case WkScheme::LinearDecay:
        v = static_cast<double>(top_r - k) / static_cast<double>(top_r);
        break;
      case WkScheme::InverseRank:
        v = 1.0 / static_cast<double>(k);
        break;
      case WkScheme::ExpRank:
        v = std::pow(2.0, -static_cast<double>(k));
        break;
    }
    w[k - 1] = v;
  }
  return w;
}

TeacherCache build_teacher_cache(const LayerOutputs& teacher_layers,
                                 std::uint32_t num_users,
                                 const LayerWeights& weights,
                                 std::uint32_t top_r, std::size_t threads) {
  const std::size_t rows = teacher_layers.layers[0].rows;
  const std::uint32_t num_items =
      static_cast<std::uint32_t>(rows - num_users);
  if (weights.num_layers() != teacher_layers.num_layers())
    throw std::invalid_argument("layer weights length mismatch");
  std::uint32_t r_eff = top_r;
  if (r_eff > num_items) {
    std::cerr << "warning: R=" << top_r << " exceeds item count "
              << num_items << "; clamping\n";
    r_eff = num_items;
  }
  if (r_eff == 0) throw std::invalid_argument("R must be >= 1");

  TeacherCache cache;
  cache.num_users = num_users;
  cache.num_layers = static_cast<std::uint32_t>(teacher_layers.num_layers());
  cache.top_r = r_eff;
  cache.items.assign(static_cast<std::size_t>(num_users) * cache.num_layers *
                         r_eff,
                     0);

  parallel_for(0, num_users, threads, [&](std::size_t uz) {
    const auto u = static_cast<std::uint32_t>(uz);
    std::vector<double> scores(num_items);
    std::vector<std::uint32_t> order(num_items);
    for (std::size_t l = 0; l < cache.num_layers; ++l) {
      const auto& layer = teacher_layers.layers[l];
      const auto vu = layer.row(u);
      const double wsq = weights.w[l] * weights.w[l];
      for (std::uint32_t i = 0; i < num_items; ++i) {
        const auto vi = layer.row(num_users + i);
        double dot = 0.0;
        for (std::size_t k = 0; k < vu.size(); ++k) dot += vu[k] * vi[k];
        scores[i] = wsq * dot;
      }
      for (std::uint32_t i = 0; i < num_items; ++i) order[i] = i;
      std::partial_sort(order.begin(), order.begin() + r_eff, order.end(),
                        [&scores](std::uint32_t a, std::uint32_t b) {
                          if (scores[a] != scores[b])
                            return scores[a] > scores[b];
                          return a < b;
                        });
      std::uint32_t* dst =
          cache.items.data() + (uz * cache.num_layers + l) * r_eff;
      std::copy(order.begin(), order.begin() + r_eff, dst);
    }
  });
  return cache;
}

DistillResult distill_loss_and_score_grads(
    std::span<const double> student_scores, std::uint32_t num_layers,
    std::span<const double> rank_weights) {
  const std::size_t r = rank_weights.size();
  if (student_scores.size() != num_layers * r)
    throw std::invalid_argument("student score count mismatch");
  DistillResult res;
  res.d_scores.resize(student_scores.size());
  const double inv_r = 1.0 / static_cast<double>(r);
  for (std::size_t l = 0; l < num_layers; ++l) {
    for (std::size_t k = 0; k < r; ++k) {
      const double y = student_scores[l * r + k];
      const double wk = rank_weights[k];
      res.loss += inv_r * wk * softplus(-y);
      res.d_scores[l * r + k] = -inv_r * wk * sigmoid(-y);
    }
  }
  return res;
}

void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grads, double eta) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam shape mismatch");
  ++state.step;
  const double bc1 =
      1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 =
      1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = state.beta1 * state.m[k] + (1.0 - state.beta1) * grads[k];
    state.v[k] =
        state.beta2 * state.v[k] + (1.0 - state.beta2) * grads[k] * grads[k];
    const double mhat = state.m[k] / bc1;
    const double vhat = state.v[k] / bc2;
    params[k] -= eta * mhat / (std::sqrt(vhat) + state.eps);
  }
}

namespace {

// Forward state shared by the teacher objective, the student objective and
// the identity-mode gradient oracle. In sign mode `bq` holds alpha * sign(v)
// per layer; in identity mode scores read the raw layers directly.
struct ForwardState {
  LayerOutputs layers;
  std::vector<DenseEmbeddingTable> bq;
  std::vector<std::vector<double>> alphas;  // per layer, per node
  bool sign_mode = false;

  const DenseEmbeddingTable& b(std::size_t l) const {
    return sign_mode ? bq[l] : layers.layers[l];
  }
};

ForwardState run_forward(const InteractionGraph& graph,
                         const DenseEmbeddingTable& base,
                         const TrainingConfig& cfg, QuantMode quant,
                         std::size_t threads) {
  ForwardState fs;
  fs.layers = propagate(graph, base, cfg.layers, cfg.norm_mode, threads);
  fs.sign_mode = quant == QuantMode::Sign;
  if (!fs.sign_mode) return fs;

  const std::size_t num_layers = fs.layers.num_layers();
  const std::size_t rows = base.rows;
  const std::size_t d = base.dim;
  fs.bq.assign(num_layers, DenseEmbeddingTable(rows, d));
  fs.alphas.assign(num_layers, std::vector<double>(rows, 0.0));
  for (std::size_t l = 0; l < num_layers; ++l) {
    const auto& v = fs.layers.layers[l];
    auto& b = fs.bq[l];
    auto& alpha = fs.alphas[l];
    parallel_for(0, rows, threads, [&](std::size_t node) {
      const auto row = v.row(node);
      const double a = l1_mean_scaler(row);
      alpha[node] = a;
      auto out = b.row(node);
      for (std::size_t k = 0; k < d; ++k)
        out[k] = row[k] < 0.0 ? -a : a;
    });
  }
  return fs;
}

double segment_dot(const DenseEmbeddingTable& b, std::size_t r1,
                   std::size_t r2) {
  const auto x = b.row(r1);
  const auto y = b.row(r2);
  double dot = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) dot += x[k] * y[k];
  return dot;
}

struct GradAccum {
  std::vector<DenseEmbeddingTable> gb;
  double loss_bpr = 0.0;
  double loss_id = 0.0;
};

void axpy(std::span<double> out, double a, std::span<const double> x) {
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += a * x[k];
}

BatchLosses run_batch(const InteractionGraph& graph,
                      const DenseEmbeddingTable& base,
                      const TrainingConfig& cfg,
                      std::span<const BprTriple> batch,
                      const TeacherCache* cache, QuantMode quant,
                      DenseEmbeddingTable* grad_out, std::size_t threads,
                      bool deterministic) {
  const LayerWeights weights =
      LayerWeights::for_scheme(cfg.wl_scheme, cfg.layers);
  const std::size_t num_layers = weights.num_layers();
  std::vector<double> wsq(num_layers);
  for (std::size_t l = 0; l < num_layers; ++l)
    wsq[l] = weights.w[l] * weights.w[l];

  const std::uint32_t num_users = graph.num_users();
  if (cache) {
    if (cache->num_layers != num_layers)
      throw std::invalid_argument("cache layer count does not match config L");
    if (cache->num_users != num_users)
      throw std::invalid_argument("cache user count does not match graph");
  }

  ForwardState fs = run_forward(graph, base, cfg, quant, threads);

  std::vector<std::uint32_t> distill_users;
  std::vector<double> rank_weights;
  if (cache) {
    distill_users.reserve(batch.size());
    for (const auto& t : batch) distill_users.push_back(t.user);
    std::sort(distill_users.begin(), distill_users.end());
    distill_users.erase(
        std::unique(distill_users.begin(), distill_users.end()),
        distill_users.end());
    rank_weights = distill_rank_weights(cfg.wk_scheme, cache->top_r,
                                        cfg.lambda1, cfg.lambda2);
  }

  const bool want_grad = grad_out != nullptr;
  const std::size_t workers =
      deterministic ? 1 : std::max<std::size_t>(threads, 1);
  std::vector<GradAccum> accs(workers);
  if (want_grad)
    for (auto& acc : accs)
      acc.gb.assign(num_layers, DenseEmbeddingTable(base.rows, base.dim));

  const double inv_r =
      cache ? 1.0 / static_cast<double>(cache->top_r) : 0.0;

  parallel_chunks(0, batch.size(), workers,
                  [&](std::size_t tid, std::size_t lo, std::size_t hi) {
    GradAccum& acc = accs[tid];
    for (std::size_t t = lo; t < hi; ++t) {
      const BprTriple& triple = batch[t];
      const std::size_t ur = triple.user;
      const std::size_t pr = static_cast<std::size_t>(num_users) + triple.pos;
      const std::size_t nr = static_cast<std::size_t>(num_users) + triple.neg;
      double pos = 0.0, neg = 0.0;
      for (std::size_t l = 0; l < num_layers; ++l) {
        pos += wsq[l] * segment_dot(fs.b(l), ur, pr);
        neg += wsq[l] * segment_dot(fs.b(l), ur, nr);
      }
      const BprGrad g = bpr_loss_and_score_grads(pos, neg);
      acc.loss_bpr += g.loss;
      if (want_grad) {
        for (std::size_t l = 0; l < num_layers; ++l) {
          const auto& b = fs.b(l);
          auto gu = acc.gb[l].row(ur);
          axpy(gu, wsq[l] * g.d_pos, b.row(pr));
          axpy(gu, wsq[l] * g.d_neg, b.row(nr));
          axpy(acc.gb[l].row(pr), wsq[l] * g.d_pos, b.row(ur));
          axpy(acc.gb[l].row(nr), wsq[l] * g.d_neg, b.row(ur));
        }
      }
    }
  });

  if (cache) {
    parallel_chunks(0, distill_users.size(), workers,
                    [&](std::size_t tid, std::size_t lo, std::size_t hi) {
      GradAccum& acc = accs[tid];
      for (std::size_t idx = lo; idx < hi; ++idx) {
        const std::uint32_t u = distill_users[idx];
        for (std::size_t l = 0; l < num_layers; ++l) {
          const auto& b = fs.b(l);
          const auto items = cache->items_for(u, l);
          for (std::size_t k = 0; k < items.size(); ++k) {
            const std::size_t ir =
                static_cast<std::size_t>(num_users) + items[k];
            const double y = wsq[l] * segment_dot(b, u, ir);
            const double wk = rank_weights[k];
            acc.loss_id += inv_r * wk * softplus(-y);
            if (want_grad) {
              const double delta = -inv_r * wk * sigmoid(-y);
              axpy(acc.gb[l].row(u), delta * wsq[l], b.row(ir));
              axpy(acc.gb[l].row(ir), delta * wsq[l], b.row(u));
            }
          }
        }
      }
    });
  }

  BatchLosses losses;
  for (const auto& acc : accs) {
    losses.bpr += acc.loss_bpr;
    losses.id += acc.loss_id;
  }
  double sq = 0.0;
  for (double v : base.values) sq += v * v;
  losses.l2 = cfg.lambda * sq;

  if (want_grad) {
    // merge thread accumulators in thread order
    std::vector<DenseEmbeddingTable>& gb = accs[0].gb;
    for (std::size_t tid = 1; tid < workers; ++tid)
      for (std::size_t l = 0; l < num_layers; ++l)
        for (std::size_t k = 0; k < gb[l].values.size(); ++k)
          gb[l].values[k] += accs[tid].gb[l].values[k];

    if (fs.sign_mode) {
      // chain through b = alpha * q(v): d/dv = alpha * g(v) elementwise,
      // alpha held constant (stop-gradient through the scaler)
      for (std::size_t l = 0; l < num_layers; ++l) {
        const auto& v = fs.layers.layers[l];
        auto& g = gb[l];
        const auto& alpha = fs.alphas[l];
        parallel_for(0, base.rows, threads, [&](std::size_t node) {
          const double a = alpha[node];
          auto grow = g.row(node);
          const auto vrow = v.row(node);
          for (std::size_t k = 0; k < grow.size(); ++k)
            grow[k] *= a * estimator_factor(vrow[k], cfg.estimator, cfg.gamma);
        });
      }
    }

    *grad_out = propagate_adjoint(graph, gb, cfg.norm_mode, threads);
    const double two_lambda = 2.0 * cfg.lambda;
    for (std::size_t k = 0; k < grad_out->values.size(); ++k)
      grad_out->values[k] += two_lambda * base.values[k];
  }
  return losses;
}

struct LoopResult {
  DenseEmbeddingTable base;
  AdamState adam;
};

DenseEmbeddingTable run_training_loop(const InteractionGraph& graph,
                                      DenseEmbeddingTable base,
                                      const TrainingConfig& cfg,
                                      const TeacherCache* cache,
                                      std::uint32_t epochs,
                                      const TrainOptions& options) {
  Rng sample_rng(cfg.seed, RngPurpose::Sampling);
  AdamState adam(base.values.size());
  const std::size_t batches_per_epoch =
      (graph.num_edges() + cfg.batch_size - 1) / cfg.batch_size;
  DenseEmbeddingTable grad;

  for (std::uint32_t epoch = 1; epoch <= epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double bpr_sum = 0.0, id_sum = 0.0, l2_sum = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const auto batch = sample_bpr_batch(graph, cfg.batch_size, sample_rng);
      const BatchLosses losses =
          run_batch(graph, base, cfg, batch, cache, cache ? QuantMode::Sign
                                                          : QuantMode::Identity,
                    &grad, options.threads, options.deterministic);
      if (!std::isfinite(losses.total()))
        throw std::runtime_error(
            "training diverged: non-finite loss at epoch " +
            std::to_string(epoch) + " batch " + std::to_string(b));
      adam_step(adam, base.values, grad.values, cfg.eta);
      bpr_sum += losses.bpr;
      id_sum += losses.id;
      l2_sum += losses.l2;
    }
    if (options.on_epoch) {
      EpochLog log;
      log.epoch = epoch;
      const double nb = static_cast<double>(batches_per_epoch);
      log.loss_bpr = bpr_sum / nb;
      log.loss_id = id_sum / nb;
      log.loss_l2 = l2_sum / nb;
      log.lr = cfg.eta;
      log.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
      options.on_epoch(log);
    }
  }
  return base;
}

}  // namespace

BatchLosses teacher_batch_gradient(const InteractionGraph& graph,
                                   const DenseEmbeddingTable& base,
                                   const TrainingConfig& cfg,
                                   std::span<const BprTriple> batch,
                                   DenseEmbeddingTable& grad_out,
                                   std::size_t threads) {
  return run_batch(graph, base, cfg, batch, nullptr, QuantMode::Identity,
                   &grad_out, threads, false);
}

double teacher_batch_loss(const InteractionGraph& graph,
                          const DenseEmbeddingTable& base,
                          const TrainingConfig& cfg,
                          std::span<const BprTriple> batch) {
  return run_batch(graph, base, cfg, batch, nullptr, QuantMode::Identity,
                   nullptr, 1, true)
      .total();
}

BatchLosses student_batch_gradient(const InteractionGraph& graph,
                                   const DenseEmbeddingTable& base,
                                   const TeacherCache& cache,
                                   const TrainingConfig& cfg,
                                   std::span<const BprTriple> batch,
                                   QuantMode quant,
                                   DenseEmbeddingTable& grad_out,
                                   std::size_t threads) {
  return run_batch(graph, base, cfg, batch, &cache, quant, &grad_out, threads,
                   false);
}

double student_batch_loss(const InteractionGraph& graph,
                          const DenseEmbeddingTable& base,
                          const TeacherCache& cache, const TrainingConfig& cfg,
                          std::span<const BprTriple> batch, QuantMode quant) {
  return run_batch(graph, base, cfg, batch, &cache, quant, nullptr, 1, true)
      .total();
}

TeacherResult pretrain_teacher(const InteractionGraph& graph,
                               const TrainingConfig& cfg,
                               const TrainOptions& options) {
  cfg.validate();
  Rng init_rng(cfg.seed, RngPurpose::Init);
  DenseEmbeddingTable base =
      normal_init(graph.num_nodes(), cfg.d, 0.0, 0.1, init_rng);
  base = run_training_loop(graph, std::move(base), cfg, nullptr,
                           cfg.epochs_teacher, options);
  TeacherResult res;
  res.layers =
      propagate(graph, base, cfg.layers, cfg.norm_mode, options.threads);
  res.base = std::move(base);
  return res;
}

StudentResult train_student(const InteractionGraph& graph,
                            const DenseEmbeddingTable& teacher_base,
                            const TeacherCache& cache,
                            const TrainingConfig& cfg,
                            const TrainOptions& options) {
  cfg.validate();
  if (teacher_base.rows != graph.num_nodes())
    throw std::invalid_argument("teacher base does not match graph");
  if (teacher_base.dim != cfg.d)
    throw std::invalid_argument("teacher base dim does not match config d");
  if (cache.num_layers != cfg.layers + 1)
    throw std::invalid_argument("cache layer count does not match config L");

  // warm start from the teacher's parameters
  DenseEmbeddingTable base = run_training_loop(graph, teacher_base, cfg,
                                               &cache, cfg.epochs_student,
                                               options);
  const LayerWeights weights =
      LayerWeights::for_scheme(cfg.wl_scheme, cfg.layers);
  const LayerOutputs layers =
      propagate(graph, base, cfg.layers, cfg.norm_mode, options.threads);
  StudentResult res;
  res.table =
      build_tables(layers, graph.num_users(), weights, options.threads);
  res.base = std::move(base);
  return res;
}

}  // namespace bitgear
