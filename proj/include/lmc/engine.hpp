#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "lmc/backward.hpp"
#include "lmc/graph.hpp"
#include "lmc/matrix.hpp"
#include "lmc/model.hpp"
#include "lmc/partition.hpp"
#include "lmc/rng.hpp"

namespace lmc {

enum class EstimatorMode {
  FullBatch,        // exact gradient, no sampling
  BackwardSGD,      // exact passes, reweighted batch sums
  Cluster,          // both passes restricted to the induced batch subgraph
  GAS,              // historical boundary embeddings, truncated backward
  LMC,              // compensated forward and backward
  LMC_ForwardOnly,  // compensated forward, truncated backward
};

EstimatorMode parse_mode(const std::string& s);
std::string to_string(EstimatorMode m);

enum class BetaScore { XSquared, TwoXMinusXSquared, X, One, SinX };

// Per-node mixing weight for boundary values: beta_i = alpha * score(x) with
// x = deg(i within the batch closure) / deg(i), clamped to [0, 1]. A node
// with global degree 0 gets beta 0.
struct BetaSchedule {
  double alpha = 0.4;
  BetaScore score = BetaScore::TwoXMinusXSquared;

  // alpha 1 with constant score for large batches (c >= B/2), otherwise
  // alpha 0.4 with score 2x - x^2
  static BetaSchedule defaults_for(std::size_t clusters_per_batch,
                                   std::size_t num_clusters);
};

BetaScore parse_beta_score(const std::string& s);
std::string to_string(BetaScore s);

double beta_for(const Graph& g, const HaloIndex& index, NodeId i,
                const BetaSchedule& sched);

// Stale per-node state kept across steps: embeddings, their preactivations,
// and the pulled-back loss gradients for every hidden layer.
struct HistoricalStore {
  std::size_t n = 0;
  std::vector<Matrix> h_bar;  // layers 1..L, [d_l x n]
  std::vector<Matrix> z_bar;  // layers 1..L
  std::vector<Matrix> v_bar;  // layers 1..L-1

  static HistoricalStore zeros(const std::vector<std::size_t>& dims, std::size_t n);

  std::size_t num_layers() const { return h_bar.size(); }
  Matrix& h(std::size_t l) { return h_bar[l - 1]; }
  const Matrix& h(std::size_t l) const { return h_bar[l - 1]; }
  Matrix& z(std::size_t l) { return z_bar[l - 1]; }
  const Matrix& z(std::size_t l) const { return z_bar[l - 1]; }
  Matrix& v(std::size_t l) { return v_bar[l - 1]; }
  const Matrix& v(std::size_t l) const { return v_bar[l - 1]; }

  // one-shot exact fill from a full forward/backward pass
  void warm_start(const Graph& g, const NormalizedAdjacency& adj,
                  const ModelParams& params);
};

bool bitwise_equal(const HistoricalStore& a, const HistoricalStore& b);
void save_store(const HistoricalStore& s, const std::string& path);
HistoricalStore load_store(const std::string& path);

// Records which nodes' data (features, labels, store columns) a step reads
// or writes.
struct TouchLog {
  std::unordered_set<NodeId> nodes;
  std::size_t reads = 0;
  std::size_t writes = 0;

  void read(NodeId id) {
    ++reads;
    nodes.insert(id);
  }
  void write(NodeId id) {
    ++writes;
    nodes.insert(id);
  }
  void clear() {
    nodes.clear();
    reads = writes = 0;
  }
};

// Within-step boundary values; column k belongs to halo.boundary[k]. Never
// written back to the store.
struct TempValues {
  std::vector<double> beta;
  std::vector<Matrix> h_hat_;    // layers 1..L
  std::vector<Matrix> h_tilde_;  // layers 1..L
  std::vector<Matrix> z_tilde_;  // layers 1..L
  std::vector<Matrix> v_hat_;    // layers 1..L
  std::vector<Matrix> v_tilde_;  // layers 1..L-1

  Matrix& h_hat(std::size_t l) { return h_hat_[l - 1]; }
  Matrix& h_tilde(std::size_t l) { return h_tilde_[l - 1]; }
  Matrix& z_tilde(std::size_t l) { return z_tilde_[l - 1]; }
  Matrix& v_hat(std::size_t l) { return v_hat_[l - 1]; }
  Matrix& v_tilde(std::size_t l) { return v_tilde_[l - 1]; }
  const Matrix& h_hat(std::size_t l) const { return h_hat_[l - 1]; }
  const Matrix& h_tilde(std::size_t l) const { return h_tilde_[l - 1]; }
  const Matrix& z_tilde(std::size_t l) const { return z_tilde_[l - 1]; }
  const Matrix& v_hat(std::size_t l) const { return v_hat_[l - 1]; }
  const Matrix& v_tilde(std::size_t l) const { return v_tilde_[l - 1]; }
};

struct StepOptions {
  bool mix_boundary = true;          // blend stale and within-step boundary values
  bool compensate_backward = true;   // keep out-of-batch terms in the backward pass
};

StepOptions step_options_for(EstimatorMode m);

struct CompensatedForward {
  std::vector<Matrix> aggregates;  // per layer, in-batch pre-theta sums
  TempValues temp;
};

// Updates the stored embeddings of the batch nodes layer by layer, using
// fresh in-batch values and mixed boundary values, and fills the boundary
// temporaries. Only in-batch store columns are written.
CompensatedForward forward_compensated(HistoricalStore& store, const MiniBatch& batch,
                                       const HaloIndex& index, const Graph& g,
                                       const NormalizedAdjacency& adj,
                                       const ModelParams& params,
                                       const BetaSchedule& sched,
                                       const StepOptions& opts, TouchLog* touch);

// Updates the stored layer gradients of the batch nodes from the top layer
// down, compensating with boundary temporaries when enabled. Returns the
// in-batch auxiliaries for all layers including the top one.
AuxVars backward_compensated(HistoricalStore& store, const MiniBatch& batch,
                             const HaloIndex& index, const Graph& g,
                             const NormalizedAdjacency& adj,
                             const ModelParams& params, CompensatedForward& fwd,
                             const StepOptions& opts, TouchLog* touch);

struct MinibatchResult {
  GradientSet grads;
  double loss = 0.0;  // reweighted batch loss (full loss for FullBatch)
};

// One gradient evaluation in the given mode. Store-backed modes (GAS, LMC,
// LMC_ForwardOnly) update `store` in place; the other modes ignore it.
MinibatchResult minibatch_gradients(EstimatorMode mode, HistoricalStore* store,
                                    const MiniBatch& batch, const Graph& g,
                                    const NormalizedAdjacency& adj,
                                    const ModelParams& params,
                                    const BetaSchedule& sched, TouchLog* touch);

struct DivergenceError : std::runtime_error {
  explicit DivergenceError(std::size_t iteration)
      : std::runtime_error("non-finite loss at iteration " +
                           std::to_string(iteration)),
        iteration(iteration) {}
  std::size_t iteration;
};

struct EngineOptions {
  EstimatorMode mode = EstimatorMode::LMC;
  std::size_t clusters_per_batch = 1;
  double eta = 0.1;
  std::optional<BetaSchedule> sched;  // defaults_for(c, B) when absent
  bool warm_start = false;
  std::uint64_t seed = 0;
};

struct StepResult {
  std::size_t iteration = 0;  // 1-based, after the step
  double loss = 0.0;
  double grad_norm = 0.0;
  std::size_t nodes_touched = 0;
  GradientSet grads;  // the estimator output applied in this step
};

// Plain SGD driver: sample a batch, evaluate the configured estimator,
// update the parameters in place. eta = 0 still refreshes the store.
class Engine {
 public:
  Engine(const Graph& g, const NormalizedAdjacency& adj, const Partition& part,
         ModelParams params, const EngineOptions& opts);

  StepResult step();
  StepResult step_on_batch(const MiniBatch& batch);
  MiniBatch sample();

  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  const HistoricalStore& store() const { return store_; }
  HistoricalStore& store() { return store_; }
  const BetaSchedule& schedule() const { return sched_; }
  const TouchLog& last_touches() const { return touch_; }
  std::size_t iteration() const { return iter_; }
  EstimatorMode mode() const { return opts_.mode; }

 private:
  const Graph& g_;
  const NormalizedAdjacency& adj_;
  const Partition& part_;
  EngineOptions opts_;
  BetaSchedule sched_;
  ModelParams params_;
  HistoricalStore store_;
  Rng rng_;
  TouchLog touch_;
  std::size_t iter_ = 0;
};

}  // namespace lmc
