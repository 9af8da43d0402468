#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lmc/graph.hpp"
#include "lmc/matrix.hpp"

namespace lmc {

// Graph convolution stack without biases:
//   z_i^l = theta_l * sum_{j in row(i)} a_ij h_j^{l-1},   h_i^l = relu(z_i^l)
// with the identity instead of relu at the last layer, followed by a
// softmax-cross-entropy head w_out. relu'(0) is taken as 0.
struct ModelParams {
  std::vector<Matrix> theta;  // theta[l-1] is layer l, shape [d_l x d_{l-1}]
  Matrix w_out;               // [classes x d_L]

  std::size_t num_layers() const { return theta.size(); }
  std::size_t in_dim() const { return theta.front().cols(); }
  std::size_t out_dim() const { return theta.back().rows(); }
  std::size_t num_classes() const { return w_out.rows(); }
  // d_0 .. d_L
  std::vector<std::size_t> dims() const;

  void add_scaled(const struct GradientSet& g, double s);
  bool all_finite() const;
};

// Glorot-uniform init, bound sqrt(6 / (fan_in + fan_out)). Matrices are
// filled column-major in declared order (theta_1 .. theta_L, then w_out)
// from one seeded stream.
ModelParams init_glorot(const std::vector<std::size_t>& dims, std::size_t classes,
                        std::uint64_t seed);

// Forward-pass caches for a set of nodes; column k of every matrix belongs to
// nodes[k].
struct LayerState {
  std::vector<NodeId> nodes;
  std::vector<Matrix> embeddings;  // L+1 entries, embeddings[l] is [d_l x m]
  std::vector<Matrix> preacts;     // preacts[l-1] is z^l
  std::vector<Matrix> aggregates;  // aggregates[l-1] is the pre-theta sum at layer l
};

struct LayerOut {
  Matrix embeddings;
  Matrix preacts;
  Matrix aggregates;
};

// One propagation layer over every row of adj
LayerOut layer_forward(const NormalizedAdjacency& adj, const Matrix& h_prev,
                       const Matrix& theta, bool last_layer);

LayerState forward_full(const Graph& g, const NormalizedAdjacency& adj,
                        const ModelParams& params);

// Cross-entropy head over an explicit node set. loss = scale * sum of
// per-node cross entropies; gradients carry the same scale.
struct LossGrad {
  double loss = 0.0;
  Matrix dloss_dh;  // [d_L x m], nonzero only in node_set columns
  Matrix dloss_dw;  // [classes x d_L]
};

LossGrad loss_and_output_grad(const LayerState& state, const ModelParams& params,
                              const Graph& g, const std::vector<NodeId>& node_set,
                              double scale);

double cross_entropy_at(const Matrix& w_out, std::span<const double> h, int label);

// grad of cross entropy w.r.t. the logits: softmax(w h) - onehot(label)
void logit_residual(const Matrix& w_out, std::span<const double> h, int label,
                    std::span<double> out);

// argmax class, ties resolved to the lowest class id
int predict_class(const Matrix& w_out, std::span<const double> h);

// fraction of node_set whose prediction matches g.labels
double accuracy(const LayerState& state, const ModelParams& params, const Graph& g,
                const std::vector<NodeId>& node_set);

void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace lmc
