#pragma once

#include <string>
#include <vector>

#include "lmc/graph.hpp"
#include "lmc/matrix.hpp"
#include "lmc/model.hpp"
#include "lmc/partition.hpp"

namespace lmc {

// dL/dH^l for each layer; v[l-1] is the layer-l matrix, columns follow nodes.
struct AuxVars {
  std::vector<NodeId> nodes;
  std::vector<Matrix> v;
};

struct GradientSet {
  std::vector<Matrix> g_theta;
  Matrix g_w;
};

GradientSet zeros_like(const ModelParams& params);
double max_abs_diff(const GradientSet& a, const GradientSet& b);
bool bitwise_equal(const GradientSet& a, const GradientSet& b);
double grad_norm(const GradientSet& g);

// Frobenius relative error ||approx - exact|| / ||exact||
double rel_error(const Matrix& approx, const Matrix& exact);

// Pulls dL/dH^{l+1} back one layer across the normalized adjacency:
//   V_i^l = sum_{j in row(i)} a_ij theta^T (relu'(z_j^{l+1}) ⊙ V_j^{l+1}),
// with relu' replaced by 1 when layer l+1 is the identity output layer.
Matrix backward_layer(const NormalizedAdjacency& adj, const Matrix& v_next,
                      const Matrix& z_next, const Matrix& theta_next,
                      bool next_is_last);

// Full-graph auxiliaries from the loss gradient at the top layer
AuxVars exact_aux(const NormalizedAdjacency& adj, const ModelParams& params,
                  const LayerState& state, Matrix v_top);

// Gradient assembly: g_theta_l = sum over columns of
// (relu'(z^l) ⊙ V^l) aggregates^T, restricted to `columns` and scaled.
void accumulate_theta_grads(GradientSet& out, const ModelParams& params,
                            const LayerState& state, const AuxVars& aux,
                            const std::vector<std::size_t>& columns, double scale);

struct FullPass {
  LayerState state;
  AuxVars aux;
  GradientSet grads;
  double loss = 0.0;
};

// Exact loss and gradients over the whole graph; the loss is the mean
// cross-entropy over labeled nodes.
FullPass full_pass(const Graph& g, const NormalizedAdjacency& adj,
                   const ModelParams& params);
GradientSet full_gradients(const Graph& g, const NormalizedAdjacency& adj,
                           const ModelParams& params);

// Cluster-sampled estimator with exact forward/backward over the whole graph:
// the top-layer gradient comes from the full loss, theta sums run over batch
// nodes only with weight w_theta |V| / |V_B|, and the head gradient is the
// reweighted batch mean. Averaged over all same-size batches this reproduces
// the full gradient exactly.
GradientSet backward_sgd_gradients(const Graph& g, const NormalizedAdjacency& adj,
                                   const ModelParams& params, const MiniBatch& batch);

// Central-difference gradient of the full loss, step h per scalar parameter
GradientSet finite_diff_gradients(const Graph& g, const NormalizedAdjacency& adj,
                                  const ModelParams& params, double h);

// One "layer,row,col,value" line per entry; the head uses layer id "w"
void save_gradients(const GradientSet& g, const std::string& path);

}  // namespace lmc
