#include "lmc/backward.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "lmc/io_util.hpp"

namespace lmc {

GradientSet zeros_like(const ModelParams& params) {
  GradientSet g;
  for (const Matrix& t : params.theta) g.g_theta.emplace_back(t.rows(), t.cols());
  g.g_w = Matrix(params.w_out.rows(), params.w_out.cols());
  return g;
}

double max_abs_diff(const GradientSet& a, const GradientSet& b) {
  double m = max_abs_diff(a.g_w, b.g_w);
  for (std::size_t l = 0; l < a.g_theta.size(); ++l)
    m = std::max(m, max_abs_diff(a.g_theta[l], b.g_theta[l]));
  return m;
}

bool bitwise_equal(const GradientSet& a, const GradientSet& b) {
  if (a.g_theta.size() != b.g_theta.size()) return false;
  for (std::size_t l = 0; l < a.g_theta.size(); ++l)
    if (!bitwise_equal(a.g_theta[l], b.g_theta[l])) return false;
  return bitwise_equal(a.g_w, b.g_w);
}

double grad_norm(const GradientSet& g) {
  double s = 0.0;
  for (const Matrix& t : g.g_theta)
    for (double x : t.data()) s += x * x;
  for (double x : g.g_w.data()) s += x * x;
  return std::sqrt(s);
}

double rel_error(const Matrix& approx, const Matrix& exact) {
  double denom = frobenius_norm(exact);
  if (denom == 0.0) return frobenius_norm(approx) == 0.0 ? 0.0 : HUGE_VAL;
  return frobenius_diff(approx, exact) / denom;
}

Matrix backward_layer(const NormalizedAdjacency& adj, const Matrix& v_next,
                      const Matrix& z_next, const Matrix& theta_next,
                      bool next_is_last) {
  if (v_next.cols() != adj.n || z_next.cols() != adj.n)
    throw std::invalid_argument("backward layer shape mismatch");

  // per-node pulled-back message q_j = theta^T (mask_j ⊙ V_j)
  Matrix q(theta_next.cols(), adj.n);
  std::vector<double> masked(theta_next.rows());
  for (NodeId j = 0; j < adj.n; ++j) {
    auto vj = v_next.col(j);
    auto zj = z_next.col(j);
    for (std::size_t r = 0; r < masked.size(); ++r)
      masked[r] = (next_is_last || zj[r] > 0.0) ? vj[r] : 0.0;
    mat_tvec(theta_next, masked, q.col(j));
  }

  Matrix v(theta_next.cols(), adj.n);
  for (NodeId i = 0; i < adj.n; ++i) {
    auto vi = v.col(i);
    auto cols = adj.row_cols(i);
    auto coeffs = adj.row_coeffs(i);
    for (std::size_t k = 0; k < cols.size(); ++k)
      axpy(coeffs[k], q.col(cols[k]), vi);
  }
  return v;
}

AuxVars exact_aux(const NormalizedAdjacency& adj, const ModelParams& params,
                  const LayerState& state, Matrix v_top) {
  const std::size_t L = params.num_layers();
  AuxVars aux;
  aux.nodes = state.nodes;
  aux.v.resize(L);
  aux.v[L - 1] = std::move(v_top);
  for (std::size_t l = L - 1; l >= 1; --l)
    aux.v[l - 1] = backward_layer(adj, aux.v[l], state.preacts[l],
                                  params.theta[l], l + 1 == L);
  return aux;
}

void accumulate_theta_grads(GradientSet& out, const ModelParams& params,
                            const LayerState& state, const AuxVars& aux,
                            const std::vector<std::size_t>& columns, double scale) {
  const std::size_t L = params.num_layers();
  std::vector<double> delta;
  for (std::size_t l = 1; l <= L; ++l) {
    const Matrix& v = aux.v[l - 1];
    const Matrix& z = state.preacts[l - 1];
    const Matrix& agg = state.aggregates[l - 1];
    const bool last = (l == L);
    delta.resize(v.rows());
    for (std::size_t c : columns) {
      auto vc = v.col(c);
      auto zc = z.col(c);
      for (std::size_t r = 0; r < delta.size(); ++r)
        delta[r] = (last || zc[r] > 0.0) ? vc[r] : 0.0;
      add_outer(out.g_theta[l - 1], scale, delta, agg.col(c));
    }
  }
}

FullPass full_pass(const Graph& g, const NormalizedAdjacency& adj,
                   const ModelParams& params) {
  FullPass fp;
  fp.state = forward_full(g, adj, params);
  const auto labeled = g.labeled_nodes();
  const double scale = 1.0 / static_cast<double>(labeled.size());
  LossGrad lg = loss_and_output_grad(fp.state, params, g, labeled, scale);
  fp.loss = lg.loss;
  fp.aux = exact_aux(adj, params, fp.state, std::move(lg.dloss_dh));

  fp.grads = zeros_like(params);
  std::vector<std::size_t> all(g.n);
  for (std::size_t i = 0; i < g.n; ++i) all[i] = i;
  accumulate_theta_grads(fp.grads, params, fp.state, fp.aux, all, 1.0);
  fp.grads.g_w = std::move(lg.dloss_dw);
  return fp;
}

GradientSet full_gradients(const Graph& g, const NormalizedAdjacency& adj,
                           const ModelParams& params) {
  return full_pass(g, adj, params).grads;
}

GradientSet backward_sgd_gradients(const Graph& g, const NormalizedAdjacency& adj,
                                   const ModelParams& params,
                                   const MiniBatch& batch) {
  LayerState state = forward_full(g, adj, params);
  const auto labeled = g.labeled_nodes();
  const double full_scale = 1.0 / static_cast<double>(labeled.size());
  LossGrad lg = loss_and_output_grad(state, params, g, labeled, full_scale);
  AuxVars aux = exact_aux(adj, params, state, std::move(lg.dloss_dh));

  GradientSet out = zeros_like(params);
  std::vector<std::size_t> batch_cols(batch.halo.in_batch.begin(),
                                      batch.halo.in_batch.end());
  const double theta_scale = batch.w_theta * static_cast<double>(g.n) /
                             static_cast<double>(batch.halo.in_batch.size());
  accumulate_theta_grads(out, params, state, aux, batch_cols, theta_scale);

  if (!batch.labeled_in_batch.empty()) {
    const double head_scale =
        batch.w_loss / static_cast<double>(batch.labeled_in_batch.size());
    LossGrad head =
        loss_and_output_grad(state, params, g, batch.labeled_in_batch, head_scale);
    out.g_w = std::move(head.dloss_dw);
  }
  return out;
}

namespace {

double loss_at(const Graph& g, const NormalizedAdjacency& adj,
               const ModelParams& params) {
  LayerState state = forward_full(g, adj, params);
  const auto labeled = g.labeled_nodes();
  const Matrix& h_top = state.embeddings.back();
  double loss = 0.0;
  for (NodeId id : labeled)
    loss += cross_entropy_at(params.w_out, h_top.col(id), g.labels[id]);
  return loss / static_cast<double>(labeled.size());
}

}  // namespace

GradientSet finite_diff_gradients(const Graph& g, const NormalizedAdjacency& adj,
                                  const ModelParams& params, double h) {
  ModelParams work = params;
  GradientSet out = zeros_like(params);

  auto central = [&](double& slot, double& grad) {
    const double saved = slot;
    slot = saved + h;
    const double up = loss_at(g, adj, work);
    slot = saved - h;
    const double down = loss_at(g, adj, work);
    slot = saved;
    grad = (up - down) / (2.0 * h);
  };

  for (std::size_t l = 0; l < work.theta.size(); ++l)
    for (std::size_t k = 0; k < work.theta[l].data().size(); ++k)
      central(work.theta[l].data()[k], out.g_theta[l].data()[k]);
  for (std::size_t k = 0; k < work.w_out.data().size(); ++k)
    central(work.w_out.data()[k], out.g_w.data()[k]);
  return out;
}

void save_gradients(const GradientSet& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "layer,row,col,value\n";
  for (std::size_t l = 0; l < g.g_theta.size(); ++l) {
    const Matrix& m = g.g_theta[l];
    for (std::size_t r = 0; r < m.rows(); ++r)
      for (std::size_t c = 0; c < m.cols(); ++c)
        out << (l + 1) << "," << r << "," << c << "," << format_double(m(r, c))
            << "\n";
  }
  for (std::size_t r = 0; r < g.g_w.rows(); ++r)
    for (std::size_t c = 0; c < g.g_w.cols(); ++c)
      out << "w," << r << "," << c << "," << format_double(g.g_w(r, c)) << "\n";
}

}  // namespace lmc
