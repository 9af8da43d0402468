#include "lmc/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "lmc/io_util.hpp"

namespace lmc {

EstimatorMode parse_mode(const std::string& s) {
  if (s == "FullBatch") return EstimatorMode::FullBatch;
  if (s == "BackwardSGD") return EstimatorMode::BackwardSGD;
  if (s == "Cluster") return EstimatorMode::Cluster;
  if (s == "GAS") return EstimatorMode::GAS;
  if (s == "LMC") return EstimatorMode::LMC;
  if (s == "LMC_ForwardOnly") return EstimatorMode::LMC_ForwardOnly;
  throw std::invalid_argument("unknown estimator mode: " + s);
}

std::string to_string(EstimatorMode m) {
  switch (m) {
    case EstimatorMode::FullBatch: return "FullBatch";
    case EstimatorMode::BackwardSGD: return "BackwardSGD";
    case EstimatorMode::Cluster: return "Cluster";
    case EstimatorMode::GAS: return "GAS";
    case EstimatorMode::LMC: return "LMC";
    case EstimatorMode::LMC_ForwardOnly: return "LMC_ForwardOnly";
  }
  return "?";
}

BetaScore parse_beta_score(const std::string& s) {
  if (s == "x^2") return BetaScore::XSquared;
  if (s == "2x-x^2") return BetaScore::TwoXMinusXSquared;
  if (s == "x") return BetaScore::X;
  if (s == "1") return BetaScore::One;
  if (s == "sin") return BetaScore::SinX;
  throw std::invalid_argument("unknown beta score: " + s);
}

std::string to_string(BetaScore s) {
  switch (s) {
    case BetaScore::XSquared: return "x^2";
    case BetaScore::TwoXMinusXSquared: return "2x-x^2";
    case BetaScore::X: return "x";
    case BetaScore::One: return "1";
    case BetaScore::SinX: return "sin";
  }
  return "?";
}

BetaSchedule BetaSchedule::defaults_for(std::size_t clusters_per_batch,
                                        std::size_t num_clusters) {
  if (2 * clusters_per_batch >= num_clusters)
    return BetaSchedule{1.0, BetaScore::One};
  return BetaSchedule{0.4, BetaScore::TwoXMinusXSquared};
}

double beta_for(const Graph& g, const HaloIndex& index, NodeId i,
                const BetaSchedule& sched) {
  const std::size_t deg_global = g.degree(i);
  if (deg_global == 0) return 0.0;
  std::size_t deg_local = 0;
  for (NodeId j : g.neighbors(i))
    if (index.find(j).role != NodeRole::Outside) ++deg_local;
  const double x =
      static_cast<double>(deg_local) / static_cast<double>(deg_global);
  double score = 0.0;
  switch (sched.score) {
    case BetaScore::XSquared: score = x * x; break;
    case BetaScore::TwoXMinusXSquared: score = 2.0 * x - x * x; break;
    case BetaScore::X: score = x; break;
    case BetaScore::One: score = 1.0; break;
    case BetaScore::SinX: score = std::sin(x); break;
  }
  return std::clamp(score * sched.alpha, 0.0, 1.0);
}

HistoricalStore HistoricalStore::zeros(const std::vector<std::size_t>& dims,
                                       std::size_t n) {
  HistoricalStore s;
  s.n = n;
  const std::size_t L = dims.size() - 1;
  for (std::size_t l = 1; l <= L; ++l) {
    s.h_bar.emplace_back(dims[l], n);
    s.z_bar.emplace_back(dims[l], n);
  }
  for (std::size_t l = 1; l < L; ++l) s.v_bar.emplace_back(dims[l], n);
  return s;
}

void HistoricalStore::warm_start(const Graph& g, const NormalizedAdjacency& adj,
                                 const ModelParams& params) {
  FullPass fp = full_pass(g, adj, params);
  const std::size_t L = params.num_layers();
  for (std::size_t l = 1; l <= L; ++l) {
    h(l) = fp.state.embeddings[l];
    z(l) = fp.state.preacts[l - 1];
  }
  for (std::size_t l = 1; l < L; ++l) v(l) = fp.aux.v[l - 1];
}

bool bitwise_equal(const HistoricalStore& a, const HistoricalStore& b) {
  if (a.n != b.n || a.h_bar.size() != b.h_bar.size() ||
      a.v_bar.size() != b.v_bar.size())
    return false;
  for (std::size_t k = 0; k < a.h_bar.size(); ++k)
    if (!bitwise_equal(a.h_bar[k], b.h_bar[k]) ||
        !bitwise_equal(a.z_bar[k], b.z_bar[k]))
      return false;
  for (std::size_t k = 0; k < a.v_bar.size(); ++k)
    if (!bitwise_equal(a.v_bar[k], b.v_bar[k])) return false;
  return true;
}

void save_store(const HistoricalStore& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "lmc-store 1\n";
  out << "layers " << s.num_layers() << "\n";
  out << "nodes " << s.n << "\n";
  out << "dims";
  for (const Matrix& m : s.h_bar) out << " " << m.rows();
  out << "\n";
  auto write_matrix = [&out](const Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) {
        if (c) out << " ";
        out << format_double(m(r, c));
      }
      out << "\n";
    }
  };
  for (const Matrix& m : s.h_bar) write_matrix(m);
  for (const Matrix& m : s.z_bar) write_matrix(m);
  for (const Matrix& m : s.v_bar) write_matrix(m);
}

HistoricalStore load_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic, key;
  int version = 0;
  std::size_t L = 0, n = 0;
  in >> magic >> version >> key >> L;
  if (magic != "lmc-store" || version != 1 || key != "layers" || L == 0)
    throw std::runtime_error(path + ": not a store snapshot");
  in >> key >> n;
  if (key != "nodes") throw std::runtime_error(path + ": missing node count");
  in >> key;
  if (key != "dims") throw std::runtime_error(path + ": missing dims");
  std::vector<std::size_t> dims(L);
  for (auto& d : dims)
    if (!(in >> d) || d == 0) throw std::runtime_error(path + ": bad dims");

  auto read_matrix = [&in, &path](std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        if (!(in >> m(r, c))) throw std::runtime_error(path + ": truncated matrix");
    return m;
  };
  HistoricalStore s;
  s.n = n;
  for (std::size_t l = 0; l < L; ++l) s.h_bar.push_back(read_matrix(dims[l], n));
  for (std::size_t l = 0; l < L; ++l) s.z_bar.push_back(read_matrix(dims[l], n));
  for (std::size_t l = 0; l + 1 < L; ++l) s.v_bar.push_back(read_matrix(dims[l], n));
  return s;
}

StepOptions step_options_for(EstimatorMode m) {
  switch (m) {
    case EstimatorMode::GAS: return {false, false};
    case EstimatorMode::LMC: return {true, true};
    case EstimatorMode::LMC_ForwardOnly: return {true, false};
    default: return {true, true};
  }
}

namespace {

void relu_mask(std::span<const double> z, std::span<const double> v, bool identity,
               std::span<double> out) {
  for (std::size_t r = 0; r < out.size(); ++r)
    out[r] = (identity || z[r] > 0.0) ? v[r] : 0.0;
}

}  // namespace

CompensatedForward forward_compensated(HistoricalStore& store, const MiniBatch& batch,
                                       const HaloIndex& index, const Graph& g,
                                       const NormalizedAdjacency& adj,
                                       const ModelParams& params,
                                       const BetaSchedule& sched,
                                       const StepOptions& opts, TouchLog* touch) {
  if (store.n != g.n) throw std::invalid_argument("store/graph size mismatch");
  const auto& inb = batch.halo.in_batch;
  const auto& bnd = batch.halo.boundary;
  const std::size_t L = params.num_layers();
  if (store.num_layers() != L)
    throw std::invalid_argument("store has " + std::to_string(store.num_layers()) +
                                " layers, model has " + std::to_string(L));
  const bool need_temps = opts.mix_boundary || opts.compensate_backward;

  auto note_read = [touch](NodeId id) {
    if (touch) touch->read(id);
  };
  auto note_write = [touch](NodeId id) {
    if (touch) touch->write(id);
  };

  CompensatedForward fwd;
  fwd.temp.beta.resize(bnd.size());
  for (std::size_t k = 0; k < bnd.size(); ++k)
    fwd.temp.beta[k] = opts.mix_boundary ? beta_for(g, index, bnd[k], sched) : 0.0;

  for (std::size_t l = 1; l <= L; ++l) {
    fwd.temp.h_hat_.emplace_back(params.theta[l - 1].rows(), bnd.size());
    if (need_temps) {
      fwd.temp.h_tilde_.emplace_back(params.theta[l - 1].rows(), bnd.size());
      fwd.temp.z_tilde_.emplace_back(params.theta[l - 1].rows(), bnd.size());
    }
  }

  // h^{l-1} of node j as seen from this batch
  auto input_of = [&](std::size_t l, NodeId j,
                      const HaloIndex::Entry& e) -> std::span<const double> {
    if (l == 1) {
      note_read(j);
      return g.features.col(j);
    }
    if (e.role == NodeRole::InBatch) {
      note_read(j);
      return store.h(l - 1).col(j);
    }
    return fwd.temp.h_hat(l - 1).col(e.local);
  };

  for (std::size_t l = 1; l <= L; ++l) {
    const Matrix& theta = params.theta[l - 1];
    const bool last = (l == L);
    Matrix agg_l(theta.cols(), inb.size());

    for (std::size_t bi = 0; bi < inb.size(); ++bi) {
      const NodeId i = inb[bi];
      auto agg = agg_l.col(bi);
      auto cols = adj.row_cols(i);
      auto coeffs = adj.row_coeffs(i);
      for (std::size_t k = 0; k < cols.size(); ++k)
        axpy(coeffs[k], input_of(l, cols[k], index.find(cols[k])), agg);
      auto z = store.z(l).col(i);
      mat_vec(theta, agg, z);
      auto h = store.h(l).col(i);
      for (std::size_t r = 0; r < z.size(); ++r)
        h[r] = last ? z[r] : (z[r] > 0.0 ? z[r] : 0.0);
      note_write(i);
    }
    fwd.aggregates.push_back(std::move(agg_l));

    for (std::size_t k = 0; k < bnd.size(); ++k) {
      const NodeId i = bnd[k];
      auto h_hat = fwd.temp.h_hat(l).col(k);
      note_read(i);
      auto h_stale = store.h(l).col(i);
      if (!need_temps) {
        std::copy(h_stale.begin(), h_stale.end(), h_hat.begin());
        continue;
      }
      // within-step value from the visible part of the neighborhood
      std::vector<double> agg(theta.cols(), 0.0);
      auto cols = adj.row_cols(i);
      auto coeffs = adj.row_coeffs(i);
      for (std::size_t e = 0; e < cols.size(); ++e) {
        auto entry = index.find(cols[e]);
        if (entry.role == NodeRole::Outside) continue;
        axpy(coeffs[e], input_of(l, cols[e], entry), agg);
      }
      auto z_tilde = fwd.temp.z_tilde(l).col(k);
      mat_vec(theta, agg, z_tilde);
      auto h_tilde = fwd.temp.h_tilde(l).col(k);
      for (std::size_t r = 0; r < z_tilde.size(); ++r)
        h_tilde[r] = last ? z_tilde[r] : (z_tilde[r] > 0.0 ? z_tilde[r] : 0.0);
      const double beta = fwd.temp.beta[k];
      for (std::size_t r = 0; r < h_hat.size(); ++r)
        h_hat[r] = (1.0 - beta) * h_stale[r] + beta * h_tilde[r];
    }
  }
  return fwd;
}

AuxVars backward_compensated(HistoricalStore& store, const MiniBatch& batch,
                             const HaloIndex& index, const Graph& g,
                             const NormalizedAdjacency& adj,
                             const ModelParams& params, CompensatedForward& fwd,
                             const StepOptions& opts, TouchLog* touch) {
  const auto& inb = batch.halo.in_batch;
  const auto& bnd = batch.halo.boundary;
  const std::size_t L = params.num_layers();
  const std::size_t classes = params.num_classes();
  const double inv_labeled = 1.0 / static_cast<double>(g.labeled_count());

  auto note_read = [touch](NodeId id) {
    if (touch) touch->read(id);
  };
  auto note_write = [touch](NodeId id) {
    if (touch) touch->write(id);
  };

  AuxVars aux;
  aux.nodes = inb;
  aux.v.resize(L);
  aux.v[L - 1] = Matrix(params.out_dim(), inb.size());

  std::vector<double> resid(classes);
  for (std::size_t bi = 0; bi < inb.size(); ++bi) {
    const NodeId i = inb[bi];
    note_read(i);
    if (!g.labeled[i]) continue;
    logit_residual(params.w_out, store.h(L).col(i), g.labels[i], resid);
    auto v = aux.v[L - 1].col(bi);
    mat_tvec(params.w_out, resid, v);
    for (double& x : v) x *= inv_labeled;
  }

  if (opts.compensate_backward) {
    fwd.temp.v_hat_.assign(L, Matrix());
    fwd.temp.v_tilde_.assign(L >= 1 ? L - 1 : 0, Matrix());
    fwd.temp.v_hat(L) = Matrix(params.out_dim(), bnd.size());
    for (std::size_t k = 0; k < bnd.size(); ++k) {
      const NodeId i = bnd[k];
      note_read(i);
      if (!g.labeled[i]) continue;
      logit_residual(params.w_out, fwd.temp.h_hat(L).col(k), g.labels[i], resid);
      auto v = fwd.temp.v_hat(L).col(k);
      mat_tvec(params.w_out, resid, v);
      for (double& x : v) x *= inv_labeled;
    }
  }

  std::vector<double> masked;
  for (std::size_t l = L - 1; l >= 1; --l) {
    const Matrix& theta_next = params.theta[l];  // layer l+1
    const bool next_last = (l + 1 == L);
    masked.resize(theta_next.rows());

    Matrix q_in(theta_next.cols(), inb.size());
    for (std::size_t bi = 0; bi < inb.size(); ++bi) {
      const NodeId i = inb[bi];
      note_read(i);
      relu_mask(store.z(l + 1).col(i), aux.v[l].col(bi), next_last, masked);
      mat_tvec(theta_next, masked, q_in.col(bi));
    }
    Matrix q_bnd(theta_next.cols(), bnd.size());
    if (opts.compensate_backward) {
      for (std::size_t k = 0; k < bnd.size(); ++k) {
        relu_mask(fwd.temp.z_tilde(l + 1).col(k), fwd.temp.v_hat(l + 1).col(k),
                  next_last, masked);
        mat_tvec(theta_next, masked, q_bnd.col(k));
      }
    }

    aux.v[l - 1] = Matrix(theta_next.cols(), inb.size());
    for (std::size_t bi = 0; bi < inb.size(); ++bi) {
      const NodeId i = inb[bi];
      auto vi = aux.v[l - 1].col(bi);
      auto cols = adj.row_cols(i);
      auto coeffs = adj.row_coeffs(i);
      for (std::size_t e = 0; e < cols.size(); ++e) {
        auto entry = index.find(cols[e]);
        if (entry.role == NodeRole::InBatch)
          axpy(coeffs[e], q_in.col(entry.local), vi);
        else if (opts.compensate_backward)
          axpy(coeffs[e], q_bnd.col(entry.local), vi);
      }
      auto stored = store.v(l).col(i);
      std::copy(vi.begin(), vi.end(), stored.begin());
      note_write(i);
    }

    if (opts.compensate_backward) {
      fwd.temp.v_tilde(l) = Matrix(theta_next.cols(), bnd.size());
      fwd.temp.v_hat(l) = Matrix(theta_next.cols(), bnd.size());
      for (std::size_t k = 0; k < bnd.size(); ++k) {
        const NodeId i = bnd[k];
        auto vt = fwd.temp.v_tilde(l).col(k);
        auto cols = adj.row_cols(i);
        auto coeffs = adj.row_coeffs(i);
        for (std::size_t e = 0; e < cols.size(); ++e) {
          auto entry = index.find(cols[e]);
          if (entry.role == NodeRole::InBatch)
            axpy(coeffs[e], q_in.col(entry.local), vt);
          else if (entry.role == NodeRole::Boundary)
            axpy(coeffs[e], q_bnd.col(entry.local), vt);
        }
        note_read(i);
        auto stored = store.v(l).col(i);
        auto vh = fwd.temp.v_hat(l).col(k);
        const double beta = fwd.temp.beta[k];
        for (std::size_t r = 0; r < vh.size(); ++r)
          vh[r] = (1.0 - beta) * stored[r] + beta * vt[r];
      }
    }
  }
  return aux;
}

namespace {

MinibatchResult compensated_gradients(HistoricalStore& store, const MiniBatch& batch,
                                      const Graph& g, const NormalizedAdjacency& adj,
                                      const ModelParams& params,
                                      const BetaSchedule& sched,
                                      const StepOptions& opts, TouchLog* touch) {
  const HaloIndex index(batch.halo);
  CompensatedForward fwd = forward_compensated(store, batch, index, g, adj, params,
                                               sched, opts, touch);
  AuxVars aux = backward_compensated(store, batch, index, g, adj, params, fwd,
                                     opts, touch);

  const auto& inb = batch.halo.in_batch;
  const std::size_t L = params.num_layers();
  MinibatchResult res;
  res.grads = zeros_like(params);

  const double theta_scale = batch.w_theta * static_cast<double>(g.n) /
                             static_cast<double>(inb.size());
  std::vector<double> delta;
  for (std::size_t l = 1; l <= L; ++l) {
    const bool last = (l == L);
    delta.resize(params.theta[l - 1].rows());
    for (std::size_t bi = 0; bi < inb.size(); ++bi) {
      const NodeId i = inb[bi];
      relu_mask(store.z(l).col(i), aux.v[l - 1].col(bi), last, delta);
      add_outer(res.grads.g_theta[l - 1], theta_scale, delta,
                fwd.aggregates[l - 1].col(bi));
    }
  }

  if (!batch.labeled_in_batch.empty()) {
    const double head_scale =
        batch.w_loss / static_cast<double>(batch.labeled_in_batch.size());
    std::vector<double> resid(params.num_classes());
    for (NodeId i : batch.labeled_in_batch) {
      auto h = store.h(L).col(i);
      res.loss += head_scale * cross_entropy_at(params.w_out, h, g.labels[i]);
      logit_residual(params.w_out, h, g.labels[i], resid);
      add_outer(res.grads.g_w, head_scale, resid, h);
    }
  }
  return res;
}

MinibatchResult cluster_gradients(const MiniBatch& batch, const Graph& g,
                                  const ModelParams& params, TouchLog* touch) {
  const auto& nodes = batch.halo.in_batch;
  const std::size_t m = nodes.size();
  const std::size_t L = params.num_layers();

  auto local_of = [&nodes](NodeId j) -> std::ptrdiff_t {
    auto it = std::lower_bound(nodes.begin(), nodes.end(), j);
    if (it == nodes.end() || *it != j) return -1;
    return it - nodes.begin();
  };

  // induced subgraph CSR
  std::vector<std::size_t> row_ptr(m + 1, 0);
  std::vector<NodeId> sub_adj;
  for (std::size_t li = 0; li < m; ++li) {
    for (NodeId j : g.neighbors(nodes[li])) {
      auto lj = local_of(j);
      if (lj >= 0) sub_adj.push_back(static_cast<NodeId>(lj));
    }
    row_ptr[li + 1] = sub_adj.size();
  }
  NormalizedAdjacency sub = normalize_adjacency_csr(m, row_ptr, sub_adj);

  LayerState st;
  st.nodes = nodes;
  Matrix feats(g.feature_dim(), m);
  for (std::size_t li = 0; li < m; ++li) {
    if (touch) touch->read(nodes[li]);
    auto src = g.features.col(nodes[li]);
    std::copy(src.begin(), src.end(), feats.col(li).begin());
  }
  st.embeddings.push_back(std::move(feats));
  for (std::size_t l = 1; l <= L; ++l) {
    LayerOut out =
        layer_forward(sub, st.embeddings.back(), params.theta[l - 1], l == L);
    st.aggregates.push_back(std::move(out.aggregates));
    st.preacts.push_back(std::move(out.preacts));
    st.embeddings.push_back(std::move(out.embeddings));
  }

  if (touch)
    for (NodeId i : nodes) touch->read(i);  // label visibility checks below

  MinibatchResult res;
  res.grads = zeros_like(params);
  const double inv_labeled = 1.0 / static_cast<double>(g.labeled_count());
  LossGrad chain =
      loss_and_output_grad(st, params, g, batch.labeled_in_batch, inv_labeled);
  AuxVars aux = exact_aux(sub, params, st, std::move(chain.dloss_dh));

  std::vector<std::size_t> all(m);
  for (std::size_t i = 0; i < m; ++i) all[i] = i;
  const double theta_scale =
      batch.w_theta * static_cast<double>(g.n) / static_cast<double>(m);
  accumulate_theta_grads(res.grads, params, st, aux, all, theta_scale);

  if (!batch.labeled_in_batch.empty()) {
    const double head_scale =
        batch.w_loss / static_cast<double>(batch.labeled_in_batch.size());
    LossGrad head =
        loss_and_output_grad(st, params, g, batch.labeled_in_batch, head_scale);
    res.grads.g_w = std::move(head.dloss_dw);
    res.loss = head.loss;
  }
  return res;
}

double weighted_batch_loss(const Graph& g, const LayerState& state,
                           const ModelParams& params, const MiniBatch& batch) {
  if (batch.labeled_in_batch.empty()) return 0.0;
  const double head_scale =
      batch.w_loss / static_cast<double>(batch.labeled_in_batch.size());
  double loss = 0.0;
  const Matrix& h_top = state.embeddings.back();
  for (NodeId i : batch.labeled_in_batch)
    loss += head_scale * cross_entropy_at(params.w_out, h_top.col(i), g.labels[i]);
  return loss;
}

}  // namespace

MinibatchResult minibatch_gradients(EstimatorMode mode, HistoricalStore* store,
                                    const MiniBatch& batch, const Graph& g,
                                    const NormalizedAdjacency& adj,
                                    const ModelParams& params,
                                    const BetaSchedule& sched, TouchLog* touch) {
  switch (mode) {
    case EstimatorMode::FullBatch: {
      if (touch)
        for (NodeId i = 0; i < g.n; ++i) touch->read(i);
      FullPass fp = full_pass(g, adj, params);
      return {std::move(fp.grads), fp.loss};
    }
    case EstimatorMode::BackwardSGD: {
      if (touch)
        for (NodeId i = 0; i < g.n; ++i) touch->read(i);
      MinibatchResult res;
      res.grads = backward_sgd_gradients(g, adj, params, batch);
      LayerState state = forward_full(g, adj, params);
      res.loss = weighted_batch_loss(g, state, params, batch);
      return res;
    }
    case EstimatorMode::Cluster:
      return cluster_gradients(batch, g, params, touch);
    case EstimatorMode::GAS:
    case EstimatorMode::LMC:
    case EstimatorMode::LMC_ForwardOnly: {
      if (!store || store->n != g.n)
        throw std::invalid_argument("historical store required for mode " +
                                    to_string(mode));
      return compensated_gradients(*store, batch, g, adj, params, sched,
                                   step_options_for(mode), touch);
    }
  }
  throw std::logic_error("unreachable");
}

Engine::Engine(const Graph& g, const NormalizedAdjacency& adj, const Partition& part,
               ModelParams params, const EngineOptions& opts)
    : g_(g),
      adj_(adj),
      part_(part),
      opts_(opts),
      sched_(opts.sched.value_or(
          BetaSchedule::defaults_for(opts.clusters_per_batch, part.num_clusters))),
      params_(std::move(params)),
      rng_(opts.seed) {
  if (opts.clusters_per_batch == 0 || opts.clusters_per_batch > part.num_clusters)
    throw std::invalid_argument("batch cluster count must be in [1, B]");
  if (opts.eta < 0.0) throw std::invalid_argument("negative learning rate");
  const bool needs_store = opts.mode == EstimatorMode::GAS ||
                           opts.mode == EstimatorMode::LMC ||
                           opts.mode == EstimatorMode::LMC_ForwardOnly;
  if (needs_store) {
    store_ = HistoricalStore::zeros(params_.dims(), g.n);
    if (opts.warm_start) store_.warm_start(g, adj, params_);
  }
}

MiniBatch Engine::sample() {
  return sample_batch(g_, part_, opts_.clusters_per_batch, rng_);
}

StepResult Engine::step() { return step_on_batch(sample()); }

StepResult Engine::step_on_batch(const MiniBatch& batch) {
  touch_.clear();
  MinibatchResult res = minibatch_gradients(opts_.mode, &store_, batch, g_, adj_,
                                            params_, sched_, &touch_);
  ++iter_;
  if (!std::isfinite(res.loss)) throw DivergenceError(iter_);
  params_.add_scaled(res.grads, -opts_.eta);
  StepResult sr;
  sr.iteration = iter_;
  sr.loss = res.loss;
  sr.grad_norm = grad_norm(res.grads);
  sr.nodes_touched = touch_.nodes.size();
  sr.grads = std::move(res.grads);
  return sr;
}

}  // namespace lmc
