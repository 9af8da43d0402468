#include "lmc/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lmc/backward.hpp"
#include "lmc/io_util.hpp"
#include "lmc/rng.hpp"

namespace lmc {

std::vector<std::size_t> ModelParams::dims() const {
  std::vector<std::size_t> d;
  d.push_back(theta.front().cols());
  for (const Matrix& t : theta) d.push_back(t.rows());
  return d;
}

void ModelParams::add_scaled(const GradientSet& g, double s) {
  for (std::size_t l = 0; l < theta.size(); ++l)
    theta[l].add_scaled(g.g_theta[l], s);
  w_out.add_scaled(g.g_w, s);
}

bool ModelParams::all_finite() const {
  for (const Matrix& t : theta)
    if (!t.all_finite()) return false;
  return w_out.all_finite();
}

ModelParams init_glorot(const std::vector<std::size_t>& dims, std::size_t classes,
                        std::uint64_t seed) {
  if (dims.size() < 2) throw std::invalid_argument("need at least one layer");
  for (std::size_t d : dims)
    if (d == 0) throw std::invalid_argument("zero layer dimension");
  if (classes < 2) throw std::invalid_argument("need at least two classes");

  Rng rng(seed);
  auto fill = [&rng](Matrix& m, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& x : m.data()) x = (2.0 * rng.uniform() - 1.0) * bound;
  };

  ModelParams p;
  for (std::size_t l = 1; l < dims.size(); ++l) {
    Matrix t(dims[l], dims[l - 1]);
    fill(t, dims[l - 1], dims[l]);
    p.theta.push_back(std::move(t));
  }
  p.w_out = Matrix(classes, dims.back());
  fill(p.w_out, dims.back(), classes);
  return p;
}

LayerOut layer_forward(const NormalizedAdjacency& adj, const Matrix& h_prev,
                       const Matrix& theta, bool last_layer) {
  if (h_prev.cols() != adj.n || h_prev.rows() != theta.cols())
    throw std::invalid_argument("layer input shape mismatch");

  LayerOut out;
  out.aggregates = Matrix(theta.cols(), adj.n);
  out.preacts = Matrix(theta.rows(), adj.n);
  out.embeddings = Matrix(theta.rows(), adj.n);

  for (NodeId i = 0; i < adj.n; ++i) {
    auto agg = out.aggregates.col(i);
    auto cols = adj.row_cols(i);
    auto coeffs = adj.row_coeffs(i);
    for (std::size_t k = 0; k < cols.size(); ++k)
      axpy(coeffs[k], h_prev.col(cols[k]), agg);
    auto z = out.preacts.col(i);
    mat_vec(theta, agg, z);
    auto h = out.embeddings.col(i);
    for (std::size_t r = 0; r < z.size(); ++r)
      h[r] = last_layer ? z[r] : (z[r] > 0.0 ? z[r] : 0.0);
  }
  return out;
}

LayerState forward_full(const Graph& g, const NormalizedAdjacency& adj,
                        const ModelParams& params) {
  LayerState st;
  st.nodes.resize(g.n);
  for (NodeId i = 0; i < g.n; ++i) st.nodes[i] = i;
  st.embeddings.push_back(g.features);
  const std::size_t L = params.num_layers();
  for (std::size_t l = 1; l <= L; ++l) {
    LayerOut out = layer_forward(adj, st.embeddings.back(), params.theta[l - 1],
                                 l == L);
    st.aggregates.push_back(std::move(out.aggregates));
    st.preacts.push_back(std::move(out.preacts));
    st.embeddings.push_back(std::move(out.embeddings));
  }
  return st;
}

double cross_entropy_at(const Matrix& w_out, std::span<const double> h, int label) {
  std::vector<double> logits(w_out.rows());
  mat_vec(w_out, h, logits);
  double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - m);
  return -(logits[static_cast<std::size_t>(label)] - m) + std::log(sum);
}

void logit_residual(const Matrix& w_out, std::span<const double> h, int label,
                    std::span<double> out) {
  mat_vec(w_out, h, out);
  double m = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (double& v : out) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : out) v /= sum;
  out[static_cast<std::size_t>(label)] -= 1.0;
}

int predict_class(const Matrix& w_out, std::span<const double> h) {
  std::vector<double> logits(w_out.rows());
  mat_vec(w_out, h, logits);
  std::size_t best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k)
    if (logits[k] > logits[best]) best = k;
  return static_cast<int>(best);
}

namespace {

// state.nodes is sorted for every pass we build; map a node id to its column
std::size_t column_of(const LayerState& state, NodeId id) {
  auto it = std::lower_bound(state.nodes.begin(), state.nodes.end(), id);
  if (it == state.nodes.end() || *it != id)
    throw std::invalid_argument("node " + std::to_string(id) +
                                " is not part of this forward pass");
  return static_cast<std::size_t>(it - state.nodes.begin());
}

}  // namespace

LossGrad loss_and_output_grad(const LayerState& state, const ModelParams& params,
                              const Graph& g, const std::vector<NodeId>& node_set,
                              double scale) {
  const Matrix& h_top = state.embeddings.back();
  LossGrad out;
  out.dloss_dh = Matrix(h_top.rows(), h_top.cols());
  out.dloss_dw = Matrix(params.w_out.rows(), params.w_out.cols());

  std::vector<double> resid(params.w_out.rows());
  for (NodeId id : node_set) {
    if (!g.labeled[id])
      throw std::invalid_argument("node " + std::to_string(id) +
                                  " has no visible label");
    std::size_t c = column_of(state, id);
    auto h = h_top.col(c);
    out.loss += scale * cross_entropy_at(params.w_out, h, g.labels[id]);
    logit_residual(params.w_out, h, g.labels[id], resid);
    mat_tvec(params.w_out, resid, out.dloss_dh.col(c));
    for (double& v : out.dloss_dh.col(c)) v *= scale;
    add_outer(out.dloss_dw, scale, resid, h);
  }
  return out;
}

double accuracy(const LayerState& state, const ModelParams& params, const Graph& g,
                const std::vector<NodeId>& node_set) {
  if (node_set.empty()) return 0.0;
  std::size_t hits = 0;
  const Matrix& h_top = state.embeddings.back();
  for (NodeId id : node_set) {
    std::size_t c = column_of(state, id);
    if (predict_class(params.w_out, h_top.col(c)) == g.labels[id]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(node_set.size());
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  auto dims = params.dims();
  out << "gcn-checkpoint 1\n";
  out << "layers " << params.num_layers() << "\n";
  out << "dims";
  for (std::size_t d : dims) out << " " << d;
  out << "\nclasses " << params.num_classes() << "\n";
  auto write_matrix = [&out](const Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) {
        if (c) out << " ";
        out << format_double(m(r, c));
      }
      out << "\n";
    }
  };
  for (const Matrix& t : params.theta) write_matrix(t);
  write_matrix(params.w_out);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string magic, key;
  int version = 0;
  in >> magic >> version;
  if (magic != "gcn-checkpoint" || version != 1)
    throw std::runtime_error(path + ": not a checkpoint file");
  std::size_t L = 0, classes = 0;
  in >> key >> L;
  if (key != "layers" || L == 0) throw std::runtime_error(path + ": bad layer count");
  in >> key;
  if (key != "dims") throw std::runtime_error(path + ": missing dims");
  std::vector<std::size_t> dims(L + 1);
  for (auto& d : dims)
    if (!(in >> d) || d == 0) throw std::runtime_error(path + ": bad dims");
  in >> key >> classes;
  if (key != "classes" || classes < 2)
    throw std::runtime_error(path + ": bad class count");

  auto read_matrix = [&in, &path](std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        if (!(in >> m(r, c))) throw std::runtime_error(path + ": truncated matrix");
    return m;
  };
  ModelParams p;
  for (std::size_t l = 1; l <= L; ++l)
    p.theta.push_back(read_matrix(dims[l], dims[l - 1]));
  p.w_out = read_matrix(classes, dims[L]);
  return p;
}

}  // namespace lmc
