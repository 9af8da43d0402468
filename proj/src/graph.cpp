#include "lmc/graph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "lmc/io_util.hpp"
#include "lmc/rng.hpp"

namespace lmc {

std::vector<NodeId> Graph::labeled_nodes() const {
  std::vector<NodeId> out;
  for (NodeId i = 0; i < n; ++i)
    if (labeled[i]) out.push_back(i);
  return out;
}

Graph build_graph(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges,
                  Matrix features, std::vector<int> labels,
                  std::vector<std::uint8_t> labeled) {
  if (n == 0) throw std::invalid_argument("graph must have at least one node");
  if (features.cols() != n)
    throw std::invalid_argument("feature row count mismatch: expected " +
                                std::to_string(n) + ", got " +
                                std::to_string(features.cols()));
  if (labels.size() != n || labeled.size() != n)
    throw std::invalid_argument("label line count mismatch: expected " +
                                std::to_string(n) + " entries");
  for (double v : features.data())
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite feature value");

  std::set<std::pair<NodeId, NodeId>> seen;
  std::vector<std::size_t> deg(n, 0);
  for (auto [u, v] : edges) {
    if (u >= n || v >= n) throw std::invalid_argument("node id out of range");
    if (u == v) throw std::invalid_argument("self loop on node " + std::to_string(u));
    auto key = std::minmax(u, v);
    if (!seen.insert(key).second)
      throw std::invalid_argument("duplicate edge " + std::to_string(key.first) +
                                  "-" + std::to_string(key.second));
    ++deg[u];
    ++deg[v];
  }

  Graph g;
  g.n = n;
  g.row_ptr.assign(n + 1, 0);
  for (NodeId i = 0; i < n; ++i) g.row_ptr[i + 1] = g.row_ptr[i] + deg[i];
  g.adj.resize(g.row_ptr[n]);
  std::vector<std::size_t> fill(g.row_ptr.begin(), g.row_ptr.end() - 1);
  for (auto [u, v] : edges) {
    g.adj[fill[u]++] = v;
    g.adj[fill[v]++] = u;
  }
  for (NodeId i = 0; i < n; ++i)
    std::sort(g.adj.begin() + g.row_ptr[i], g.adj.begin() + g.row_ptr[i + 1]);

  g.features = std::move(features);
  g.labels = std::move(labels);
  g.labeled = std::move(labeled);

  int max_class = -1;
  for (NodeId i = 0; i < n; ++i) {
    if (g.labels[i] < 0) throw std::invalid_argument("negative class id");
    max_class = std::max(max_class, g.labels[i]);
  }
  g.num_classes = static_cast<std::size_t>(max_class) + 1;
  for (auto f : g.labeled) g.labeled_total += f;
  if (g.labeled_total == 0)
    throw std::invalid_argument("graph needs at least one labeled node");
  return g;
}

NormalizedAdjacency normalize_adjacency_csr(std::size_t n,
                                            const std::vector<std::size_t>& row_ptr,
                                            const std::vector<NodeId>& adj) {
  NormalizedAdjacency a;
  a.n = n;
  a.row_ptr.assign(n + 1, 0);
  auto degree = [&](NodeId i) { return row_ptr[i + 1] - row_ptr[i]; };
  for (NodeId i = 0; i < n; ++i)
    a.row_ptr[i + 1] = a.row_ptr[i] + degree(i) + 1;  // + diagonal
  a.col.resize(a.row_ptr[n]);
  a.coeff.resize(a.row_ptr[n]);

  std::vector<double> inv_sqrt(n);
  for (NodeId i = 0; i < n; ++i)
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(degree(i) + 1));

  for (NodeId i = 0; i < n; ++i) {
    std::size_t k = a.row_ptr[i];
    bool self_placed = false;
    for (std::size_t e = row_ptr[i]; e < row_ptr[i + 1]; ++e) {
      const NodeId j = adj[e];
      if (!self_placed && j > i) {
        a.col[k] = i;
        a.coeff[k] = inv_sqrt[i] * inv_sqrt[i];
        ++k;
        self_placed = true;
      }
      a.col[k] = j;
      a.coeff[k] = inv_sqrt[i] * inv_sqrt[j];
      ++k;
    }
    if (!self_placed) {
      a.col[k] = i;
      a.coeff[k] = inv_sqrt[i] * inv_sqrt[i];
      ++k;
    }
  }
  return a;
}

NormalizedAdjacency normalize_adjacency(const Graph& g) {
  return normalize_adjacency_csr(g.n, g.row_ptr, g.adj);
}

Halo halo_of(const Graph& g, std::vector<NodeId> in_batch) {
  if (in_batch.empty()) throw std::invalid_argument("empty batch");
  std::sort(in_batch.begin(), in_batch.end());
  in_batch.erase(std::unique(in_batch.begin(), in_batch.end()), in_batch.end());
  if (in_batch.back() >= g.n) throw std::invalid_argument("node id out of range");

  Halo h;
  h.in_batch = std::move(in_batch);
  std::vector<NodeId> boundary;
  for (NodeId i : h.in_batch)
    for (NodeId j : g.neighbors(i))
      if (!std::binary_search(h.in_batch.begin(), h.in_batch.end(), j))
        boundary.push_back(j);
  std::sort(boundary.begin(), boundary.end());
  boundary.erase(std::unique(boundary.begin(), boundary.end()), boundary.end());
  h.boundary = std::move(boundary);

  h.closure.resize(h.in_batch.size() + h.boundary.size());
  std::merge(h.in_batch.begin(), h.in_batch.end(), h.boundary.begin(),
             h.boundary.end(), h.closure.begin());
  return h;
}

HaloIndex::HaloIndex(const Halo& halo) : closure_(halo.closure) {
  entries_.resize(closure_.size());
  std::size_t bi = 0, di = 0;
  for (std::size_t k = 0; k < closure_.size(); ++k) {
    if (bi < halo.in_batch.size() && halo.in_batch[bi] == closure_[k])
      entries_[k] = {NodeRole::InBatch, bi++};
    else
      entries_[k] = {NodeRole::Boundary, di++};
  }
}

HaloIndex::Entry HaloIndex::find(NodeId id) const {
  auto it = std::lower_bound(closure_.begin(), closure_.end(), id);
  if (it == closure_.end() || *it != id) return {};
  return entries_[static_cast<std::size_t>(it - closure_.begin())];
}

Graph generate_sbm(const SbmParams& p) {
  if (p.blocks == 0 || p.nodes_per_block == 0)
    throw std::invalid_argument("empty block model");
  if (p.classes == 0 || p.blocks * p.nodes_per_block < p.classes)
    throw std::invalid_argument("fewer nodes than classes");
  if (p.d_x == 0) throw std::invalid_argument("feature dimension must be positive");
  if (p.p_in < 0 || p.p_in > 1 || p.p_out < 0 || p.p_out > 1)
    throw std::invalid_argument("edge probability outside [0,1]");
  if (p.label_fraction <= 0 || p.label_fraction > 1)
    throw std::invalid_argument("label fraction outside (0,1]");

  const std::size_t n = p.blocks * p.nodes_per_block;
  Rng rng(p.seed);

  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId i = 0; i < n; ++i) {
    std::size_t bi = i / p.nodes_per_block;
    for (NodeId j = i + 1; j < n; ++j) {
      std::size_t bj = j / p.nodes_per_block;
      double prob = (bi == bj) ? p.p_in : p.p_out;
      if (rng.uniform() < prob) edges.emplace_back(i, j);
    }
  }

  std::vector<int> labels(n);
  for (NodeId i = 0; i < n; ++i)
    labels[i] = static_cast<int>((i / p.nodes_per_block) % p.classes);

  const std::size_t num_labeled =
      static_cast<std::size_t>(std::ceil(p.label_fraction * static_cast<double>(n)));
  std::vector<NodeId> order(n);
  for (NodeId i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::uint8_t> labeled(n, 0);
  for (std::size_t k = 0; k < num_labeled; ++k) labeled[order[k]] = 1;

  Matrix features(p.d_x, n);
  for (NodeId i = 0; i < n; ++i) {
    auto c = features.col(i);
    for (std::size_t r = 0; r < p.d_x; ++r) c[r] = rng.normal(0.0, 0.5);
    c[static_cast<std::size_t>(labels[i]) % p.d_x] += 1.0;
  }

  Graph g = build_graph(n, edges, std::move(features), std::move(labels),
                        std::move(labeled));
  g.num_classes = p.classes;
  return g;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

bool skippable(std::string_view line) {
  auto t = trim(line);
  return t.empty() || t.front() == '#';
}

}  // namespace

Graph load_graph(const std::string& edges_path, const std::string& features_path,
                 const std::string& labels_path) {
  std::vector<std::pair<NodeId, NodeId>> edges;
  NodeId max_id = 0;
  bool any_edge = false;
  {
    auto lines = read_lines(edges_path);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      if (skippable(lines[ln])) continue;
      std::istringstream iss(lines[ln]);
      std::uint64_t u, v;
      std::string su, sv, extra;
      if (!(iss >> su >> sv) || (iss >> extra))
        parse_fail(edges_path, ln + 1, "malformed edge line");
      if (!try_parse_uint(su, u) || !try_parse_uint(sv, v))
        parse_fail(edges_path, ln + 1, "malformed edge line");
      edges.emplace_back(u, v);
      max_id = std::max({max_id, static_cast<NodeId>(u), static_cast<NodeId>(v)});
      any_edge = true;
    }
  }
  if (!any_edge) throw std::runtime_error(edges_path + ": no edges; node count undefined");
  const std::size_t n = max_id + 1;

  Matrix features;
  {
    auto lines = read_lines(features_path);
    std::vector<std::vector<double>> rows;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      if (skippable(lines[ln])) continue;
      std::vector<double> row;
      for (auto tok : split(lines[ln], ',')) {
        double v;
        if (!try_parse_double(tok, v))
          parse_fail(features_path, ln + 1, "malformed feature value");
        row.push_back(v);
      }
      if (!rows.empty() && row.size() != rows.front().size())
        parse_fail(features_path, ln + 1, "inconsistent feature dimension");
      rows.push_back(std::move(row));
    }
    if (rows.size() != n)
      throw std::runtime_error(features_path + ": feature row count mismatch: expected " +
                               std::to_string(n) + ", got " + std::to_string(rows.size()));
    features = Matrix(rows.front().size(), n);
    for (NodeId i = 0; i < n; ++i)
      for (std::size_t r = 0; r < rows[i].size(); ++r) features(r, i) = rows[i][r];
  }

  std::vector<int> labels;
  std::vector<std::uint8_t> labeled;
  {
    auto lines = read_lines(labels_path);
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      if (skippable(lines[ln])) continue;
      auto parts = split(lines[ln], ',');
      std::int64_t cls, flag;
      if (parts.size() != 2 || !try_parse_int(parts[0], cls) ||
          !try_parse_int(parts[1], flag) || cls < 0 || (flag != 0 && flag != 1))
        parse_fail(labels_path, ln + 1, "malformed label line");
      labels.push_back(static_cast<int>(cls));
      labeled.push_back(static_cast<std::uint8_t>(flag));
    }
    if (labels.size() != n)
      throw std::runtime_error(labels_path + ": label line count mismatch: expected " +
                               std::to_string(n) + ", got " + std::to_string(labels.size()));
  }

  return build_graph(n, edges, std::move(features), std::move(labels),
                     std::move(labeled));
}

void save_graph(const Graph& g, const std::string& edges_path,
                const std::string& features_path, const std::string& labels_path) {
  {
    std::ofstream out(edges_path);
    if (!out) throw std::runtime_error("cannot write " + edges_path);
    out << "# undirected edge list, one edge per line\n";
    for (NodeId i = 0; i < g.n; ++i)
      for (NodeId j : g.neighbors(i))
        if (i < j) out << i << " " << j << "\n";
  }
  {
    std::ofstream out(features_path);
    if (!out) throw std::runtime_error("cannot write " + features_path);
    for (NodeId i = 0; i < g.n; ++i) {
      auto c = g.features.col(i);
      for (std::size_t r = 0; r < c.size(); ++r) {
        if (r) out << ",";
        out << format_double(c[r]);
      }
      out << "\n";
    }
  }
  {
    std::ofstream out(labels_path);
    if (!out) throw std::runtime_error("cannot write " + labels_path);
    for (NodeId i = 0; i < g.n; ++i)
      out << g.labels[i] << "," << int(g.labeled[i]) << "\n";
  }
}

}  // namespace lmc
