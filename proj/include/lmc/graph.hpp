#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lmc/matrix.hpp"

namespace lmc {

using NodeId = std::size_t;

// Undirected simple graph in CSR form plus node features and labels.
// Rows are sorted neighbor lists without self loops; every undirected edge
// appears in both endpoint rows.
struct Graph {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;   // n + 1 offsets into adj
  std::vector<NodeId> adj;
  Matrix features;                    // [d_x x n], column j = node j
  std::vector<int> labels;            // class id per node
  std::vector<std::uint8_t> labeled;  // 1 if the label is visible to training
  std::size_t num_classes = 0;

  std::size_t degree(NodeId i) const { return row_ptr[i + 1] - row_ptr[i]; }
  std::span<const NodeId> neighbors(NodeId i) const {
    return {adj.data() + row_ptr[i], adj.data() + row_ptr[i + 1]};
  }
  std::size_t num_edges() const { return adj.size() / 2; }
  std::size_t feature_dim() const { return features.rows(); }

  std::size_t labeled_total = 0;  // cached by build_graph

  std::size_t labeled_count() const { return labeled_total; }
  std::vector<NodeId> labeled_nodes() const;
};

// Builds and validates a graph from an undirected edge list. Each edge is
// given once; duplicates, self loops and out-of-range endpoints are errors.
Graph build_graph(std::size_t n, const std::vector<std::pair<NodeId, NodeId>>& edges,
                  Matrix features, std::vector<int> labels,
                  std::vector<std::uint8_t> labeled);

// Symmetric degree-normalized adjacency with self loops folded into the
// sparse rows: row i holds the sorted neighbors of i plus i itself, and the
// coefficient for (i, j) is 1/sqrt((deg(i)+1)(deg(j)+1)). An isolated node
// keeps a single diagonal entry of 1.
struct NormalizedAdjacency {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<NodeId> col;
  std::vector<double> coeff;

  std::span<const NodeId> row_cols(NodeId i) const {
    return {col.data() + row_ptr[i], col.data() + row_ptr[i + 1]};
  }
  std::span<const double> row_coeffs(NodeId i) const {
    return {coeff.data() + row_ptr[i], coeff.data() + row_ptr[i + 1]};
  }
};

NormalizedAdjacency normalize_adjacency(const Graph& g);

// Same normalization over a bare CSR structure (rows sorted, no self loops);
// used for induced subgraphs.
NormalizedAdjacency normalize_adjacency_csr(std::size_t n,
                                            const std::vector<std::size_t>& row_ptr,
                                            const std::vector<NodeId>& adj);

// One mini-batch's node sets: the batch itself, its out-of-batch neighbors,
// and the union of the two. All three lists are sorted.
struct Halo {
  std::vector<NodeId> in_batch;
  std::vector<NodeId> boundary;
  std::vector<NodeId> closure;
};

Halo halo_of(const Graph& g, std::vector<NodeId> in_batch);

enum class NodeRole { InBatch, Boundary, Outside };

// Binary-search lookup from node id to its role and dense local column index
// within one batch's working matrices.
class HaloIndex {
 public:
  explicit HaloIndex(const Halo& halo);

  struct Entry {
    NodeRole role = NodeRole::Outside;
    std::size_t local = 0;
  };
  Entry find(NodeId id) const;

 private:
  std::vector<NodeId> closure_;
  std::vector<Entry> entries_;
};

struct SbmParams {
  std::size_t blocks = 2;
  std::size_t nodes_per_block = 4;
  double p_in = 1.0;
  double p_out = 0.0;
  std::size_t d_x = 4;
  std::size_t classes = 2;
  double label_fraction = 0.5;
  std::uint64_t seed = 0;
};

// Stochastic block model draw. Node i sits in block i / nodes_per_block and
// gets class (block mod classes). Features are one-hot(class) plus Gaussian
// noise (sigma 0.5). ceil(label_fraction * n) nodes are labeled, chosen by a
// seeded shuffle. Bitwise deterministic for a fixed seed.
Graph generate_sbm(const SbmParams& p);

Graph load_graph(const std::string& edges_path, const std::string& features_path,
                 const std::string& labels_path);
void save_graph(const Graph& g, const std::string& edges_path,
                const std::string& features_path, const std::string& labels_path);

}  // namespace lmc
