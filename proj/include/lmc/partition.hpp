#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lmc/graph.hpp"
#include "lmc/rng.hpp"

namespace lmc {

// Fixed node partition into clusters. Clusters are disjoint, cover the node
// set exactly, and each holds a sorted id list.
struct Partition {
  std::size_t num_clusters = 0;
  std::vector<std::size_t> assignment;        // node -> cluster
  std::vector<std::vector<NodeId>> clusters;  // sorted node lists
};

// Seeded breadth-first region growing: take the lowest-id unassigned node,
// grow a BFS region up to ceil(remaining / remaining_parts) nodes (the seed
// shuffles each expansion frontier), then start the next cluster. Jumps to
// the next component when a region runs out of reachable nodes, so cluster
// sizes stay balanced even on disconnected graphs.
Partition partition_bfs(const Graph& g, std::size_t num_clusters,
                        std::uint64_t seed);

Partition partition_from_assignment(std::vector<std::size_t> assignment,
                                    std::size_t num_clusters);

void save_partition(const Partition& p, const std::string& path);
Partition load_partition(const std::string& path);

// A sampled batch: the chosen cluster ids, the node sets, the labeled
// in-batch nodes, and the sampling-correction weights
//   w_theta = B |V_B| / (c |V|),   w_loss = B |V_LB| / (c |V_L|).
struct MiniBatch {
  std::vector<std::size_t> cluster_ids;  // sorted, distinct
  Halo halo;
  std::vector<NodeId> labeled_in_batch;  // sorted
  double w_theta = 1.0;
  double w_loss = 1.0;
};

MiniBatch make_batch(const Graph& g, const Partition& p,
                     std::vector<std::size_t> cluster_ids);

// c distinct clusters drawn uniformly without replacement
MiniBatch sample_batch(const Graph& g, const Partition& p, std::size_t c,
                       Rng& rng);

// All C(B, c) cluster-id combinations in lexicographic order. Refuses to
// enumerate more than 10^6 batches.
std::vector<std::vector<std::size_t>> enumerate_batches(std::size_t num_clusters,
                                                        std::size_t c);

}  // namespace lmc
