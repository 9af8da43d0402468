#include "lmc/partition.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <stdexcept>

#include "lmc/io_util.hpp"

namespace lmc {

namespace {

Partition finish_partition(std::vector<std::size_t> assignment,
                           std::size_t num_clusters) {
  Partition p;
  p.num_clusters = num_clusters;
  p.clusters.assign(num_clusters, {});
  for (NodeId i = 0; i < assignment.size(); ++i) {
    if (assignment[i] >= num_clusters)
      throw std::invalid_argument("cluster id out of range for node " +
                                  std::to_string(i));
    p.clusters[assignment[i]].push_back(i);
  }
  for (std::size_t b = 0; b < num_clusters; ++b)
    if (p.clusters[b].empty())
      throw std::invalid_argument("cluster " + std::to_string(b) + " is empty");
  p.assignment = std::move(assignment);
  return p;
}

}  // namespace

Partition partition_bfs(const Graph& g, std::size_t num_clusters,
                        std::uint64_t seed) {
  if (num_clusters == 0 || num_clusters > g.n)
    throw std::invalid_argument("cluster count must be in [1, n]");

  Rng rng(seed);
  constexpr std::size_t kUnassigned = static_cast<std::size_t>(-1);
  std::vector<std::size_t> assignment(g.n, kUnassigned);
  std::size_t remaining = g.n;
  NodeId next_seed = 0;

  for (std::size_t part = 0; part < num_clusters; ++part) {
    const std::size_t parts_left = num_clusters - part;
    const std::size_t target = (remaining + parts_left - 1) / parts_left;
    std::size_t grown = 0;
    std::deque<NodeId> frontier;

    while (grown < target) {
      if (frontier.empty()) {
        while (assignment[next_seed] != kUnassigned) ++next_seed;
        assignment[next_seed] = part;
        ++grown;
        frontier.push_back(next_seed);
        continue;
      }
      NodeId u = frontier.front();
      frontier.pop_front();
      std::vector<NodeId> cands;
      for (NodeId v : g.neighbors(u))
        if (assignment[v] == kUnassigned) cands.push_back(v);
      rng.shuffle(cands);
      for (NodeId v : cands) {
        if (grown == target) break;
        assignment[v] = part;
        ++grown;
        frontier.push_back(v);
      }
    }
    remaining -= grown;
  }

  return finish_partition(std::move(assignment), num_clusters);
}

Partition partition_from_assignment(std::vector<std::size_t> assignment,
                                    std::size_t num_clusters) {
  if (assignment.empty()) throw std::invalid_argument("empty assignment");
  return finish_partition(std::move(assignment), num_clusters);
}

void save_partition(const Partition& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t c : p.assignment) out << c << "\n";
}

Partition load_partition(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::size_t> assignment;
  std::string line;
  std::size_t ln = 0;
  std::size_t max_cluster = 0;
  while (std::getline(in, line)) {
    ++ln;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    std::uint64_t c;
    if (!try_parse_uint(t, c)) parse_fail(path, ln, "malformed cluster id");
    assignment.push_back(c);
    max_cluster = std::max(max_cluster, static_cast<std::size_t>(c));
  }
  if (assignment.empty()) throw std::runtime_error(path + ": empty partition file");
  return partition_from_assignment(std::move(assignment), max_cluster + 1);
}

MiniBatch make_batch(const Graph& g, const Partition& p,
                     std::vector<std::size_t> cluster_ids) {
  if (cluster_ids.empty()) throw std::invalid_argument("empty cluster selection");
  std::sort(cluster_ids.begin(), cluster_ids.end());
  if (std::adjacent_find(cluster_ids.begin(), cluster_ids.end()) !=
      cluster_ids.end())
    throw std::invalid_argument("repeated cluster id in batch");
  if (cluster_ids.back() >= p.num_clusters)
    throw std::invalid_argument("cluster id out of range");

  std::vector<NodeId> nodes;
  for (std::size_t c : cluster_ids)
    nodes.insert(nodes.end(), p.clusters[c].begin(), p.clusters[c].end());

  MiniBatch b;
  b.halo = halo_of(g, std::move(nodes));
  for (NodeId i : b.halo.in_batch)
    if (g.labeled[i]) b.labeled_in_batch.push_back(i);

  const double B = static_cast<double>(p.num_clusters);
  const double c = static_cast<double>(cluster_ids.size());
  b.w_theta = B * static_cast<double>(b.halo.in_batch.size()) /
              (c * static_cast<double>(g.n));
  const std::size_t total_labeled = g.labeled_count();
  b.w_loss = B * static_cast<double>(b.labeled_in_batch.size()) /
             (c * static_cast<double>(total_labeled));
  b.cluster_ids = std::move(cluster_ids);
  return b;
}

MiniBatch sample_batch(const Graph& g, const Partition& p, std::size_t c,
                       Rng& rng) {
  if (c == 0 || c > p.num_clusters)
    throw std::invalid_argument("batch cluster count must be in [1, B]");
  auto ids = rng.sample_without_replacement(p.num_clusters, c);
  return make_batch(g, p, std::move(ids));
}

std::vector<std::vector<std::size_t>> enumerate_batches(std::size_t num_clusters,
                                                        std::size_t c) {
  if (c == 0 || c > num_clusters)
    throw std::invalid_argument("batch cluster count must be in [1, B]");
  double count = 1.0;
  for (std::size_t k = 0; k < c; ++k)
    count *= static_cast<double>(num_clusters - k) / static_cast<double>(k + 1);
  if (count > 1e6)
    throw std::invalid_argument("refusing to enumerate more than 1e6 batches");

  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> combo(c);
  for (std::size_t k = 0; k < c; ++k) combo[k] = k;
  for (;;) {
    out.push_back(combo);
    std::size_t k = c;
    while (k > 0 && combo[k - 1] == num_clusters - c + k - 1) --k;
    if (k == 0) break;
    ++combo[k - 1];
    for (std::size_t j = k; j < c; ++j) combo[j] = combo[j - 1] + 1;
  }
  return out;
}

}  // namespace lmc
