#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lmc/config.hpp"
#include "lmc/graph.hpp"
#include "lmc/partition.hpp"

namespace lmc {

// FNV-1a 64-bit, chainable through `h`
std::uint64_t fnv1a(const void* data, std::size_t len,
                    std::uint64_t h = 14695981039346656037ull);
std::string hash_hex(std::uint64_t h);

// canonical content hashes recorded in the run manifest
std::uint64_t content_hash(const Graph& g);
std::uint64_t content_hash(const Partition& p);

// Dataset, normalized adjacency, partition and evaluation splits for one
// run. Unlabeled nodes alternate between the validation and test sets in
// ascending id order.
struct RunSetup {
  Graph graph;
  NormalizedAdjacency adj;
  Partition part;
  std::vector<NodeId> val_nodes;
  std::vector<NodeId> test_nodes;
};

RunSetup prepare_run(const RunConfig& cfg);

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const RunSetup& s, const std::string& path);

// subcommand bodies; each returns a process exit code
int run_gen_data(const RunConfig& cfg);
int run_partition_cmd(const RunConfig& cfg);
int run_train(const RunConfig& cfg);
int run_grad_error(const RunConfig& cfg);

}  // namespace lmc
