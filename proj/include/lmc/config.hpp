#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lmc/engine.hpp"
#include "lmc/graph.hpp"

namespace lmc {

// Resolved run settings. Parsed from "key = value" text; every key has a
// default, unknown keys are hard errors.
struct RunConfig {
  // dataset: file paths win over the generator when all three are set
  std::string edges;
  std::string features;
  std::string labels;
  SbmParams sbm;

  std::vector<std::size_t> hidden = {16};  // d_1 .. d_L

  EstimatorMode mode = EstimatorMode::LMC;
  std::size_t clusters = 4;         // B
  std::size_t batch_clusters = 1;   // c
  double eta = 0.1;
  std::size_t iterations = 100;
  std::size_t eval_every = 0;       // 0 -> once per epoch, ceil(B/c) steps
  bool warm_start = false;
  std::optional<double> alpha;      // beta schedule; defaults depend on c, B
  std::optional<BetaScore> score;

  std::vector<EstimatorMode> grad_modes = {EstimatorMode::LMC};
  std::size_t measure_every = 1;

  std::string out_dir = "out";
  std::string partition_file;       // reuse an existing partition when set
  std::uint64_t partition_seed = 0;

  std::optional<std::uint64_t> seed;  // mandatory for train / grad-error

  bool uses_files() const {
    return !edges.empty() || !features.empty() || !labels.empty();
  }
  BetaSchedule schedule() const;
  std::size_t resolved_eval_every() const;
  // sorted "key = value" lines reflecting every setting
  std::vector<std::string> echo() const;
};

RunConfig parse_config_file(const std::string& path);
// "key=value" command-line override
void apply_override(RunConfig& cfg, const std::string& spec);
// throws on inconsistent settings; `for_training` additionally demands a seed
void validate(const RunConfig& cfg, bool for_training);

}  // namespace lmc
