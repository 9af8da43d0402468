#include <cstdint>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lmc/config.hpp"
#include "lmc/experiment.hpp"

namespace {

struct CliState {
  std::string config_path;
  std::vector<std::string> sets;
  std::uint64_t seed = 0;
  int rc = 0;
};

lmc::RunConfig resolve(const CliState& st) {
  lmc::RunConfig cfg;
  if (!st.config_path.empty()) cfg = lmc::parse_config_file(st.config_path);
  for (const auto& s : st.sets) lmc::apply_override(cfg, s);
  return cfg;
}

void add_common(CLI::App* sub, CliState& st) {
  sub->add_option("--config", st.config_path, "key = value settings file");
  sub->add_option("--set", st.sets, "override one key, repeatable: key=value");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"subgraph mini-batch GCN trainer with message compensation"};
  app.require_subcommand(1);
  CliState st;

  auto* gen = app.add_subcommand("gen-data", "write a synthetic block-model dataset");
  add_common(gen, st);
  gen->callback([&] { st.rc = lmc::run_gen_data(resolve(st)); });

  auto* part = app.add_subcommand("partition", "partition a graph into clusters");
  add_common(part, st);
  part->callback([&] { st.rc = lmc::run_partition_cmd(resolve(st)); });

  auto* train = app.add_subcommand("train", "run mini-batch training");
  add_common(train, st);
  train->add_option("--seed", st.seed, "parameter and sampling seed")->required();
  train->callback([&] {
    auto cfg = resolve(st);
    cfg.seed = st.seed;
    st.rc = lmc::run_train(cfg);
  });

  auto* ge = app.add_subcommand("grad-error",
                                "compare estimator gradients against the exact one");
  add_common(ge, st);
  ge->add_option("--seed", st.seed, "parameter and sampling seed")->required();
  ge->callback([&] {
    auto cfg = resolve(st);
    cfg.seed = st.seed;
    st.rc = lmc::run_grad_error(cfg);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return st.rc;
}
