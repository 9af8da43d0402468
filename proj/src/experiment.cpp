#include "lmc/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <utility>

#include "lmc/backward.hpp"
#include "lmc/engine.hpp"
#include "lmc/io_util.hpp"
#include "lmc/model.hpp"

namespace fs = std::filesystem;

namespace lmc {

namespace {

constexpr std::uint64_t kFnvPrime = 1099511628211ull;

std::uint64_t hash_u64(std::uint64_t x, std::uint64_t h) {
  return fnv1a(&x, sizeof x, h);
}

std::uint64_t hash_doubles(const double* p, std::size_t count, std::uint64_t h) {
  return fnv1a(p, count * sizeof(double), h);
}

std::string out_path(const RunConfig& cfg, const char* name) {
  return (fs::path(cfg.out_dir) / name).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  return f;
}

std::vector<std::size_t> model_dims(const RunConfig& cfg, const Graph& g) {
  std::vector<std::size_t> dims;
  dims.reserve(cfg.hidden.size() + 1);
  dims.push_back(g.feature_dim());
  for (auto d : cfg.hidden) dims.push_back(d);
  return dims;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

// per-layer relative errors vs the exact gradient, plus their mean
struct ErrorRow {
  std::vector<double> theta;  // layers 1..L
  double w = 0.0;
  double mean = 0.0;  // over the theta layers
};

ErrorRow error_row(const GradientSet& approx, const GradientSet& exact) {
  ErrorRow r;
  r.theta.reserve(approx.g_theta.size());
  for (std::size_t l = 0; l < approx.g_theta.size(); ++l) {
    r.theta.push_back(rel_error(approx.g_theta[l], exact.g_theta[l]));
    r.mean += r.theta.back();
  }
  if (!r.theta.empty()) r.mean /= static_cast<double>(r.theta.size());
  r.w = rel_error(approx.g_w, exact.g_w);
  return r;
}

bool uses_store(EstimatorMode m) {
  return m == EstimatorMode::GAS || m == EstimatorMode::LMC ||
         m == EstimatorMode::LMC_ForwardOnly;
}

}  // namespace

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[h & 0xf];
    h >>= 4;
  }
  return s;
}

std::uint64_t content_hash(const Graph& g) {
  std::uint64_t h = fnv1a("graph", 5);
  h = hash_u64(g.n, h);
  h = hash_u64(g.num_classes, h);
  h = hash_u64(g.feature_dim(), h);
  h = fnv1a(g.row_ptr.data(), g.row_ptr.size() * sizeof(std::size_t), h);
  h = fnv1a(g.adj.data(), g.adj.size() * sizeof(NodeId), h);
  h = hash_doubles(g.features.data().data(), g.features.data().size(), h);
  h = fnv1a(g.labels.data(), g.labels.size() * sizeof(int), h);
  h = fnv1a(g.labeled.data(), g.labeled.size(), h);
  return h;
}

std::uint64_t content_hash(const Partition& p) {
  std::uint64_t h = fnv1a("partition", 9);
  h = hash_u64(p.num_clusters, h);
  h = fnv1a(p.assignment.data(), p.assignment.size() * sizeof(std::size_t), h);
  return h;
}

RunSetup prepare_run(const RunConfig& cfg) {
  RunSetup s;
  s.graph = cfg.uses_files()
                ? load_graph(cfg.edges, cfg.features, cfg.labels)
                : generate_sbm(cfg.sbm);
  s.adj = normalize_adjacency(s.graph);
  if (cfg.partition_file.empty()) {
    s.part = partition_bfs(s.graph, cfg.clusters, cfg.partition_seed);
  } else {
    s.part = load_partition(cfg.partition_file);
    if (s.part.assignment.size() != s.graph.n)
      throw std::runtime_error(cfg.partition_file + ": partition covers " +
                               std::to_string(s.part.assignment.size()) +
                               " nodes, graph has " + std::to_string(s.graph.n));
    if (s.part.num_clusters != cfg.clusters)
      throw std::runtime_error(cfg.partition_file + ": has " +
                               std::to_string(s.part.num_clusters) +
                               " clusters, config says " +
                               std::to_string(cfg.clusters));
  }
  bool to_val = true;
  for (NodeId i = 0; i < s.graph.n; ++i) {
    if (s.graph.labeled[i]) continue;
    (to_val ? s.val_nodes : s.test_nodes).push_back(i);
    to_val = !to_val;
  }
  return s;
}

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const RunSetup& s, const std::string& path) {
  auto f = open_out(path);
  f << "command = " << command << "\n";
  for (const auto& line : cfg.echo()) f << line << "\n";
  f << "graph_fnv1a64 = " << hash_hex(content_hash(s.graph)) << "\n";
  f << "partition_fnv1a64 = " << hash_hex(content_hash(s.part)) << "\n";
}

int run_gen_data(const RunConfig& cfg) {
  if (cfg.uses_files())
    throw std::invalid_argument(
        "gen-data writes a synthetic dataset; drop the edges/features/labels "
        "keys");
  validate(cfg, false);
  Graph g = generate_sbm(cfg.sbm);
  fs::create_directories(cfg.out_dir);
  const std::string edges = out_path(cfg, "edges.txt");
  const std::string feats = out_path(cfg, "features.csv");
  const std::string labels = out_path(cfg, "labels.csv");
  save_graph(g, edges, feats, labels);

  std::cout << "wrote " << edges << ", " << feats << ", " << labels << "\n";
  std::cout << "nodes " << g.n << "  edges " << g.num_edges() << "\n";
  std::vector<std::size_t> total(g.num_classes, 0), vis(g.num_classes, 0);
  for (NodeId i = 0; i < g.n; ++i) {
    ++total[static_cast<std::size_t>(g.labels[i])];
    if (g.labeled[i]) ++vis[static_cast<std::size_t>(g.labels[i])];
  }
  for (std::size_t c = 0; c < g.num_classes; ++c)
    std::cout << "class " << c << ": " << total[c] << " nodes, " << vis[c]
              << " labeled\n";
  return 0;
}

int run_partition_cmd(const RunConfig& cfg) {
  validate(cfg, false);
  Graph g = cfg.uses_files()
                ? load_graph(cfg.edges, cfg.features, cfg.labels)
                : generate_sbm(cfg.sbm);
  Partition p = partition_bfs(g, cfg.clusters, cfg.partition_seed);
  fs::create_directories(cfg.out_dir);
  const std::string path = out_path(cfg, "partition.txt");
  save_partition(p, path);
  std::cout << "wrote " << path << "\n";
  std::cout << "clusters " << p.num_clusters << ", sizes";
  for (const auto& c : p.clusters) std::cout << " " << c.size();
  std::cout << "\n";
  return 0;
}

int run_train(const RunConfig& cfg) {
  validate(cfg, true);
  RunSetup s = prepare_run(cfg);
  fs::create_directories(cfg.out_dir);
  save_partition(s.part, out_path(cfg, "partition.txt"));
  write_manifest(cfg, "train", s, out_path(cfg, "manifest.txt"));

  EngineOptions eo;
  eo.mode = cfg.mode;
  eo.clusters_per_batch = cfg.batch_clusters;
  eo.eta = cfg.eta;
  eo.sched = cfg.schedule();
  eo.warm_start = cfg.warm_start;
  eo.seed = *cfg.seed + 1;
  Engine engine(s.graph, s.adj, s.part,
                init_glorot(model_dims(cfg, s.graph), s.graph.num_classes,
                            *cfg.seed),
                eo);

  const std::size_t L = cfg.hidden.size();
  auto csv = open_out(out_path(cfg, "metrics.csv"));
  csv << "iteration,epoch,train_loss,full_batch_loss,train_acc,val_acc,"
         "test_acc,rel_err_mean";
  for (std::size_t l = 1; l <= L; ++l) csv << ",rel_err_theta" << l;
  csv << ",rel_err_w,nodes_touched,wall_time_ms\n";
  csv.flush();

  const std::size_t every = cfg.resolved_eval_every();
  const auto train_nodes = s.graph.labeled_nodes();
  const double batches_per_epoch =
      static_cast<double>(cfg.clusters) / static_cast<double>(cfg.batch_clusters);
  double train_ms = 0.0;
  int exit_code = 0;
  try {
    for (std::size_t k = 1; k <= cfg.iterations; ++k) {
      const bool measured = (k % every == 0) || (k == cfg.iterations);
      FullPass exact;
      double acc_train = 0.0, acc_val = 0.0, acc_test = 0.0;
      if (measured) {
        exact = full_pass(s.graph, s.adj, engine.params());
        acc_train = accuracy(exact.state, engine.params(), s.graph, train_nodes);
        acc_val = accuracy(exact.state, engine.params(), s.graph, s.val_nodes);
        acc_test = accuracy(exact.state, engine.params(), s.graph, s.test_nodes);
      }
      auto t0 = std::chrono::steady_clock::now();
      StepResult sr = engine.step();
      train_ms += ms_since(t0);
      if (!measured) continue;
      ErrorRow err = error_row(sr.grads, exact.grads);
      csv << k << "," << format_double(static_cast<double>(k) / batches_per_epoch)
          << "," << format_double(sr.loss) << "," << format_double(exact.loss)
          << "," << format_double(acc_train) << "," << format_double(acc_val)
          << "," << format_double(acc_test) << "," << format_double(err.mean);
      for (double e : err.theta) csv << "," << format_double(e);
      csv << "," << format_double(err.w) << "," << sr.nodes_touched << ","
          << format_double(train_ms) << "\n";
      csv.flush();
    }
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "; partial metrics retained\n";
    exit_code = 1;
  }
  if (exit_code == 0) {
    save_checkpoint(engine.params(), out_path(cfg, "params.ckpt"));
    std::cout << "ran " << cfg.iterations << " iterations of "
              << to_string(cfg.mode) << ", wrote " << out_path(cfg, "metrics.csv")
              << " and " << out_path(cfg, "params.ckpt") << "\n";
  }
  return exit_code;
}

int run_grad_error(const RunConfig& cfg) {
  validate(cfg, true);
  RunSetup s = prepare_run(cfg);
  fs::create_directories(cfg.out_dir);
  save_partition(s.part, out_path(cfg, "partition.txt"));
  write_manifest(cfg, "grad-error", s, out_path(cfg, "manifest.txt"));

  ModelParams params =
      init_glorot(model_dims(cfg, s.graph), s.graph.num_classes, *cfg.seed);
  const BetaSchedule sched = cfg.schedule();
  const std::size_t L = cfg.hidden.size();
  const auto& modes = cfg.grad_modes;

  // every store-backed mode owns its own historical state
  std::vector<HistoricalStore> stores(modes.size());
  for (std::size_t m = 0; m < modes.size(); ++m) {
    if (!uses_store(modes[m])) continue;
    stores[m] = HistoricalStore::zeros(params.dims(), s.graph.n);
    if (cfg.warm_start) stores[m].warm_start(s.graph, s.adj, params);
  }

  auto csv = open_out(out_path(cfg, "metrics.csv"));
  csv << "iteration,mode,rel_err_mean";
  for (std::size_t l = 1; l <= L; ++l) csv << ",rel_err_theta" << l;
  csv << ",rel_err_w\n";
  csv.flush();

  // running sums for the per-mode summary rows
  std::vector<ErrorRow> sums(modes.size());
  for (auto& r : sums) r.theta.assign(L, 0.0);
  std::size_t measured_steps = 0;

  Rng rng(*cfg.seed + 1);
  int exit_code = 0;
  try {
    for (std::size_t k = 1; k <= cfg.iterations; ++k) {
      MiniBatch batch = sample_batch(s.graph, s.part, cfg.batch_clusters, rng);
      const bool measured = (k % cfg.measure_every == 0);
      GradientSet exact;
      if (measured) exact = full_gradients(s.graph, s.adj, params);
      GradientSet applied;
      for (std::size_t m = 0; m < modes.size(); ++m) {
        MinibatchResult r = minibatch_gradients(
            modes[m], uses_store(modes[m]) ? &stores[m] : nullptr, batch,
            s.graph, s.adj, params, sched, nullptr);
        if (m == 0 && !std::isfinite(r.loss)) throw DivergenceError(k);
        if (measured) {
          ErrorRow err = error_row(r.grads, exact);
          csv << k << "," << to_string(modes[m]) << ","
              << format_double(err.mean);
          for (double e : err.theta) csv << "," << format_double(e);
          csv << "," << format_double(err.w) << "\n";
          for (std::size_t l = 0; l < L; ++l) sums[m].theta[l] += err.theta[l];
          sums[m].w += err.w;
          sums[m].mean += err.mean;
        }
        if (m == 0) applied = std::move(r.grads);
      }
      if (measured) {
        ++measured_steps;
        csv.flush();
      }
      params.add_scaled(applied, -cfg.eta);
    }
    if (measured_steps > 0) {
      const double inv = 1.0 / static_cast<double>(measured_steps);
      for (std::size_t m = 0; m < modes.size(); ++m) {
        csv << "summary," << to_string(modes[m]) << ","
            << format_double(sums[m].mean * inv);
        for (std::size_t l = 0; l < L; ++l)
          csv << "," << format_double(sums[m].theta[l] * inv);
        csv << "," << format_double(sums[m].w * inv) << "\n";
      }
      csv.flush();
    }
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "; partial metrics retained\n";
    exit_code = 1;
  }
  if (exit_code == 0) {
    save_checkpoint(params, out_path(cfg, "params.ckpt"));
    std::cout << "measured " << measured_steps << " of " << cfg.iterations
              << " iterations, wrote " << out_path(cfg, "metrics.csv") << "\n";
  }
  return exit_code;
}

}  // namespace lmc
