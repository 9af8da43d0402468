#include "lmc/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

#include "lmc/io_util.hpp"

namespace lmc {

namespace {

std::uint64_t parse_u64_or_throw(const std::string& key, std::string_view v) {
  std::uint64_t out;
  if (!try_parse_uint(v, out))
    throw std::invalid_argument("config key '" + key + "': bad unsigned value '" +
                                std::string(v) + "'");
  return out;
}

double parse_double_or_throw(const std::string& key, std::string_view v) {
  double out;
  if (!try_parse_double(v, out))
    throw std::invalid_argument("config key '" + key + "': bad numeric value '" +
                                std::string(v) + "'");
  return out;
}

bool parse_bool_or_throw(const std::string& key, std::string_view v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw std::invalid_argument("config key '" + key + "': bad boolean value '" +
                              std::string(v) + "'");
}

std::vector<std::size_t> parse_dims(const std::string& key, std::string_view v) {
  std::vector<std::size_t> out;
  for (auto tok : split(v, ',')) {
    auto d = parse_u64_or_throw(key, tok);
    if (d == 0) throw std::invalid_argument("config key '" + key + "': zero dim");
    out.push_back(d);
  }
  if (out.empty()) throw std::invalid_argument("config key '" + key + "': empty list");
  return out;
}

std::vector<EstimatorMode> parse_modes(std::string_view v) {
  std::vector<EstimatorMode> out;
  for (auto tok : split(v, ','))
    out.push_back(parse_mode(std::string(trim(tok))));
  return out;
}

void set_key(RunConfig& c, const std::string& key, std::string_view raw) {
  const std::string value(trim(raw));
  if (key == "edges") c.edges = value;
  else if (key == "features") c.features = value;
  else if (key == "labels") c.labels = value;
  else if (key == "sbm_blocks") c.sbm.blocks = parse_u64_or_throw(key, value);
  else if (key == "sbm_nodes_per_block")
    c.sbm.nodes_per_block = parse_u64_or_throw(key, value);
  else if (key == "sbm_p_in") c.sbm.p_in = parse_double_or_throw(key, value);
  else if (key == "sbm_p_out") c.sbm.p_out = parse_double_or_throw(key, value);
  else if (key == "sbm_dx") c.sbm.d_x = parse_u64_or_throw(key, value);
  else if (key == "sbm_classes") c.sbm.classes = parse_u64_or_throw(key, value);
  else if (key == "sbm_label_fraction")
    c.sbm.label_fraction = parse_double_or_throw(key, value);
  else if (key == "sbm_seed") c.sbm.seed = parse_u64_or_throw(key, value);
  else if (key == "hidden") c.hidden = parse_dims(key, value);
  else if (key == "mode") c.mode = parse_mode(value);
  else if (key == "clusters") c.clusters = parse_u64_or_throw(key, value);
  else if (key == "batch_clusters")
    c.batch_clusters = parse_u64_or_throw(key, value);
  else if (key == "eta") c.eta = parse_double_or_throw(key, value);
  else if (key == "iterations") c.iterations = parse_u64_or_throw(key, value);
  else if (key == "eval_every") c.eval_every = parse_u64_or_throw(key, value);
  else if (key == "warm_start") c.warm_start = parse_bool_or_throw(key, value);
  else if (key == "alpha") c.alpha = parse_double_or_throw(key, value);
  else if (key == "score") c.score = parse_beta_score(value);
  else if (key == "grad_modes") c.grad_modes = parse_modes(value);
  else if (key == "measure_every") c.measure_every = parse_u64_or_throw(key, value);
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "partition_file") c.partition_file = value;
  else if (key == "partition_seed") c.partition_seed = parse_u64_or_throw(key, value);
  else if (key == "seed") c.seed = parse_u64_or_throw(key, value);
  else
    throw std::invalid_argument("unknown config key '" + key + "'");
}

}  // namespace

BetaSchedule RunConfig::schedule() const {
  BetaSchedule s = BetaSchedule::defaults_for(batch_clusters, clusters);
  if (alpha) s.alpha = *alpha;
  if (score) s.score = *score;
  return s;
}

std::size_t RunConfig::resolved_eval_every() const {
  if (eval_every > 0) return eval_every;
  return (clusters + batch_clusters - 1) / batch_clusters;
}

std::vector<std::string> RunConfig::echo() const {
  BetaSchedule s = schedule();
  std::map<std::string, std::string> kv;
  kv["edges"] = edges;
  kv["features"] = features;
  kv["labels"] = labels;
  kv["sbm_blocks"] = std::to_string(sbm.blocks);
  kv["sbm_nodes_per_block"] = std::to_string(sbm.nodes_per_block);
  kv["sbm_p_in"] = format_double(sbm.p_in);
  kv["sbm_p_out"] = format_double(sbm.p_out);
  kv["sbm_dx"] = std::to_string(sbm.d_x);
  kv["sbm_classes"] = std::to_string(sbm.classes);
  kv["sbm_label_fraction"] = format_double(sbm.label_fraction);
  kv["sbm_seed"] = std::to_string(sbm.seed);
  {
    std::string h;
    for (std::size_t i = 0; i < hidden.size(); ++i)
      h += (i ? "," : "") + std::to_string(hidden[i]);
    kv["hidden"] = h;
  }
  kv["mode"] = to_string(mode);
  kv["clusters"] = std::to_string(clusters);
  kv["batch_clusters"] = std::to_string(batch_clusters);
  kv["eta"] = format_double(eta);
  kv["iterations"] = std::to_string(iterations);
  kv["eval_every"] = std::to_string(resolved_eval_every());
  kv["warm_start"] = warm_start ? "1" : "0";
  kv["alpha"] = format_double(s.alpha);
  kv["score"] = to_string(s.score);
  {
    std::string m;
    for (std::size_t i = 0; i < grad_modes.size(); ++i)
      m += (i ? "," : "") + to_string(grad_modes[i]);
    kv["grad_modes"] = m;
  }
  kv["measure_every"] = std::to_string(measure_every);
  kv["out_dir"] = out_dir;
  kv["partition_file"] = partition_file;
  kv["partition_seed"] = std::to_string(partition_seed);
  kv["seed"] = seed ? std::to_string(*seed) : "";

  std::vector<std::string> lines;
  for (const auto& [k, v] : kv) lines.push_back(k + " = " + v);
  return lines;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  RunConfig cfg;
  std::string line;
  std::size_t ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    auto t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string_view::npos)
      parse_fail(path, ln, "expected 'key = value'");
    std::string key(trim(t.substr(0, eq)));
    try {
      set_key(cfg, key, t.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      parse_fail(path, ln, e.what());
    }
  }
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& spec) {
  auto eq = spec.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override must look like key=value: " + spec);
  set_key(cfg, std::string(trim(std::string_view(spec).substr(0, eq))),
          std::string_view(spec).substr(eq + 1));
}

void validate(const RunConfig& cfg, bool for_training) {
  if (cfg.uses_files() &&
      (cfg.edges.empty() || cfg.features.empty() || cfg.labels.empty()))
    throw std::invalid_argument(
        "edges, features and labels must be given together");
  if (cfg.hidden.empty()) throw std::invalid_argument("empty hidden layer list");
  if (cfg.clusters == 0) throw std::invalid_argument("clusters must be positive");
  if (cfg.batch_clusters == 0 || cfg.batch_clusters > cfg.clusters)
    throw std::invalid_argument("batch_clusters must be in [1, clusters]");
  if (cfg.eta <= 0.0 && for_training)
    throw std::invalid_argument("eta must be positive");
  if (cfg.measure_every == 0)
    throw std::invalid_argument("measure_every must be positive");
  if (cfg.alpha && (*cfg.alpha < 0.0 || *cfg.alpha > 1.0))
    throw std::invalid_argument("alpha must be in [0, 1]");
  if (cfg.grad_modes.empty())
    throw std::invalid_argument("grad_modes must list at least one mode");
  if (for_training && !cfg.seed)
    throw std::invalid_argument("a seed is required; pass --seed");
}

}  // namespace lmc
