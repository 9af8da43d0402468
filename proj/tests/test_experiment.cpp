#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lmc/config.hpp"
#include "lmc/experiment.hpp"
#include "lmc/io_util.hpp"

using namespace lmc;
namespace fs = std::filesystem;

namespace {

// the runner entry points narrate to stdout/stderr; keep test logs quiet
struct CaptureStream {
  std::ostream& os;
  std::ostringstream buf;
  std::streambuf* old;
  explicit CaptureStream(std::ostream& o) : os(o), old(o.rdbuf(buf.rdbuf())) {}
  ~CaptureStream() { os.rdbuf(old); }
  std::string text() const { return buf.str(); }
};

std::string write_tmp(const std::string& name, const std::string& body) {
  fs::create_directories("test_tmp");
  std::string path = "test_tmp/" + name;
  std::ofstream out(path);
  out << body;
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

// 12-node community graph settings shared by the runner tests
RunConfig small_cfg(const std::string& out_dir) {
  RunConfig cfg;
  cfg.sbm.blocks = 2;
  cfg.sbm.nodes_per_block = 6;
  cfg.sbm.p_in = 0.6;
  cfg.sbm.p_out = 0.2;
  cfg.sbm.d_x = 3;
  cfg.sbm.classes = 2;
  cfg.sbm.label_fraction = 0.5;
  cfg.sbm.seed = 5;
  cfg.hidden = {4, 3};
  cfg.out_dir = "test_tmp/" + out_dir;
  cfg.seed = 17;
  return cfg;
}

// all columns but the trailing wall-clock one
std::string drop_last_column(const std::string& line) {
  return line.substr(0, line.rfind(','));
}

}  // namespace

TEST_CASE("byte hashes match the published test vectors") {
  // FNV-1a, 64 bit: offset basis for empty input, classic "foobar" digest
  CHECK(fnv1a("", 0) == 14695981039346656037ull);
  CHECK(fnv1a("foobar", 6) == 0x85944171f73967e8ull);
  CHECK(hash_hex(0x85944171f73967e8ull) == "85944171f73967e8");
  CHECK(hash_hex(0) == "0000000000000000");
}

TEST_CASE("content hashes track the dataset and the partition") {
  RunConfig a = small_cfg("hash_a");
  Graph g1 = generate_sbm(a.sbm);
  Graph g2 = generate_sbm(a.sbm);
  CHECK(content_hash(g1) == content_hash(g2));

  a.sbm.seed = 6;
  Graph g3 = generate_sbm(a.sbm);
  CHECK(content_hash(g1) != content_hash(g3));

  Partition p1 = partition_bfs(g1, 4, 2);
  Partition p2 = partition_bfs(g1, 4, 2);
  CHECK(content_hash(p1) == content_hash(p2));
  CHECK(content_hash(p1) != content_hash(partition_bfs(g1, 3, 2)));
}

TEST_CASE("config files parse keys, comments and overrides") {
  std::string path = write_tmp("good.cfg",
                               "# training shape\n"
                               "hidden = 8,4\n"
                               "mode = GAS\n"
                               "\n"
                               "clusters = 6\n"
                               "batch_clusters = 2\n"
                               "eta = 0.25\n"
                               "iterations = 40\n"
                               "warm_start = true\n"
                               "alpha = 0.5\n"
                               "score = x^2\n"
                               "grad_modes = LMC, GAS ,FullBatch\n"
                               "sbm_nodes_per_block = 7\n"
                               "out_dir = test_tmp/somewhere\n");
  RunConfig cfg = parse_config_file(path);
  CHECK(cfg.hidden == std::vector<std::size_t>{8, 4});
  CHECK(cfg.mode == EstimatorMode::GAS);
  CHECK(cfg.clusters == 6);
  CHECK(cfg.batch_clusters == 2);
  CHECK(cfg.eta == 0.25);
  CHECK(cfg.iterations == 40);
  CHECK(cfg.warm_start);
  CHECK(cfg.alpha == 0.5);
  CHECK(cfg.score == BetaScore::XSquared);
  CHECK(cfg.grad_modes == std::vector<EstimatorMode>{EstimatorMode::LMC,
                                                     EstimatorMode::GAS,
                                                     EstimatorMode::FullBatch});
  CHECK(cfg.sbm.nodes_per_block == 7);
  CHECK(cfg.out_dir == "test_tmp/somewhere");
  CHECK_FALSE(cfg.seed.has_value());

  apply_override(cfg, "eta=0.5");
  CHECK(cfg.eta == 0.5);
  apply_override(cfg, "seed=12");
  CHECK(cfg.seed == 12);
  CHECK(contains(error_of([&] { apply_override(cfg, "eta"); }),
                 "override must look like key=value: eta"));
}

TEST_CASE("bad config lines point at the file and line") {
  std::string bogus = write_tmp("bogus.cfg", "clusters = 4\nbogus = 3\n");
  CHECK(contains(error_of([&] { parse_config_file(bogus); }),
                 "test_tmp/bogus.cfg:2: unknown config key 'bogus'"));

  std::string num = write_tmp("badnum.cfg", "eta = abc\n");
  CHECK(contains(error_of([&] { parse_config_file(num); }),
                 "test_tmp/badnum.cfg:1: config key 'eta': bad numeric value 'abc'"));

  std::string eq = write_tmp("badline.cfg", "just words\n");
  CHECK(contains(error_of([&] { parse_config_file(eq); }),
                 "test_tmp/badline.cfg:1: expected 'key = value'"));

  CHECK(contains(error_of([&] { parse_config_file("test_tmp/missing.cfg"); }),
                 "cannot open"));
}

TEST_CASE("validation rejects inconsistent settings") {
  RunConfig ok = small_cfg("unused");
  validate(ok, true);

  RunConfig c = ok;
  c.edges = "edges.txt";
  CHECK(contains(error_of([&] { validate(c, false); }),
                 "edges, features and labels must be given together"));

  c = ok;
  c.hidden.clear();
  CHECK(contains(error_of([&] { validate(c, false); }), "empty hidden layer list"));

  c = ok;
  c.clusters = 0;
  CHECK(contains(error_of([&] { validate(c, false); }), "clusters must be positive"));

  c = ok;
  c.batch_clusters = 5;  // clusters defaults to 4
  CHECK(contains(error_of([&] { validate(c, false); }),
                 "batch_clusters must be in [1, clusters]"));

  c = ok;
  c.eta = 0.0;
  validate(c, false);  // measurement commands may freeze the parameters
  CHECK(contains(error_of([&] { validate(c, true); }), "eta must be positive"));

  c = ok;
  c.measure_every = 0;
  CHECK(contains(error_of([&] { validate(c, false); }),
                 "measure_every must be positive"));

  c = ok;
  c.alpha = 1.5;
  CHECK(contains(error_of([&] { validate(c, false); }), "alpha must be in [0, 1]"));

  c = ok;
  c.grad_modes.clear();
  CHECK(contains(error_of([&] { validate(c, false); }),
                 "grad_modes must list at least one mode"));

  c = ok;
  c.seed.reset();
  validate(c, false);
  CHECK(contains(error_of([&] { validate(c, true); }), "a seed is required"));
}

TEST_CASE("echoed settings are sorted and resolved") {
  RunConfig cfg;  // defaults: clusters 4, batch_clusters 1, eval_every 0
  cfg.seed = 5;
  std::vector<std::string> lines = cfg.echo();
  CHECK(std::is_sorted(lines.begin(), lines.end()));

  auto has = [&](const std::string& want) {
    return std::find(lines.begin(), lines.end(), want) != lines.end();
  };
  CHECK(has("alpha = 0.4"));
  CHECK(has("score = 2x-x^2"));
  CHECK(has("eval_every = 4"));
  CHECK(has("mode = LMC"));
  CHECK(has("warm_start = 0"));
  CHECK(has("seed = 5"));
  CHECK(has("hidden = 16"));
  CHECK(has("grad_modes = LMC"));

  cfg.batch_clusters = 2;  // now c >= B/2, different schedule defaults
  cfg.eval_every = 7;
  lines = cfg.echo();
  auto has2 = [&](const std::string& want) {
    return std::find(lines.begin(), lines.end(), want) != lines.end();
  };
  CHECK(has2("alpha = 1"));
  CHECK(has2("score = 1"));
  CHECK(has2("eval_every = 7"));
}

TEST_CASE("eval cadence defaults to one epoch") {
  RunConfig cfg;
  cfg.clusters = 5;
  cfg.batch_clusters = 2;
  CHECK(cfg.resolved_eval_every() == 3);  // ceil(5 / 2)
  cfg.eval_every = 2;
  CHECK(cfg.resolved_eval_every() == 2);
}

TEST_CASE("explicit schedule settings override the defaults") {
  RunConfig cfg;
  cfg.clusters = 4;
  cfg.batch_clusters = 2;
  CHECK(cfg.schedule().alpha == 1.0);
  CHECK(cfg.schedule().score == BetaScore::One);
  cfg.alpha = 0.2;
  CHECK(cfg.schedule().alpha == 0.2);
  CHECK(cfg.schedule().score == BetaScore::One);
  cfg.score = BetaScore::X;
  CHECK(cfg.schedule().score == BetaScore::X);
}

TEST_CASE("unlabeled nodes alternate between validation and test") {
  Matrix feats(1, 6);
  for (std::size_t i = 0; i < 6; ++i) feats(0, i) = 1.0 + static_cast<double>(i);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (NodeId i = 0; i + 1 < 6; ++i) edges.emplace_back(i, i + 1);
  Graph g = build_graph(6, edges, std::move(feats), {0, 1, 0, 1, 0, 1},
                        {1, 0, 0, 1, 0, 0});
  save_graph(g, "test_tmp/sp_edges.txt", "test_tmp/sp_feat.csv",
             "test_tmp/sp_label.csv");

  RunConfig cfg;
  cfg.edges = "test_tmp/sp_edges.txt";
  cfg.features = "test_tmp/sp_feat.csv";
  cfg.labels = "test_tmp/sp_label.csv";
  cfg.clusters = 2;
  RunSetup s = prepare_run(cfg);
  CHECK(s.val_nodes == std::vector<NodeId>{1, 4});
  CHECK(s.test_nodes == std::vector<NodeId>{2, 5});
  CHECK(s.part.num_clusters == 2);
}

TEST_CASE("a stored partition must match the graph and the config") {
  RunConfig cfg = small_cfg("part_mismatch");
  Graph g = generate_sbm(cfg.sbm);

  Partition wrong_n = partition_from_assignment({0, 1, 0, 1, 0}, 2);
  save_partition(wrong_n, "test_tmp/wrong_n.txt");
  cfg.partition_file = "test_tmp/wrong_n.txt";
  cfg.clusters = 2;
  CHECK(contains(error_of([&] { prepare_run(cfg); }),
                 "partition covers 5 nodes, graph has 12"));

  Partition p = partition_bfs(g, 3, 0);
  save_partition(p, "test_tmp/wrong_b.txt");
  cfg.partition_file = "test_tmp/wrong_b.txt";
  cfg.clusters = 4;
  CHECK(contains(error_of([&] { prepare_run(cfg); }),
                 "has 3 clusters, config says 4"));

  cfg.clusters = 3;
  RunSetup s = prepare_run(cfg);
  CHECK(content_hash(s.part) == content_hash(p));
}

TEST_CASE("manifests record the run shape and content hashes") {
  RunConfig cfg = small_cfg("manifest");
  fs::create_directories(cfg.out_dir);
  RunSetup s = prepare_run(cfg);
  write_manifest(cfg, "train", s, cfg.out_dir + "/manifest.txt");

  std::vector<std::string> lines = lines_of(slurp(cfg.out_dir + "/manifest.txt"));
  REQUIRE(!lines.empty());
  CHECK(lines.front() == "command = train");
  CHECK(std::count(lines.begin(), lines.end(), "mode = LMC") == 1);
  CHECK(std::count(lines.begin(), lines.end(), "sbm_seed = 5") == 1);
  CHECK(std::count(lines.begin(), lines.end(), "seed = 17") == 1);

  std::string expect_g = "graph_fnv1a64 = " + hash_hex(content_hash(s.graph));
  std::string expect_p = "partition_fnv1a64 = " + hash_hex(content_hash(s.part));
  CHECK(std::count(lines.begin(), lines.end(), expect_g) == 1);
  CHECK(std::count(lines.begin(), lines.end(), expect_p) == 1);
}

TEST_CASE("generated datasets are reproducible and reloadable") {
  RunConfig a = small_cfg("gen_a");
  RunConfig b = small_cfg("gen_b");
  {
    CaptureStream out(std::cout);
    CHECK(run_gen_data(a) == 0);
    CHECK(run_gen_data(b) == 0);
    CHECK(contains(out.text(), "nodes 12"));
  }
  for (const char* name : {"edges.txt", "features.csv", "labels.csv"})
    CHECK(slurp(a.out_dir + "/" + name) == slurp(b.out_dir + "/" + name));

  Graph loaded = load_graph(a.out_dir + "/edges.txt", a.out_dir + "/features.csv",
                            a.out_dir + "/labels.csv");
  CHECK(content_hash(loaded) == content_hash(generate_sbm(a.sbm)));

  RunConfig bad = small_cfg("gen_bad");
  bad.edges = "x";
  bad.features = "y";
  bad.labels = "z";
  CHECK(contains(error_of([&] { run_gen_data(bad); }),
                 "gen-data writes a synthetic dataset"));
}

TEST_CASE("the partition command writes a loadable balanced split") {
  RunConfig cfg = small_cfg("part_cmd");
  cfg.clusters = 4;
  {
    CaptureStream out(std::cout);
    CHECK(run_partition_cmd(cfg) == 0);
    CHECK(contains(out.text(), "clusters 4, sizes 3 3 3 3"));
  }
  Partition p = load_partition(cfg.out_dir + "/partition.txt");
  CHECK(p.num_clusters == 4);
  CHECK(p.assignment.size() == 12);
  for (const auto& c : p.clusters) CHECK(c.size() == 3);
}

TEST_CASE("training runs emit the metrics schema and a checkpoint") {
  RunConfig cfg = small_cfg("train_run");
  cfg.mode = EstimatorMode::FullBatch;
  cfg.clusters = 2;
  cfg.batch_clusters = 1;
  cfg.eta = 0.2;
  cfg.iterations = 4;
  cfg.eval_every = 2;
  {
    CaptureStream out(std::cout);
    CHECK(run_train(cfg) == 0);
    CHECK(contains(out.text(), "ran 4 iterations of FullBatch"));
  }

  std::vector<std::string> rows = lines_of(slurp(cfg.out_dir + "/metrics.csv"));
  REQUIRE(rows.size() == 3);  // header + iterations 2 and 4
  CHECK(rows[0] ==
        "iteration,epoch,train_loss,full_batch_loss,train_acc,val_acc,test_acc,"
        "rel_err_mean,rel_err_theta1,rel_err_theta2,rel_err_w,nodes_touched,"
        "wall_time_ms");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    auto cells = split(rows[r], ',');
    REQUIRE(cells.size() == 13);
    // the exact estimator applies the same gradient the report compares against
    CHECK(cells[2] == cells[3]);   // batch loss equals the full loss
    CHECK(cells[7] == "0");        // rel_err_mean
    CHECK(cells[8] == "0");
    CHECK(cells[9] == "0");
    CHECK(cells[10] == "0");
    CHECK(cells[11] == "12");      // every node is read
  }
  CHECK(split(rows[1], ',')[0] == "2");
  CHECK(split(rows[2], ',')[0] == "4");
  CHECK(split(rows[1], ',')[1] == "1");  // 2 steps of 2 clusters = 1 epoch

  CHECK(fs::exists(cfg.out_dir + "/manifest.txt"));
  CHECK(fs::exists(cfg.out_dir + "/partition.txt"));
  ModelParams ck = load_checkpoint(cfg.out_dir + "/params.ckpt");
  CHECK(ck.dims() == std::vector<std::size_t>{3, 4, 3});

  // byte-identical rerun apart from the wall-clock column
  RunConfig again = cfg;
  again.out_dir = "test_tmp/train_run2";
  {
    CaptureStream out(std::cout);
    CHECK(run_train(again) == 0);
  }
  std::vector<std::string> rows2 = lines_of(slurp(again.out_dir + "/metrics.csv"));
  REQUIRE(rows2.size() == rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    CHECK(drop_last_column(rows[r]) == drop_last_column(rows2[r]));
  CHECK(slurp(cfg.out_dir + "/params.ckpt") == slurp(again.out_dir + "/params.ckpt"));
}

TEST_CASE("zero-iteration runs leave the header and the initial parameters") {
  RunConfig cfg = small_cfg("train_zero");
  cfg.iterations = 0;
  {
    CaptureStream out(std::cout);
    CHECK(run_train(cfg) == 0);
  }
  std::vector<std::string> rows = lines_of(slurp(cfg.out_dir + "/metrics.csv"));
  REQUIRE(rows.size() == 1);

  Graph g = generate_sbm(cfg.sbm);
  ModelParams expect = init_glorot({3, 4, 3}, g.num_classes, *cfg.seed);
  ModelParams got = load_checkpoint(cfg.out_dir + "/params.ckpt");
  REQUIRE(got.theta.size() == expect.theta.size());
  for (std::size_t l = 0; l < got.theta.size(); ++l)
    CHECK(bitwise_equal(got.theta[l], expect.theta[l]));
  CHECK(bitwise_equal(got.w_out, expect.w_out));
}

TEST_CASE("a single full-width batch trains exactly like the full-batch mode") {
  RunConfig lmc = small_cfg("traj_lmc");
  lmc.mode = EstimatorMode::LMC;
  lmc.clusters = 1;
  lmc.batch_clusters = 1;
  lmc.eta = 0.3;
  lmc.iterations = 12;
  lmc.eval_every = 3;

  RunConfig fb = lmc;
  fb.mode = EstimatorMode::FullBatch;
  fb.out_dir = "test_tmp/traj_fb";

  {
    CaptureStream out(std::cout);
    CHECK(run_train(lmc) == 0);
    CHECK(run_train(fb) == 0);
  }
  std::vector<std::string> a = lines_of(slurp(lmc.out_dir + "/metrics.csv"));
  std::vector<std::string> b = lines_of(slurp(fb.out_dir + "/metrics.csv"));
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == 5);  // header + 4 measured rows
  for (std::size_t r = 0; r < a.size(); ++r)
    CHECK(drop_last_column(a[r]) == drop_last_column(b[r]));
  CHECK(slurp(lmc.out_dir + "/params.ckpt") == slurp(fb.out_dir + "/params.ckpt"));
}

TEST_CASE("gradient error runs measure every mode on a shared batch") {
  RunConfig cfg = small_cfg("ge_run");
  cfg.grad_modes = {EstimatorMode::LMC, EstimatorMode::GAS, EstimatorMode::Cluster};
  cfg.clusters = 4;
  cfg.batch_clusters = 1;
  cfg.eta = 0.05;
  cfg.iterations = 4;
  cfg.measure_every = 2;
  cfg.warm_start = true;
  {
    CaptureStream out(std::cout);
    CHECK(run_grad_error(cfg) == 0);
    CHECK(contains(out.text(), "measured 2 of 4 iterations"));
  }

  std::vector<std::string> rows = lines_of(slurp(cfg.out_dir + "/metrics.csv"));
  REQUIRE(rows.size() == 10);  // header + 2 sweeps x 3 modes + 3 summaries
  CHECK(rows[0] ==
        "iteration,mode,rel_err_mean,rel_err_theta1,rel_err_theta2,rel_err_w");

  const char* want_mode[] = {"LMC", "GAS", "Cluster"};
  for (std::size_t r = 1; r <= 6; ++r) {
    auto cells = split(rows[r], ',');
    REQUIRE(cells.size() == 6);
    CHECK(cells[0] == (r <= 3 ? "2" : "4"));
    CHECK(cells[1] == want_mode[(r - 1) % 3]);
  }
  for (std::size_t m = 0; m < 3; ++m) {
    auto cells = split(rows[7 + m], ',');
    CHECK(cells[0] == "summary");
    CHECK(cells[1] == want_mode[m]);
    // the summary row holds the mean of this mode's measured rows
    for (std::size_t col = 2; col < 6; ++col) {
      double first, second, mean;
      REQUIRE(try_parse_double(split(rows[1 + m], ',')[col], first));
      REQUIRE(try_parse_double(split(rows[4 + m], ',')[col], second));
      REQUIRE(try_parse_double(cells[col], mean));
      CHECK(mean == (first + second) * 0.5);
    }
  }
  CHECK(fs::exists(cfg.out_dir + "/params.ckpt"));
}

TEST_CASE("divergence aborts with partial metrics and no checkpoint") {
  // connected twins with equal features but opposite labels cannot reach a
  // zero-gradient fit, so a huge step rate must blow up
  Matrix feats(1, 2);
  feats(0, 0) = feats(0, 1) = 1e150;
  Graph g = build_graph(2, {{0, 1}}, std::move(feats), {0, 1}, {1, 1});
  save_graph(g, "test_tmp/twin_edges.txt", "test_tmp/twin_feat.csv",
             "test_tmp/twin_label.csv");

  RunConfig cfg;
  cfg.edges = "test_tmp/twin_edges.txt";
  cfg.features = "test_tmp/twin_feat.csv";
  cfg.labels = "test_tmp/twin_label.csv";
  cfg.hidden = {2};
  cfg.mode = EstimatorMode::FullBatch;
  cfg.clusters = 1;
  cfg.batch_clusters = 1;
  cfg.eta = 1e8;
  cfg.iterations = 10;
  cfg.eval_every = 1;
  cfg.seed = 1;
  cfg.out_dir = "test_tmp/diverge_train";

  {
    CaptureStream out(std::cout);
    CaptureStream err(std::cerr);
    CHECK(run_train(cfg) == 1);
    CHECK(contains(err.text(), "diverged: non-finite loss at iteration"));
    CHECK(contains(err.text(), "partial metrics retained"));
  }
  CHECK(lines_of(slurp(cfg.out_dir + "/metrics.csv")).size() >= 2);
  CHECK_FALSE(fs::exists(cfg.out_dir + "/params.ckpt"));

  cfg.grad_modes = {EstimatorMode::FullBatch};
  cfg.measure_every = 1;
  cfg.out_dir = "test_tmp/diverge_ge";
  {
    CaptureStream out(std::cout);
    CaptureStream err(std::cerr);
    CHECK(run_grad_error(cfg) == 1);
    CHECK(contains(err.text(), "diverged"));
  }
  CHECK_FALSE(fs::exists(cfg.out_dir + "/params.ckpt"));
}
