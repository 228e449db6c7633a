#include <doctest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "mghl/checkpoint.hpp"
#include "mghl/curves.hpp"
#include "mghl/experiment.hpp"
#include "test_support.hpp"

using namespace mghl;
using namespace mghl::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("mghl_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

bool well_formed_xml(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_xml(in, tree);
  } catch (const std::exception&) {
    return false;
  }
  return tree.count("svg") == 1;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

RunConfig tiny_run(const fs::path& out) {
  RunConfig cfg;
  cfg.agent.worker_hidden = 8;
  cfg.agent.manager_hidden = 8;
  cfg.agent.bptt_worker = 20;
  cfg.agent.bptt_manager = 5;
  cfg.trainer.num_actors = 1;
  cfg.trainer.total_steps = 900;
  cfg.trainer.metrics_interval = 300;
  cfg.checkpoint_interval = 450;
  cfg.out_dir = out;
  return cfg;
}

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_run_config(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("config parsing") {
  const RunConfig cfg = parse(
      "[env]\nname = collect\npellets = 12\n"
      "[agent]\nsubgoals = pc,dc\nbptt_worker = 50\n"
      "[weights]\nalpha = 0.5\n"
      "[trainer]\nactors = 2\nlearning_rate = 0.002\nrecord_wallclock = false\n"
      "[run]\nseeds = 4,5\nout = somewhere\n");
  CHECK(cfg.env.name == "collect");
  CHECK(cfg.env.pellets == 12);
  CHECK(cfg.agent.active_subgoals == std::vector<SubgoalKind>{SubgoalKind::kPixel, SubgoalKind::kDirection});
  CHECK(cfg.agent.bptt_worker == 50);
  CHECK(cfg.agent.bptt_manager == 20);
  CHECK(cfg.agent.weights.alpha == 0.5);
  CHECK(cfg.trainer.num_actors == 2);
  CHECK(cfg.trainer.learning_rate == 0.002);
  CHECK(cfg.trainer.record_wallclock == std::optional<bool>(false));
  CHECK(cfg.seeds == std::vector<std::uint64_t>{4, 5});
  CHECK(cfg.out_dir == fs::path("somewhere"));

  const RunConfig defaults = parse("");
  CHECK(defaults.trainer.learning_rate == 7e-4);
  CHECK(defaults.agent.weights.eta == 0.05);
  CHECK_FALSE(defaults.trainer.record_wallclock.has_value());
}

TEST_CASE("config errors name the field") {
  CHECK(error_of("[weights]\nalpha = 1.5\n") == "weights.alpha out of range");
  CHECK(error_of("[weights]\nalpha = high\n").rfind("weights.alpha", 0) == 0);
  CHECK(error_of("[agent]\nsubgoals = pc,zz\n").rfind("agent.subgoals", 0) == 0);
  CHECK(error_of("[trainer]\nactors = 0\n").rfind("trainer.actors", 0) == 0);
  CHECK(error_of("[trainer]\nspeed = 3\n").rfind("trainer.speed", 0) == 0);
  CHECK(error_of("[extras]\nx = 1\n").rfind("extras", 0) == 0);
  CHECK(error_of("[env]\nname = maze\n").rfind("env.name", 0) == 0);
  CHECK(error_of("[run]\nseeds = 1,,2\n").rfind("run.seeds", 0) == 0);
  CHECK_FALSE(error_of("[env\n").empty());
}

TEST_CASE("config round trip") {
  RunConfig cfg = tiny_run("a/b");
  cfg.agent.weights.alpha = 0.1 + 0.2;
  cfg.trainer.learning_rate = 1.0 / 3.0;
  cfg.trainer.record_wallclock = true;
  cfg.seeds = {3, 1, 2};
  std::ostringstream first;
  write_run_config(first, cfg);
  const RunConfig back = parse(first.str());
  std::ostringstream second;
  write_run_config(second, back);
  CHECK(first.str() == second.str());
  CHECK(back.agent.weights.alpha == cfg.agent.weights.alpha);
  CHECK(back.trainer.learning_rate == cfg.trainer.learning_rate);
  CHECK(back.seeds == cfg.seeds);
}

TEST_CASE("seed lists") {
  CHECK(parse_seed_list("1,2,3") == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(parse_seed_list(" 7 ") == std::vector<std::uint64_t>{7});
  CHECK_THROWS(parse_seed_list(""));
  CHECK_THROWS(parse_seed_list("1,x"));
  CHECK_THROWS(parse_seed_list("-1"));
}

TEST_CASE("checkpoint encoding") {
  Rng rng(1);
  ParamSet params{{"worker/fc/w", random_tensor({4, 3}, rng)},
                  {"manager/pc/critic/b", Tensor::vector({-0.0, std::numeric_limits<double>::denorm_min(), 1e308})},
                  {"s", Tensor::scalar(0.1)}};
  const auto bytes = encode_checkpoint(params);
  REQUIRE(bytes.size() > 10);
  CHECK(std::memcmp(bytes.data(), "MGHL", 4) == 0);

  const ParamSet back = decode_checkpoint(bytes);
  REQUIRE(back.size() == params.size());
  for (const auto& [name, t] : params) {
    REQUIRE(back.contains(name));
    CHECK(back.at(name).shape() == t.shape());
    CHECK(std::memcmp(back.at(name).data().data(), t.data().data(), t.size() * sizeof(double)) == 0);
  }
  CHECK(encode_checkpoint(back) == bytes);

  SUBCASE("truncation") {
    for (std::size_t cut : {bytes.size() - 1, bytes.size() - 4, bytes.size() / 2, std::size_t{12}}) {
      CHECK_THROWS_AS(decode_checkpoint(std::span(bytes.data(), cut)), ChecksumError);
    }
  }
  SUBCASE("corruption") {
    auto bad = bytes;
    bad[bad.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(decode_checkpoint(bad), ChecksumError);
  }
  SUBCASE("version") {
    auto bad = bytes;
    bad[4] = static_cast<std::uint8_t>(kCheckpointVersion + 1);
    try {
      decode_checkpoint(bad);
      FAIL("expected a version error");
    } catch (const VersionMismatchError& e) {
      CHECK(e.found() == kCheckpointVersion + 1);
    }
  }
  SUBCASE("magic") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), CheckpointError);
  }
  SUBCASE("files") {
    TempDir dir("ckpt");
    save_checkpoint(params, dir.path / "a.mghl");
    CHECK(fs::exists(dir.path / "a.mghl"));
    CHECK_FALSE(fs::exists(dir.path / "a.mghl.tmp"));
    const ParamSet loaded = load_checkpoint(dir.path / "a.mghl");
    CHECK(encode_checkpoint(loaded) == bytes);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.mghl"), CheckpointError);
  }
}

TEST_CASE("agent weights survive a checkpoint") {
  const RunConfig cfg = tiny_run("unused");
  auto a = make_agent(cfg, 3);
  auto b = make_agent(cfg, 4);
  Rng rng(2);
  for (Network* n : a->networks()) randomize(*n, rng);
  ParamSet all;
  for (const Network* n : std::as_const(*a).networks()) all.insert(n->params().begin(), n->params().end());
  load_agent_params(*b, decode_checkpoint(encode_checkpoint(all)));
  for (std::size_t i = 0; i < a->networks().size(); ++i) CHECK(a->networks()[i]->params() == b->networks()[i]->params());
  ParamSet partial = all;
  partial.erase(partial.begin());
  CHECK_THROWS(load_agent_params(*b, partial));
}

TEST_CASE("svg output") {
  std::vector<CurveSeries> series = {{"ext <scaled>", {0, 10, 20}, {0.0, 1.0, 4.0}}, {"pc & fc", {0, 10}, {0.5, 0.25}}};
  std::ostringstream out;
  write_svg(out, "run \"1\"", "step", "return", series);
  const std::string svg = out.str();
  CHECK(well_formed_xml(svg));
  CHECK(count_of(svg, "<polyline") == 2);
  CHECK(svg.find("ext &lt;scaled&gt;") != std::string::npos);
  CHECK(svg.find("pc &amp; fc") != std::string::npos);

  std::ostringstream empty;
  write_svg(empty, "nothing", "x", "y", {});
  CHECK(well_formed_xml(empty.str()));
}

TEST_CASE("trailing mean and episode curves") {
  const std::vector<double> v = {1, 2, 3, 4};
  CHECK(trailing_mean(v, 2) == std::vector<double>{1, 1.5, 2.5, 3.5});
  CHECK(trailing_mean(v, 10) == std::vector<double>{1, 1.5, 2, 2.5});
  std::vector<EpisodeRecord> eps(3);
  for (std::size_t i = 0; i < 3; ++i) {
    eps[i].global_step = 100 * (i + 1);
    eps[i].ext_return_scaled = static_cast<double>(i);
    eps[i].int_returns[0] = 0.5;
  }
  const auto curves = episode_curves(eps, 2);
  REQUIRE(curves.size() == 2);
  CHECK(curves[0].x == std::vector<double>{100, 200, 300});
  CHECK(curves[0].y == std::vector<double>{0, 0.5, 1.5});
}

TEST_CASE("metrics csv round trip") {
  MetricsRow a;
  a.global_step = 1000;
  a.episode_index = 3;
  a.ext_return_raw = 100.0;
  a.ext_return_scaled = 1.0;
  a.int_return_pc = 0.1 + 0.2;
  a.policy_entropy = 1.6;
  MetricsRow b;
  b.global_step = 2000;
  b.episode_index = 3;
  std::ostringstream out;
  write_metrics_header(out);
  write_metrics_row(out, a);
  write_metrics_row(out, b);
  std::istringstream in(out.str());
  const auto rows = read_metrics_csv(in);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == a);
  CHECK(rows[1] == b);
  std::istringstream bad(std::string(kMetricsHeader) + "\n1,2,x\n");
  CHECK_THROWS_AS(read_metrics_csv(bad), std::runtime_error);
}

TEST_CASE("train writes its artifacts for every seed") {
  TempDir dir("train");
  RunConfig cfg = tiny_run(dir.path);
  cfg.seeds = {1, 2, 3};
  std::ostringstream log;
  const auto summaries = run_train(cfg, log);
  REQUIRE(summaries.size() == 3);
  for (std::uint64_t s : {1, 2, 3}) {
    const fs::path d = dir.path / ("seed_" + std::to_string(s));
    CHECK(fs::exists(d / "config.ini"));
    CHECK(fs::exists(d / "episodes.csv"));
    CHECK(fs::exists(d / "checkpoints" / "step_450.mghl"));
    CHECK(fs::exists(d / "checkpoints" / "final.mghl"));
    CHECK(well_formed_xml(slurp(d / "curve.svg")));

    std::ifstream in(d / "metrics.csv");
    const auto rows = read_metrics_csv(in);
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].global_step == 300 * (i + 1));
      if (i > 0) CHECK(rows[i].episode_index >= rows[i - 1].episode_index);
    }
    const RunConfig snap = load_run_config(d / "config.ini");
    CHECK(snap.seeds == std::vector<std::uint64_t>{s});
  }
  CHECK(slurp(dir.path / "seed_1" / "metrics.csv") != slurp(dir.path / "seed_2" / "metrics.csv"));

  SUBCASE("eval reads the run's config") {
    const EvalReport r = run_eval(dir.path / "seed_1" / "checkpoints" / "final.mghl", 2);
    CHECK(r.returns.size() == 2);
    CHECK(r.lengths.size() == 2);
    CHECK_THROWS_AS(run_eval(dir.path / "seed_1" / "checkpoints" / "final.mghl", 0), std::invalid_argument);
  }
}

TEST_CASE("ablation writes one series per setting") {
  TempDir dir("ablate");
  RunConfig cfg = tiny_run(dir.path);
  cfg.trainer.total_steps = 600;
  cfg.checkpoint_interval = 0;
  cfg.seeds = {1};
  std::ostringstream log;

  const auto plain = run_ablation(cfg, false, log);
  REQUIRE(plain.size() == 3);
  CHECK(plain[0].setting.subgoals.size() == 1);
  CHECK(plain[1].setting.subgoals.size() == 2);
  CHECK(plain[2].setting.subgoals.size() == 3);
  std::string svg = slurp(dir.path / "combined.svg");
  CHECK(well_formed_xml(svg));
  CHECK(count_of(svg, "<polyline") == 3);

  const auto robust = run_ablation(cfg, true, log);
  REQUIRE(robust.size() == 4);
  CHECK(robust[3].setting.subgoals.back() == SubgoalKind::kRandom);
  svg = slurp(dir.path / "combined.svg");
  CHECK(count_of(svg, "<polyline") == 4);

  std::istringstream summary(slurp(dir.path / "summary.csv"));
  std::string header;
  std::getline(summary, header);
  CHECK(header.find("median_steps_to_threshold") != std::string::npos);
  std::size_t lines = 0;
  for (std::string line; std::getline(summary, line);) lines += !line.empty();
  CHECK(lines == 4);
  for (const auto& s : robust) CHECK(fs::exists(dir.path / s.setting.name / "seed_1" / "metrics.csv"));
}

TEST_CASE("median steps to threshold") {
  using V = std::vector<std::optional<std::uint64_t>>;
  CHECK(median_steps(V{3, 1, 2}) == 2.0);
  CHECK(median_steps(V{4, 1, std::nullopt, 2}) == 3.0);
  CHECK(median_steps(V{1, std::nullopt, std::nullopt}) == std::nullopt);
  CHECK(median_steps(V{1, 5, std::nullopt, std::nullopt, 9}) == 9.0);
}

TEST_CASE("evaluation") {
  EnvConfig ec;
  auto env = make_env(ec);
  SUBCASE("scripted policy always succeeds") {
    ScriptedKeyDoorPolicy p;
    const EvalReport r = evaluate(p, *env, 5);
    CHECK(r.success_rate() == 1.0);
    CHECK(r.mean_return() == 4.0);
    CHECK(r.median_return() == 4.0);
    CHECK(r.mean_length() < 300.0);
  }
  SUBCASE("random-weights checkpoint almost never does") {
    TempDir dir("randeval");
    RunConfig cfg = tiny_run(dir.path);
    save_run_config(dir.path / "config.ini", cfg);
    auto agent = make_agent(cfg, 5);
    Rng rng(6);
    ParamSet all;
    for (Network* n : agent->networks()) {
      randomize(*n, rng, 0.3);
      all.insert(n->params().begin(), n->params().end());
    }
    save_checkpoint(all, dir.path / "random.mghl");
    const EvalReport r = run_eval(dir.path / "random.mghl", 100);
    CHECK(r.returns.size() == 100);
    CHECK(r.success_rate() <= 0.05);
  }
  SUBCASE("untrained agent never does") {
    auto agent = make_agent(tiny_run("unused"), 1);
    AgentPolicy p(*agent);
    const EvalReport r = evaluate(p, *env, 3);
    CHECK(r.success_rate() == 0.0);
    CHECK(r.mean_length() == 300.0);
    CHECK_THROWS_AS(evaluate(p, *env, 0), std::invalid_argument);
  }
}
