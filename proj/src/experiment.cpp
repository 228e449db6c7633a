#include "mghl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>

#include "mghl/checkpoint.hpp"
#include "mghl/curves.hpp"

namespace mghl {

namespace fs = std::filesystem;

std::unique_ptr<HrlAgent> make_agent(const RunConfig& cfg, std::uint64_t init_seed) {
  return std::make_unique<HrlAgent>(cfg.agent, Shape{kObsChannels, cfg.env.size, cfg.env.size}, kNumActions,
                                    init_seed);
}

namespace {

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

SeedSummary run_seed(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir) {
  cfg.validate();
  fs::create_directories(dir / "checkpoints");
  RunConfig snapshot = cfg;
  snapshot.seeds = {seed};
  snapshot.out_dir = dir;
  save_run_config(dir / "config.ini", snapshot);

  TrainerConfig tc = cfg.trainer;
  tc.seed = seed;

  auto metrics = open_out(dir / "metrics.csv");
  auto episodes = open_out(dir / "episodes.csv");
  write_metrics_header(metrics);
  write_episodes_header(episodes);

  TrainHooks hooks;
  hooks.on_row = [&](const MetricsRow& r) { write_metrics_row(metrics, r); };
  hooks.on_episode = [&](const EpisodeRecord& e) { write_episode_row(episodes, e); };
  hooks.checkpoint_interval = cfg.checkpoint_interval;
  hooks.on_checkpoint = [&](std::uint64_t step, const ParamSet& params) {
    save_checkpoint(params, dir / "checkpoints" / ("step_" + std::to_string(step) + ".mghl"));
  };

  const EnvConfig env_cfg = cfg.env;
  TrainResult result = train(
      tc, [&](std::uint64_t s) { return make_agent(cfg, s); }, [&](std::size_t) { return make_env(env_cfg); }, hooks);
  metrics.close();
  episodes.close();
  save_checkpoint(result.params, dir / "checkpoints" / "final.mghl");

  {
    auto svg = open_out(dir / "curve.svg");
    const auto series = episode_curves(result.episodes, 20);
    write_svg(svg, "seed " + std::to_string(seed) + " (" + format_kind_list(cfg.agent.active_subgoals) + ")",
              "environment steps", "return (20-episode mean)", series);
  }

  SeedSummary s;
  s.seed = seed;
  s.dir = dir;
  s.steps_to_threshold = result.steps_to_threshold;
  s.steps = result.steps;
  s.episodes = result.episodes.size();
  s.best_median_return = result.best_median_return;
  const std::size_t n = std::min(result.episodes.size(), cfg.trainer.threshold_window);
  for (std::size_t i = result.episodes.size() - n; i < result.episodes.size(); ++i) {
    s.final_return += result.episodes[i].ext_return_scaled / static_cast<double>(n);
  }
  s.episode_log = std::move(result.episodes);
  return s;
}

std::vector<SeedSummary> run_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  std::vector<SeedSummary> out;
  for (std::uint64_t seed : cfg.seeds) {
    log << "seed " << seed << ": training " << cfg.trainer.total_steps << " steps\n" << std::flush;
    out.push_back(run_seed(cfg, seed, cfg.out_dir / ("seed_" + std::to_string(seed))));
    const auto& s = out.back();
    log << "seed " << seed << ": " << s.episodes << " episodes, final return " << format_real(s.final_return)
        << ", steps to threshold "
        << (s.steps_to_threshold ? std::to_string(*s.steps_to_threshold) : std::string("not reached")) << '\n';
  }
  return out;
}

std::vector<AblationSetting> ablation_settings(bool robustness) {
  using K = SubgoalKind;
  std::vector<AblationSetting> s = {
      {"pc", {K::kPixel}},
      {"pc_fc", {K::kPixel, K::kFeature}},
      {"pc_fc_dc", {K::kPixel, K::kFeature, K::kDirection}},
  };
  if (robustness) s.push_back({"pc_fc_dc_rand", {K::kPixel, K::kFeature, K::kDirection, K::kRandom}});
  return s;
}

std::optional<double> median_steps(const std::vector<std::optional<std::uint64_t>>& steps) {
  if (steps.empty()) return std::nullopt;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> v;
  for (const auto& s : steps) v.push_back(s ? static_cast<double>(*s) : inf);
  const double m = median_of(v);
  if (std::isinf(m)) return std::nullopt;
  return m;
}

void write_summary_csv(std::ostream& out, const std::vector<SettingSummary>& summary) {
  out << "setting,subgoals,seeds,reached,median_steps_to_threshold,median_final_return\n";
  for (const auto& s : summary) {
    out << s.setting.name << ',' << format_kind_list(s.setting.subgoals) << ',' << s.seeds.size() << ',' << s.reached
        << ',' << (s.median_steps_to_threshold ? format_real(*s.median_steps_to_threshold) : std::string())
        << ',' << format_real(s.median_final_return) << '\n';
  }
}

std::vector<SettingSummary> run_ablation(const RunConfig& cfg, bool robustness, std::ostream& log) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  save_run_config(cfg.out_dir / "config.ini", cfg);

  std::vector<SettingSummary> summary;
  std::vector<CurveSeries> combined;
  for (const auto& setting : ablation_settings(robustness)) {
    RunConfig rc = cfg;
    rc.agent.active_subgoals = setting.subgoals;
    rc.out_dir = cfg.out_dir / setting.name;
    log << "setting " << setting.name << '\n';
    SettingSummary ss;
    ss.setting = setting;
    ss.seeds = run_train(rc, log);

    std::vector<std::optional<std::uint64_t>> steps;
    std::vector<double> finals;
    for (const auto& s : ss.seeds) {
      steps.push_back(s.steps_to_threshold);
      finals.push_back(s.final_return);
      if (s.steps_to_threshold) ++ss.reached;
    }
    ss.median_steps_to_threshold = median_steps(steps);
    ss.median_final_return = median_of(finals);

    // Per-seed smoothed curves sampled on the metrics grid, median across seeds.
    CurveSeries curve{setting.name, {}, {}};
    std::vector<std::vector<double>> smoothed;
    for (const auto& s : ss.seeds) {
      std::vector<double> r;
      for (const auto& e : s.episode_log) r.push_back(e.ext_return_scaled);
      smoothed.push_back(trailing_mean(r, 20));
    }
    const std::uint64_t last =
        std::accumulate(ss.seeds.begin(), ss.seeds.end(), std::uint64_t{0},
                        [](std::uint64_t a, const SeedSummary& s) { return std::max(a, s.steps); });
    for (std::uint64_t x = cfg.trainer.metrics_interval; x <= last; x += cfg.trainer.metrics_interval) {
      std::vector<double> at;
      for (std::size_t i = 0; i < ss.seeds.size(); ++i) {
        const auto& eps = ss.seeds[i].episode_log;
        const auto it = std::upper_bound(eps.begin(), eps.end(), x,
                                         [](std::uint64_t v, const EpisodeRecord& e) { return v < e.global_step; });
        if (it == eps.begin()) continue;
        const auto idx = static_cast<std::size_t>(it - eps.begin()) - 1;
        // A seed that stopped early at the threshold holds its last value.
        at.push_back(smoothed[i][idx]);
      }
      if (at.empty()) continue;
      curve.x.push_back(static_cast<double>(x));
      curve.y.push_back(median_of(at));
    }
    combined.push_back(std::move(curve));
    summary.push_back(std::move(ss));
  }

  {
    auto svg = open_out(cfg.out_dir / "combined.svg");
    write_svg(svg, "subgoal ablation (median over seeds)", "environment steps", "return (20-episode mean)", combined);
  }
  auto csv = open_out(cfg.out_dir / "summary.csv");
  write_summary_csv(csv, summary);
  write_summary_csv(log, summary);
  return summary;
}

AgentPolicy::AgentPolicy(HrlAgent& agent, std::uint64_t seed) : agent_(agent), rng_(seed) {
  agent_.set_recording(false);
}

void AgentPolicy::begin_episode(const Tensor& obs) { agent_.begin_episode(obs); }

double AgentPolicy::step(GridEnv& env) { return agent_.step(env, rng_, ActMode::kGreedy).ext_raw; }

double ScriptedKeyDoorPolicy::step(GridEnv& env) {
  auto* kd = dynamic_cast<KeyDoorEnv*>(&env);
  if (!kd) throw std::invalid_argument("scripted policy needs a keydoor environment");
  return env.step(scripted_keydoor_action(*kd)).raw_ext_reward;
}

double EvalReport::mean_return() const {
  return returns.empty() ? 0.0 : std::accumulate(returns.begin(), returns.end(), 0.0) / returns.size();
}

double EvalReport::median_return() const { return median_of(returns); }

double EvalReport::mean_length() const {
  return lengths.empty() ? 0.0
                         : static_cast<double>(std::accumulate(lengths.begin(), lengths.end(), std::size_t{0})) /
                               lengths.size();
}

double EvalReport::success_rate() const {
  return returns.empty() ? 0.0 : static_cast<double>(successes) / returns.size();
}

EvalReport evaluate(EvalPolicy& policy, GridEnv& env, std::size_t episodes) {
  if (episodes < 1) throw std::invalid_argument("episodes must be ≥ 1");
  EvalReport report;
  for (std::size_t e = 0; e < episodes; ++e) {
    policy.begin_episode(env.reset());
    double raw = 0.0;
    while (!env.done()) raw += policy.step(env);
    report.returns.push_back(raw / kRewardScale);
    report.lengths.push_back(env.step_count());
    if (env.solved()) ++report.successes;
  }
  return report;
}

void load_agent_params(HrlAgent& agent, const ParamSet& params) {
  for (Network* net : agent.networks()) {
    for (auto& [name, value] : net->params()) {
      const auto it = params.find(name);
      if (it == params.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
      if (it->second.shape() != value.shape()) {
        throw ShapeError("tensor '" + name + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                         shape_str(value.shape()));
      }
      value = it->second;
    }
  }
}

EvalReport run_eval(const fs::path& checkpoint, std::size_t episodes, const std::optional<fs::path>& config) {
  if (episodes < 1) throw std::invalid_argument("episodes must be ≥ 1");
  fs::path cfg_path;
  if (config) {
    cfg_path = *config;
  } else {
    const fs::path here = fs::absolute(checkpoint).parent_path();
    for (const fs::path& d : {here, here.parent_path()}) {
      if (fs::exists(d / "config.ini")) {
        cfg_path = d / "config.ini";
        break;
      }
    }
    if (cfg_path.empty()) throw ConfigError("no config.ini found next to " + checkpoint.string() + "; pass --config");
  }
  const RunConfig cfg = load_run_config(cfg_path);
  const ParamSet params = load_checkpoint(checkpoint);
  auto agent = make_agent(cfg, 0);
  load_agent_params(*agent, params);
  auto env = make_env(cfg.env);
  AgentPolicy policy(*agent, cfg.seeds.front());
  return evaluate(policy, *env, episodes);
}

void print_report(std::ostream& out, const EvalReport& r) {
  out << "episodes " << r.returns.size() << '\n'
      << "mean_return " << format_real(r.mean_return()) << '\n'
      << "median_return " << format_real(r.median_return()) << '\n'
      << "success_rate " << format_real(r.success_rate()) << '\n'
      << "mean_length " << format_real(r.mean_length()) << '\n'
      << "lengths";
  for (auto l : r.lengths) out << ' ' << l;
  out << '\n';
}

}  // namespace mghl
