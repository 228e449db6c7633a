#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mghl/a3c_trainer.hpp"
#include "mghl/run_config.hpp"

namespace mghl {

std::unique_ptr<HrlAgent> make_agent(const RunConfig& cfg, std::uint64_t init_seed);

struct SeedSummary {
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  std::optional<std::uint64_t> steps_to_threshold;
  std::uint64_t steps = 0;
  std::size_t episodes = 0;
  /// Mean scaled return over the last threshold_window episodes.
  double final_return = 0.0;
  double best_median_return = 0.0;
  std::vector<EpisodeRecord> episode_log;
};

/// Trains one seed and writes into dir: config.ini, metrics.csv, episodes.csv,
/// checkpoints/step_<n>.mghl, checkpoints/final.mghl, curve.svg.
SeedSummary run_seed(const RunConfig& cfg, std::uint64_t seed, const std::filesystem::path& dir);

/// Runs every seed of cfg under cfg.out_dir/seed_<s>.
std::vector<SeedSummary> run_train(const RunConfig& cfg, std::ostream& log);

struct AblationSetting {
  std::string name;
  std::vector<SubgoalKind> subgoals;
};

std::vector<AblationSetting> ablation_settings(bool robustness);

struct SettingSummary {
  AblationSetting setting;
  std::vector<SeedSummary> seeds;
  /// Unreached seeds count as infinitely slow; unset when the median is unreached.
  std::optional<double> median_steps_to_threshold;
  double median_final_return = 0.0;
  std::size_t reached = 0;
};

/// Median with nullopt as +infinity. Unset when the median itself is unreached.
std::optional<double> median_steps(const std::vector<std::optional<std::uint64_t>>& steps);

/// Runs each setting x seed under cfg.out_dir/<setting>/seed_<s>; writes
/// combined.svg and summary.csv into cfg.out_dir.
std::vector<SettingSummary> run_ablation(const RunConfig& cfg, bool robustness, std::ostream& log);

void write_summary_csv(std::ostream& out, const std::vector<SettingSummary>& summary);

/// Something that can play an episode in an environment.
class EvalPolicy {
 public:
  virtual ~EvalPolicy() = default;
  virtual void begin_episode(const Tensor& obs) = 0;
  /// Takes one action in env and returns the raw extrinsic reward.
  virtual double step(GridEnv& env) = 0;
};

/// Greedy Worker actions with greedy subgoal choices.
class AgentPolicy : public EvalPolicy {
 public:
  explicit AgentPolicy(HrlAgent& agent, std::uint64_t seed = 0);
  void begin_episode(const Tensor& obs) override;
  double step(GridEnv& env) override;

 private:
  HrlAgent& agent_;
  Rng rng_;
};

class ScriptedKeyDoorPolicy : public EvalPolicy {
 public:
  void begin_episode(const Tensor&) override {}
  double step(GridEnv& env) override;
};

struct EvalReport {
  std::vector<double> returns;  // scaled
  std::vector<std::size_t> lengths;
  std::size_t successes = 0;

  double mean_return() const;
  double median_return() const;
  double mean_length() const;
  double success_rate() const;
};

EvalReport evaluate(EvalPolicy& policy, GridEnv& env, std::size_t episodes);

/// Finds config.ini next to the checkpoint (or one directory up) unless
/// config is given, rebuilds the agent, loads the weights and evaluates.
EvalReport run_eval(const std::filesystem::path& checkpoint, std::size_t episodes,
                    const std::optional<std::filesystem::path>& config = std::nullopt);

void load_agent_params(HrlAgent& agent, const ParamSet& params);

void print_report(std::ostream& out, const EvalReport& r);

}  // namespace mghl
