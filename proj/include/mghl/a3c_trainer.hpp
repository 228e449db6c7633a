#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mghl/grid_envs.hpp"
#include "mghl/hrl_agent.hpp"
#include "mghl/metrics.hpp"
#include "mghl/policy_nets.hpp"
#include "mghl/tensor.hpp"

namespace mghl {

/// R_t = r_t + gamma * R_{t+1}, seeded with the bootstrap value.
std::vector<double> nstep_returns(std::span<const double> rewards, double bootstrap, double gamma);

struct LossCoefficients {
  double value = 0.5;
  double entropy = 0.01;
};

struct LossTerms {
  Var total;
  double policy = 0.0;   // sum of -log pi(a) * A
  double value = 0.0;    // sum of (R - V)^2
  double entropy = 0.0;  // mean entropy per step
  std::vector<double> returns;
  std::vector<double> advantages;
};

/// Actor-critic loss of a recorded segment, built on the segment's tape:
/// sum_t [ -log pi(a_t) * A_t + c_v (R_t - V_t)^2 - beta H(pi_t) ] with A_t held
/// constant. Returns come from the segment's own reward stream.
LossTerms actor_critic_loss(RolloutSegment& segment, const LossCoefficients& coef);

/// Worker loss over mixed rewards. Throws if the segment is not the Worker's.
LossTerms worker_loss(RolloutSegment& segment, const WorkerNet& worker, const LossCoefficients& coef);

/// Goal-policy loss over scaled extrinsic rewards. Throws on owner mismatch.
LossTerms goal_actor_loss(RolloutSegment& segment, const GoalPolicy& policy, const LossCoefficients& coef);

/// Rescales grads in place so their global L2 norm is at most clip. Returns
/// the factor applied (1 when no clipping happened).
double clip_gradients(GradientMap& grads, double clip);

struct OptimizerConfig {
  double decay = 0.99;
  double epsilon = 1e-8;
};

/// Named parameters of every network plus shared RMSProp statistics. Reads and
/// updates are atomic per tensor; different tensors may be updated concurrently.
class SharedParamStore {
 public:
  explicit SharedParamStore(OptimizerConfig cfg = {});

  void add(const ParamSet& params);
  bool contains(const std::string& name) const { return slots_.contains(name); }
  std::size_t size() const { return slots_.size(); }

  /// Copies the current value of every tensor named in `into`.
  void snapshot(ParamSet& into) const;
  ParamSet values() const;
  void load(const ParamSet& params);

  /// Global-norm clip, then one RMSProp step per tensor. Tensors whose gradient
  /// is all zero are left untouched, statistics included. Returns the number of
  /// apply calls so far.
  std::uint64_t apply_gradients(GradientMap grads, double clip, double learning_rate);
  std::uint64_t updates() const { return updates_.load(); }

 private:
  struct Slot {
    Tensor value;
    Tensor square_avg;
    mutable std::mutex mu;
  };

  OptimizerConfig cfg_;
  std::map<std::string, std::unique_ptr<Slot>> slots_;
  std::atomic<std::uint64_t> updates_{0};
};

struct TrainerConfig {
  std::size_t num_actors = 8;
  double learning_rate = 7e-4;
  bool linear_decay = true;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double clip_norm = 40.0;
  double rms_decay = 0.99;
  double rms_epsilon = 1e-8;
  std::uint64_t total_steps = 2'000'000;
  std::uint64_t seed = 1;
  std::uint64_t metrics_interval = 1000;
  /// Unset: recorded only with several actors, so single-actor metrics stay
  /// reproducible byte for byte.
  std::optional<bool> record_wallclock;
  bool wallclock_enabled() const { return record_wallclock.value_or(num_actors > 1); }
  bool stop_at_threshold = false;
  double threshold = 3.9;
  std::size_t threshold_window = 20;

  void validate() const;
};

using AgentFactory = std::function<std::unique_ptr<HrlAgent>(std::uint64_t init_seed)>;
using EnvFactory = std::function<std::unique_ptr<GridEnv>(std::size_t actor)>;

struct TrainHooks {
  std::function<void(const MetricsRow&)> on_row;
  std::function<void(const EpisodeRecord&)> on_episode;
  std::uint64_t checkpoint_interval = 0;
  std::function<void(std::uint64_t step, const ParamSet&)> on_checkpoint;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  std::vector<EpisodeRecord> episodes;
  std::optional<std::uint64_t> steps_to_threshold;
  std::uint64_t steps = 0;
  std::uint64_t updates = 0;
  /// Best trailing-window median of scaled extrinsic episode return.
  double best_median_return = 0.0;
  ParamSet params;
};

/// Trailing-window median of scaled extrinsic returns ending at episode `end`.
double trailing_median(std::span<const EpisodeRecord> episodes, std::size_t end, std::size_t window);

/// Runs num_actors actor-learner threads against one shared store until
/// total_steps environment steps (or the threshold, when stop_at_threshold).
/// With one actor the run is bitwise reproducible for a given seed.
TrainResult train(const TrainerConfig& cfg, const AgentFactory& make_agent, const EnvFactory& make_env,
                  const TrainHooks& hooks = {});

}  // namespace mghl
