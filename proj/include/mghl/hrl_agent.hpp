#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mghl/grid_envs.hpp"
#include "mghl/policy_nets.hpp"
#include "mghl/subgoal_rewards.hpp"

namespace mghl {

struct AgentConfig {
  std::vector<SubgoalKind> active_subgoals = {SubgoalKind::kPixel, SubgoalKind::kFeature, SubgoalKind::kDirection};
  std::size_t subgoal_refresh_interval = 1;
  RewardWeights weights;
  std::size_t bptt_manager = 20;
  std::size_t bptt_worker = 100;
  double gamma = 0.99;
  std::size_t worker_hidden = 64;
  std::size_t manager_hidden = 64;
  std::string encoder = "desk";  // desk | atari
  std::size_t block_size = 4;

  void validate() const;
  bool has(SubgoalKind kind) const;
};

/// Sizes and offsets of each active subgoal type inside the Worker's one-hot
/// block. Types always appear in the order pc, dc, fc, rand.
struct SubgoalLayout {
  std::vector<SubgoalKind> kinds;
  std::array<std::size_t, 4> sizes{};
  std::array<std::size_t, 4> offsets{};
  std::size_t width = 0;

  static SubgoalLayout make(std::span<const SubgoalKind> active, std::size_t pixel_blocks, std::size_t feature_channels,
                            std::size_t num_actions);
  bool has(SubgoalKind kind) const;
  std::size_t size_of(SubgoalKind kind) const { return sizes[static_cast<std::size_t>(kind)]; }
};

Tensor encode_subgoals(std::span<const Subgoal> subgoals, const SubgoalLayout& layout);

enum class ActMode { kSample, kGreedy };

std::size_t sample_categorical(std::span<const double> probs, Rng& rng);
std::size_t argmax(std::span<const double> values);
std::size_t choose(std::span<const double> probs, Rng& rng, ActMode mode);

struct ActResult {
  std::size_t action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  WorkerOutput output;
};

ActResult act(const WorkerNet& worker, Tape& tape, const Tensor& obs, const Tensor& subgoal_onehots, LstmVars state,
              Rng& rng, ActMode mode);

/// Per-subgoal-type intrinsic reward of one step; unset for inactive types.
using IntrinsicComponents = std::array<std::optional<double>, 4>;

struct Transition {
  Tensor obs;
  Tensor next_obs;
  std::size_t action = 0;
  std::vector<Subgoal> subgoals;
  IntrinsicComponents intrinsic;
  double intrinsic_total = 0.0;
  double ext_raw = 0.0;
  double ext_scaled = 0.0;
  double mixed = 0.0;
  bool done = false;
};

/// One decision of a policy recorded on its segment tape.
struct PolicyStep {
  Var logits;
  Var value;
  std::size_t action = 0;
  double reward = 0.0;
};

/// BPTT slice for one network. rewards are mixed for the Worker and scaled
/// extrinsic for goal-policies.
struct RolloutSegment {
  std::string owner;
  std::unique_ptr<Tape> tape;
  std::vector<PolicyStep> steps;
  double bootstrap = 0.0;
  double gamma = 0.99;
  LstmState initial_state;

  std::vector<double> rewards() const;
};

class HrlAgent {
 public:
  HrlAgent(AgentConfig cfg, const Shape& obs_shape, std::size_t num_actions, std::uint64_t init_seed = 0);

  const AgentConfig& config() const { return cfg_; }
  const SubgoalLayout& layout() const { return layout_; }
  const std::vector<PixelBlockMask>& blocks() const { return blocks_; }

  WorkerNet& worker() { return worker_; }
  const WorkerNet& worker() const { return worker_; }
  std::vector<GoalPolicy>& goal_policies() { return goal_policies_; }
  const GoalPolicy* goal_policy(SubgoalKind kind) const;
  std::vector<Network*> networks();
  std::vector<const Network*> networks() const;

  /// When false, no segments are recorded (evaluation).
  void set_recording(bool on) { recording_ = on; }

  void begin_episode(const Tensor& obs);
  /// Samples (or picks greedily) one subgoal per active type and makes them current.
  std::vector<Subgoal> select_subgoals(Rng& rng, ActMode mode);
  const std::vector<Subgoal>& current_subgoals() const { return subgoals_; }
  ManagerObservation manager_observation() const;

  /// Runs one environment tick: subgoal refresh when due, Worker action,
  /// intrinsic rewards, mixed reward.
  Transition step(GridEnv& env, Rng& rng, ActMode mode = ActMode::kSample);

  bool worker_segment_ready() const;
  RolloutSegment take_worker_segment();
  bool manager_segments_ready() const;
  std::vector<RolloutSegment> take_manager_segments();

  bool episode_done() const { return done_; }
  std::size_t episode_steps() const { return episode_steps_; }

  /// Last-conv feature maps of the observation the Worker acted from, captured
  /// at the most recent step (empty before the first step).
  const Tensor& last_worker_features() const { return last_features_; }

 private:
  struct Track {
    std::unique_ptr<Tape> tape;
    LstmVars vars;
    LstmState state;
    LstmState initial;
    std::vector<PolicyStep> steps;
  };

  void open_track(Track& track);
  void reset_track(Track& track, std::size_t hidden);
  RolloutSegment close_track(Track& track, const std::string& owner, double bootstrap, double gamma);
  IntrinsicComponents intrinsic_rewards(const Tensor& obs, const Tensor& next_obs, std::size_t action,
                                        const Tensor& features, const Tensor& next_features) const;

  AgentConfig cfg_;
  std::size_t num_actions_;
  std::vector<PixelBlockMask> blocks_;
  SubgoalLayout layout_;
  WorkerNet worker_;
  std::vector<GoalPolicy> goal_policies_;
  ActionSet actions_;

  bool recording_ = true;
  Track worker_track_;
  std::vector<Track> manager_tracks_;
  std::vector<Subgoal> subgoals_;
  std::vector<double> decision_discount_;

  Tensor obs_;
  Tensor last_features_;
  double prev_ext_ = 0.0;
  Tensor prev_action_;
  std::size_t episode_steps_ = 0;
  std::size_t manager_window_ = 0;
  bool done_ = false;
};

}  // namespace mghl
