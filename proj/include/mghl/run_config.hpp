#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mghl/a3c_trainer.hpp"
#include "mghl/grid_envs.hpp"
#include "mghl/hrl_agent.hpp"

namespace mghl {

/// Everything needed to reproduce a run. Stored as INI text:
///
///   [env]      name, size, step_limit, seed, pellets, shift_period
///   [agent]    subgoals, refresh_interval, bptt_manager, bptt_worker, gamma,
///              worker_hidden, manager_hidden, encoder, block_size
///   [weights]  eta, dc_unit, alpha
///   [trainer]  actors, learning_rate, linear_decay, entropy, value_coef,
///              clip_norm, rms_decay, rms_epsilon, total_steps,
///              metrics_interval, record_wallclock, stop_at_threshold,
///              threshold, threshold_window
///   [run]      seeds, out, checkpoint_interval
///
/// Missing keys keep their defaults; unknown keys are errors.
struct RunConfig {
  EnvConfig env;
  AgentConfig agent;
  TrainerConfig trainer;
  std::vector<std::uint64_t> seeds = {1};
  std::filesystem::path out_dir = "runs/default";
  std::uint64_t checkpoint_interval = 100'000;

  /// Throws std::invalid_argument whose message starts with the field path.
  void validate() const;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::filesystem::path& path);
void write_run_config(std::ostream& out, const RunConfig& cfg);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

}  // namespace mghl
