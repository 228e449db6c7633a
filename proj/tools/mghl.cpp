#include <CLI11.hpp>

#include <iostream>

#include "mghl/checkpoint.hpp"
#include "mghl/experiment.hpp"

namespace {

struct Overrides {
  std::string seeds;
  std::size_t actors = 0;
  std::string subgoals;
  std::string out;
  std::uint64_t steps = 0;
};

void add_overrides(CLI::App* cmd, Overrides& o, bool with_subgoals) {
  cmd->add_option("--seed", o.seeds, "comma-separated seed list");
  cmd->add_option("--actors", o.actors, "number of actor-learner threads");
  if (with_subgoals) cmd->add_option("--subgoals", o.subgoals, "active subgoal types, e.g. pc,dc,fc");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--steps", o.steps, "total environment steps");
}

mghl::RunConfig load(const std::string& path, const Overrides& o) {
  mghl::RunConfig cfg = mghl::load_run_config(path);
  if (!o.seeds.empty()) cfg.seeds = mghl::parse_seed_list(o.seeds);
  if (o.actors) cfg.trainer.num_actors = o.actors;
  if (!o.subgoals.empty()) {
    try {
      cfg.agent.active_subgoals = mghl::parse_kind_list(o.subgoals);
    } catch (const std::invalid_argument& e) {
      throw mghl::ConfigError(std::string("agent.subgoals: ") + e.what());
    }
  }
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (o.steps) cfg.trainer.total_steps = o.steps;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-goal hierarchical A3C agent"};
  app.require_subcommand(1);

  std::string config;
  Overrides train_o, ablate_o;
  auto* train = app.add_subcommand("train", "train one run per seed");
  train->add_option("--config", config, "INI config file")->required()->check(CLI::ExistingFile);
  add_overrides(train, train_o, true);

  bool robustness = false;
  auto* ablate = app.add_subcommand("ablate", "subgoal-count ablation");
  ablate->add_option("--config", config, "INI config file")->required()->check(CLI::ExistingFile);
  ablate->add_flag("--robustness", robustness, "add the pc,fc,dc,rand setting");
  add_overrides(ablate, ablate_o, false);

  std::string checkpoint, eval_config;
  long long episodes = 0;
  auto* eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--episodes", episodes, "number of episodes")->required();
  eval->add_option("--config", eval_config, "config (default: config.ini next to the checkpoint)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      mghl::run_train(load(config, train_o), std::cout);
    } else if (*ablate) {
      mghl::run_ablation(load(config, ablate_o), robustness, std::cout);
    } else if (*eval) {
      if (episodes < 1) throw std::invalid_argument("episodes must be ≥ 1");
      std::optional<std::filesystem::path> cfg;
      if (!eval_config.empty()) cfg = eval_config;
      mghl::print_report(std::cout, mghl::run_eval(checkpoint, static_cast<std::size_t>(episodes), cfg));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
