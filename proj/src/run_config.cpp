#include "mghl/run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "mghl/metrics.hpp"

namespace mghl {

namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"env", {"name", "size", "step_limit", "seed", "pellets", "shift_period"}},
      {"agent",
       {"subgoals", "refresh_interval", "bptt_manager", "bptt_worker", "gamma", "worker_hidden", "manager_hidden",
        "encoder", "block_size"}},
      {"weights", {"eta", "dc_unit", "alpha"}},
      {"trainer",
       {"actors", "learning_rate", "linear_decay", "entropy", "value_coef", "clip_norm", "rms_decay", "rms_epsilon",
        "total_steps", "metrics_interval", "record_wallclock", "stop_at_threshold", "threshold", "threshold_window"}},
      {"run", {"seeds", "out", "checkpoint_interval"}},
  };
  return keys;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  template <typename T>
  void get(const std::string& path, T& into) const {
    const auto node = tree_.get_optional<std::string>(pt::ptree::path_type(path, '.'));
    if (!node) return;
    into = convert<T>(path, *node);
  }

 private:
  template <typename T>
  static T convert(const std::string& path, const std::string& text) {
    if constexpr (std::is_same_v<T, std::string>) {
      return text;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (text == "true" || text == "1" || text == "yes") return true;
      if (text == "false" || text == "0" || text == "no") return false;
      throw ConfigError(path + ": expected true or false, got '" + text + "'");
    } else {
      T value{};
      const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
      if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ConfigError(path + ": expected a number, got '" + text + "'");
      }
      return value;
    }
  }

  const pt::ptree& tree_;
};

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  if (text.find_first_not_of(' ') == std::string::npos) throw ConfigError("run.seeds: no seeds given");
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    const auto b = token.find_first_not_of(' ');
    const auto e = token.find_last_not_of(' ');
    if (b == std::string::npos) throw ConfigError("run.seeds: empty entry in '" + text + "'");
    token = token.substr(b, e - b + 1);
    std::uint64_t v = 0;
    const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
      throw ConfigError("run.seeds: bad seed '" + token + "'");
    }
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ConfigError("run.seeds: no seeds given");
  return seeds;
}

void RunConfig::validate() const {
  try {
    env.validate();
    agent.validate();
    trainer.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (seeds.empty()) throw ConfigError("run.seeds: no seeds given");
  if (out_dir.empty()) throw ConfigError("run.out must not be empty");
  const std::size_t grid = env.size;
  if (grid % agent.block_size != 0) {
    throw ConfigError("agent.block_size: " + std::to_string(agent.block_size) + " does not divide env.size " +
                      std::to_string(grid));
  }
}

RunConfig parse_run_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  for (const auto& [section, body] : tree) {
    const auto it = known_keys().find(section);
    if (it == known_keys().end()) throw ConfigError(section + ": unknown config section");
    if (body.empty() && !body.data().empty()) throw ConfigError("config key '" + section + "' outside a section");
    for (const auto& [key, _] : body) {
      if (!it->second.contains(key)) throw ConfigError(section + "." + key + ": unknown config key");
    }
  }

  RunConfig cfg;
  const Reader r(tree);
  r.get("env.name", cfg.env.name);
  r.get("env.size", cfg.env.size);
  r.get("env.step_limit", cfg.env.step_limit);
  r.get("env.seed", cfg.env.seed);
  r.get("env.pellets", cfg.env.pellets);
  r.get("env.shift_period", cfg.env.shift_period);

  std::string subgoals;
  r.get("agent.subgoals", subgoals);
  if (!subgoals.empty()) {
    try {
      cfg.agent.active_subgoals = parse_kind_list(subgoals);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("agent.subgoals: ") + e.what());
    }
  }
  r.get("agent.refresh_interval", cfg.agent.subgoal_refresh_interval);
  r.get("agent.bptt_manager", cfg.agent.bptt_manager);
  r.get("agent.bptt_worker", cfg.agent.bptt_worker);
  r.get("agent.gamma", cfg.agent.gamma);
  r.get("agent.worker_hidden", cfg.agent.worker_hidden);
  r.get("agent.manager_hidden", cfg.agent.manager_hidden);
  r.get("agent.encoder", cfg.agent.encoder);
  r.get("agent.block_size", cfg.agent.block_size);

  r.get("weights.eta", cfg.agent.weights.eta);
  r.get("weights.dc_unit", cfg.agent.weights.dc_unit);
  r.get("weights.alpha", cfg.agent.weights.alpha);

  r.get("trainer.actors", cfg.trainer.num_actors);
  r.get("trainer.learning_rate", cfg.trainer.learning_rate);
  r.get("trainer.linear_decay", cfg.trainer.linear_decay);
  r.get("trainer.entropy", cfg.trainer.entropy_coef);
  r.get("trainer.value_coef", cfg.trainer.value_coef);
  r.get("trainer.clip_norm", cfg.trainer.clip_norm);
  r.get("trainer.rms_decay", cfg.trainer.rms_decay);
  r.get("trainer.rms_epsilon", cfg.trainer.rms_epsilon);
  r.get("trainer.total_steps", cfg.trainer.total_steps);
  r.get("trainer.metrics_interval", cfg.trainer.metrics_interval);
  std::string wallclock;
  r.get("trainer.record_wallclock", wallclock);
  if (wallclock == "true") {
    cfg.trainer.record_wallclock = true;
  } else if (wallclock == "false") {
    cfg.trainer.record_wallclock = false;
  } else if (!wallclock.empty() && wallclock != "auto") {
    throw ConfigError("trainer.record_wallclock: expected auto, true or false, got '" + wallclock + "'");
  }
  r.get("trainer.stop_at_threshold", cfg.trainer.stop_at_threshold);
  r.get("trainer.threshold", cfg.trainer.threshold);
  r.get("trainer.threshold_window", cfg.trainer.threshold_window);

  std::string seeds;
  r.get("run.seeds", seeds);
  if (!seeds.empty()) cfg.seeds = parse_seed_list(seeds);
  std::string out;
  r.get("run.out", out);
  if (!out.empty()) cfg.out_dir = out;
  r.get("run.checkpoint_interval", cfg.checkpoint_interval);

  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_run_config(in);
}

void write_run_config(std::ostream& out, const RunConfig& c) {
  auto b = [](bool v) { return v ? "true" : "false"; };
  out << "[env]\n"
      << "name = " << c.env.name << '\n'
      << "size = " << c.env.size << '\n'
      << "step_limit = " << c.env.step_limit << '\n'
      << "seed = " << c.env.seed << '\n'
      << "pellets = " << c.env.pellets << '\n'
      << "shift_period = " << c.env.shift_period << "\n\n"
      << "[agent]\n"
      << "subgoals = " << format_kind_list(c.agent.active_subgoals) << '\n'
      << "refresh_interval = " << c.agent.subgoal_refresh_interval << '\n'
      << "bptt_manager = " << c.agent.bptt_manager << '\n'
      << "bptt_worker = " << c.agent.bptt_worker << '\n'
      << "gamma = " << format_real(c.agent.gamma) << '\n'
      << "worker_hidden = " << c.agent.worker_hidden << '\n'
      << "manager_hidden = " << c.agent.manager_hidden << '\n'
      << "encoder = " << c.agent.encoder << '\n'
      << "block_size = " << c.agent.block_size << "\n\n"
      << "[weights]\n"
      << "eta = " << format_real(c.agent.weights.eta) << '\n'
      << "dc_unit = " << format_real(c.agent.weights.dc_unit) << '\n'
      << "alpha = " << format_real(c.agent.weights.alpha) << "\n\n"
      << "[trainer]\n"
      << "actors = " << c.trainer.num_actors << '\n'
      << "learning_rate = " << format_real(c.trainer.learning_rate) << '\n'
      << "linear_decay = " << b(c.trainer.linear_decay) << '\n'
      << "entropy = " << format_real(c.trainer.entropy_coef) << '\n'
      << "value_coef = " << format_real(c.trainer.value_coef) << '\n'
      << "clip_norm = " << format_real(c.trainer.clip_norm) << '\n'
      << "rms_decay = " << format_real(c.trainer.rms_decay) << '\n'
      << "rms_epsilon = " << format_real(c.trainer.rms_epsilon) << '\n'
      << "total_steps = " << c.trainer.total_steps << '\n'
      << "metrics_interval = " << c.trainer.metrics_interval << '\n'
      << "record_wallclock = " << (c.trainer.record_wallclock ? b(*c.trainer.record_wallclock) : "auto") << '\n'
      << "stop_at_threshold = " << b(c.trainer.stop_at_threshold) << '\n'
      << "threshold = " << format_real(c.trainer.threshold) << '\n'
      << "threshold_window = " << c.trainer.threshold_window << "\n\n"
      << "[run]\n"
      << "seeds = ";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) out << (i ? "," : "") << c.seeds[i];
  out << '\n'
      << "out = " << c.out_dir.string() << '\n'
      << "checkpoint_interval = " << c.checkpoint_interval << '\n';
}

void save_run_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_run_config(out, cfg);
}

}  // namespace mghl
