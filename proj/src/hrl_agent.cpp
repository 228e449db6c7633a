#include "mghl/hrl_agent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mghl {

namespace {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

EncoderConfig make_encoder(const AgentConfig& cfg, const Shape& obs_shape) {
  if (cfg.encoder == "desk") return EncoderConfig::desk(obs_shape);
  EncoderConfig enc = EncoderConfig::atari(obs_shape.at(0));
  if (enc.input_shape != obs_shape) {
    throw std::invalid_argument("agent.encoder atari expects (C,84,84) observations, got " + shape_str(obs_shape));
  }
  return enc;
}

}  // namespace

void AgentConfig::validate() const {
  if (active_subgoals.empty()) throw std::invalid_argument("agent.subgoals must not be empty");
  for (std::size_t i = 0; i < active_subgoals.size(); ++i) {
    for (std::size_t j = i + 1; j < active_subgoals.size(); ++j) {
      if (active_subgoals[i] == active_subgoals[j]) throw std::invalid_argument("agent.subgoals has duplicates");
    }
  }
  if (subgoal_refresh_interval == 0) throw std::invalid_argument("agent.refresh_interval must be at least 1");
  weights.validate();
  if (bptt_manager == 0) throw std::invalid_argument("agent.bptt_manager must be positive");
  if (bptt_worker == 0) throw std::invalid_argument("agent.bptt_worker must be positive");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("agent.gamma out of range");
  if (worker_hidden == 0) throw std::invalid_argument("agent.worker_hidden must be positive");
  if (manager_hidden == 0) throw std::invalid_argument("agent.manager_hidden must be positive");
  if (encoder != "desk" && encoder != "atari") throw std::invalid_argument("agent.encoder must be desk or atari");
  if (block_size == 0) throw std::invalid_argument("agent.block_size must be positive");
}

bool AgentConfig::has(SubgoalKind kind) const {
  return std::find(active_subgoals.begin(), active_subgoals.end(), kind) != active_subgoals.end();
}

SubgoalLayout SubgoalLayout::make(std::span<const SubgoalKind> active, std::size_t pixel_blocks,
                                  std::size_t feature_channels, std::size_t num_actions) {
  SubgoalLayout layout;
  const std::array<std::size_t, 4> space = {pixel_blocks, kNumDirections, feature_channels, num_actions};
  for (SubgoalKind k : kAllSubgoalKinds) {
    if (std::find(active.begin(), active.end(), k) == active.end()) continue;
    const auto i = static_cast<std::size_t>(k);
    layout.kinds.push_back(k);
    layout.sizes[i] = space[i];
    layout.offsets[i] = layout.width;
    layout.width += space[i];
  }
  if (layout.kinds.empty()) throw std::invalid_argument("subgoal layout needs at least one active type");
  return layout;
}

bool SubgoalLayout::has(SubgoalKind kind) const { return std::find(kinds.begin(), kinds.end(), kind) != kinds.end(); }

Tensor encode_subgoals(std::span<const Subgoal> subgoals, const SubgoalLayout& layout) {
  if (subgoals.size() != layout.kinds.size()) {
    throw std::invalid_argument("encode_subgoals: " + std::to_string(subgoals.size()) + " subgoals for a layout of " +
                                std::to_string(layout.kinds.size()) + " types");
  }
  Tensor out({layout.width});
  for (std::size_t i = 0; i < subgoals.size(); ++i) {
    const Subgoal& g = subgoals[i];
    if (g.kind != layout.kinds[i]) {
      throw std::invalid_argument("encode_subgoals: expected " + std::string(kind_name(layout.kinds[i])) + " at position " +
                                  std::to_string(i) + ", got " + std::string(kind_name(g.kind)));
    }
    const auto k = static_cast<std::size_t>(g.kind);
    if (g.space != layout.sizes[k] || g.index >= g.space) {
      throw std::invalid_argument("encode_subgoals: " + std::string(kind_name(g.kind)) + " subgoal " +
                                  std::to_string(g.index) + "/" + std::to_string(g.space) + " does not fit size " +
                                  std::to_string(layout.sizes[k]));
    }
    out[layout.offsets[k] + g.index] = 1.0;
  }
  return out;
}

std::size_t sample_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

std::size_t argmax(std::span<const double> values) {
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::size_t choose(std::span<const double> probs, Rng& rng, ActMode mode) {
  return mode == ActMode::kGreedy ? argmax(probs) : sample_categorical(probs, rng);
}

ActResult act(const WorkerNet& worker, Tape& tape, const Tensor& obs, const Tensor& subgoal_onehots, LstmVars state,
              Rng& rng, ActMode mode) {
  ActResult r;
  r.output = worker.forward(tape, obs, subgoal_onehots, state);
  const auto probs = r.output.probs.value().data();
  r.action = choose(probs, rng, mode);
  r.log_prob = std::log(probs[r.action]);
  r.value = r.output.value.value().item();
  return r;
}

std::vector<double> RolloutSegment::rewards() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.reward);
  return out;
}

HrlAgent::HrlAgent(AgentConfig cfg, const Shape& obs_shape, std::size_t num_actions, std::uint64_t init_seed)
    : cfg_((cfg.validate(), std::move(cfg))),
      num_actions_(num_actions),
      blocks_(block_partition(obs_shape, cfg_.block_size)),
      layout_(SubgoalLayout::make(cfg_.active_subgoals, blocks_.size(), make_encoder(cfg_, obs_shape).feature_shape()[0],
                                  num_actions)),
      worker_(WorkerConfig{make_encoder(cfg_, obs_shape), cfg_.worker_hidden, layout_.width, num_actions}),
      prev_action_({num_actions}) {
  worker_.init(init_seed);
  for (SubgoalKind k : layout_.kinds) {
    if (k == SubgoalKind::kRandom) continue;
    GoalPolicyConfig gp{k, worker_.encoder_config(), cfg_.manager_hidden, layout_.size_of(k), num_actions};
    goal_policies_.emplace_back(gp);
    goal_policies_.back().init(init_seed + 1 + static_cast<std::uint64_t>(k));
  }
  manager_tracks_.resize(goal_policies_.size());
  decision_discount_.assign(goal_policies_.size(), 1.0);
}

const GoalPolicy* HrlAgent::goal_policy(SubgoalKind kind) const {
  for (const auto& gp : goal_policies_) {
    if (gp.kind() == kind) return &gp;
  }
  return nullptr;
}

std::vector<Network*> HrlAgent::networks() {
  std::vector<Network*> out{&worker_};
  for (auto& gp : goal_policies_) out.push_back(&gp);
  return out;
}

std::vector<const Network*> HrlAgent::networks() const {
  std::vector<const Network*> out{&worker_};
  for (const auto& gp : goal_policies_) out.push_back(&gp);
  return out;
}

void HrlAgent::open_track(Track& track) {
  track.tape = std::make_unique<Tape>();
  track.vars = bind_state(*track.tape, track.state);
  track.initial = track.state;
}

void HrlAgent::reset_track(Track& track, std::size_t hidden) {
  track.state = LstmState::zeros(hidden);
  track.steps.clear();
  open_track(track);
}

RolloutSegment HrlAgent::close_track(Track& track, const std::string& owner, double bootstrap, double gamma) {
  RolloutSegment seg;
  seg.owner = owner;
  seg.tape = std::move(track.tape);
  seg.steps = std::move(track.steps);
  seg.bootstrap = bootstrap;
  seg.gamma = gamma;
  seg.initial_state = track.initial;
  track.steps.clear();
  open_track(track);
  return seg;
}

void HrlAgent::begin_episode(const Tensor& obs) {
  obs_ = obs;
  prev_ext_ = 0.0;
  prev_action_ = Tensor({num_actions_});
  episode_steps_ = 0;
  manager_window_ = 0;
  done_ = false;
  subgoals_.clear();
  last_features_ = Tensor();
  reset_track(worker_track_, worker_.hidden());
  for (std::size_t i = 0; i < goal_policies_.size(); ++i) reset_track(manager_tracks_[i], goal_policies_[i].hidden());
}

ManagerObservation HrlAgent::manager_observation() const { return {obs_, prev_ext_, prev_action_}; }

std::vector<Subgoal> HrlAgent::select_subgoals(Rng& rng, ActMode mode) {
  const ManagerObservation mobs = manager_observation();
  std::vector<Subgoal> chosen;
  std::size_t policy = 0;
  for (SubgoalKind k : layout_.kinds) {
    Subgoal g{k, 0, layout_.size_of(k)};
    if (k == SubgoalKind::kRandom) {
      g.index = std::min(static_cast<std::size_t>(uniform01(rng) * static_cast<double>(g.space)), g.space - 1);
    } else {
      Track& track = manager_tracks_[policy];
      if (!recording_) open_track(track);
      const PolicyOutput out = goal_policies_[policy].forward(*track.tape, mobs, track.vars);
      g.index = choose(out.probs.value().data(), rng, mode);
      track.vars = out.state;
      track.state = read_state(out.state);
      if (recording_) track.steps.push_back({out.logits, out.value, g.index, 0.0});
      decision_discount_[policy] = 1.0;
      ++policy;
    }
    chosen.push_back(g);
  }
  subgoals_ = chosen;
  return chosen;
}

IntrinsicComponents HrlAgent::intrinsic_rewards(const Tensor& obs, const Tensor& next_obs, std::size_t action,
                                                const Tensor& features, const Tensor& next_features) const {
  IntrinsicComponents out;
  const RewardWeights& w = cfg_.weights;
  for (const Subgoal& g : subgoals_) {
    double r = 0.0;
    switch (g.kind) {
      case SubgoalKind::kPixel: r = pixel_control_reward(obs, next_obs, blocks_.at(g.index), w.eta); break;
      case SubgoalKind::kDirection:
        r = direction_control_reward(action, static_cast<Direction>(g.index), actions_.direction_map, w.dc_unit);
        break;
      case SubgoalKind::kFeature: r = feature_control_reward(features, next_features, g.index, w.eta); break;
      case SubgoalKind::kRandom: r = random_subgoal_reward(action, g.index, g.space, w.dc_unit); break;
    }
    out[static_cast<std::size_t>(g.kind)] = r;
  }
  return out;
}

Transition HrlAgent::step(GridEnv& env, Rng& rng, ActMode mode) {
  if (done_) throw std::logic_error("agent step after episode end; call begin_episode()");
  if (episode_steps_ % cfg_.subgoal_refresh_interval == 0) select_subgoals(rng, mode);

  const Tensor onehots = encode_subgoals(subgoals_, layout_);
  if (!recording_) open_track(worker_track_);
  const ActResult r = act(worker_, *worker_track_.tape, obs_, onehots, worker_track_.vars, rng, mode);
  worker_track_.vars = r.output.state;
  worker_track_.state = read_state(r.output.state);
  last_features_ = r.output.features.value();

  EnvStep es = env.step(r.action);
  const bool feature_control = layout_.has(SubgoalKind::kFeature);
  const Tensor next_features = feature_control ? worker_.features(es.obs) : Tensor();

  Transition tr;
  tr.obs = obs_;
  tr.action = r.action;
  tr.subgoals = subgoals_;
  tr.intrinsic = intrinsic_rewards(obs_, es.obs, r.action, last_features_, next_features);
  std::vector<double> parts;
  for (const auto& c : tr.intrinsic) {
    if (c) parts.push_back(*c);
  }
  tr.intrinsic_total = compose_intrinsic(parts);
  tr.ext_raw = es.raw_ext_reward;
  tr.ext_scaled = es.scaled_ext_reward;
  tr.mixed = mix_rewards(tr.intrinsic_total, tr.ext_scaled, cfg_.weights.alpha);
  tr.done = es.done;

  if (recording_) {
    worker_track_.steps.push_back({r.output.logits, r.output.value, r.action, tr.mixed});
    for (std::size_t i = 0; i < manager_tracks_.size(); ++i) {
      auto& steps = manager_tracks_[i].steps;
      if (!steps.empty()) steps.back().reward += decision_discount_[i] * tr.ext_scaled;
      decision_discount_[i] *= cfg_.gamma;
    }
  }

  prev_ext_ = tr.ext_scaled;
  prev_action_ = Tensor({num_actions_});
  prev_action_[r.action] = 1.0;
  tr.next_obs = es.obs;
  obs_ = std::move(es.obs);
  ++episode_steps_;
  ++manager_window_;
  done_ = tr.done;
  return tr;
}

bool HrlAgent::worker_segment_ready() const {
  return recording_ && !worker_track_.steps.empty() && (done_ || worker_track_.steps.size() >= cfg_.bptt_worker);
}

RolloutSegment HrlAgent::take_worker_segment() {
  if (worker_track_.steps.empty()) throw std::logic_error("no worker steps recorded");
  double bootstrap = 0.0;
  if (!done_) {
    Tape scratch;
    bootstrap = worker_.forward(scratch, obs_, encode_subgoals(subgoals_, layout_), bind_state(scratch, worker_track_.state))
                    .value.value()
                    .item();
  }
  return close_track(worker_track_, worker_.name(), bootstrap, cfg_.gamma);
}

bool HrlAgent::manager_segments_ready() const {
  if (!recording_ || manager_tracks_.empty() || manager_tracks_.front().steps.empty()) return false;
  if (done_) return true;
  return manager_window_ >= cfg_.bptt_manager && episode_steps_ % cfg_.subgoal_refresh_interval == 0;
}

std::vector<RolloutSegment> HrlAgent::take_manager_segments() {
  std::vector<RolloutSegment> out;
  const ManagerObservation mobs = manager_observation();
  const double gamma = std::pow(cfg_.gamma, static_cast<double>(cfg_.subgoal_refresh_interval));
  for (std::size_t i = 0; i < goal_policies_.size(); ++i) {
    Track& track = manager_tracks_[i];
    double bootstrap = 0.0;
    if (!done_) {
      Tape scratch;
      bootstrap = goal_policies_[i].forward(scratch, mobs, bind_state(scratch, track.state)).value.value().item();
    }
    out.push_back(close_track(track, goal_policies_[i].name(), bootstrap, gamma));
  }
  manager_window_ = 0;
  return out;
}

}  // namespace mghl
