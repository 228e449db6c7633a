#include "mghl/a3c_trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>

namespace mghl {

std::vector<double> nstep_returns(std::span<const double> rewards, double bootstrap, double gamma) {
  if (rewards.empty()) throw std::invalid_argument("nstep_returns: empty reward list");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("nstep_returns: gamma out of range");
  std::vector<double> out(rewards.size());
  double running = bootstrap;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    running = rewards[t] + gamma * running;
    out[t] = running;
  }
  return out;
}

LossTerms actor_critic_loss(RolloutSegment& segment, const LossCoefficients& coef) {
  if (segment.steps.empty()) throw std::invalid_argument("loss on an empty segment");
  if (!segment.tape || segment.tape->consumed()) throw std::logic_error("segment tape missing or already consumed");
  Tape& tape = *segment.tape;

  LossTerms terms;
  terms.returns = nstep_returns(segment.rewards(), segment.bootstrap, segment.gamma);
  std::vector<Var> per_step;
  per_step.reserve(segment.steps.size());
  for (std::size_t t = 0; t < segment.steps.size(); ++t) {
    const PolicyStep& s = segment.steps[t];
    const double ret = terms.returns[t];
    const double advantage = ret - s.value.value().item();
    terms.advantages.push_back(advantage);

    Var log_probs = log_softmax(s.logits);
    Var probs = softmax(s.logits);
    Var log_prob_action = slice(log_probs, s.action, 1);
    Var policy_term = scale(log_prob_action, -advantage);
    Var diff = sub(tape.constant(Tensor::scalar(ret)), s.value);
    Var value_term = scale(mul(diff, diff), coef.value);
    Var neg_entropy = sum(mul(probs, log_probs));
    per_step.push_back(add(add(policy_term, value_term), scale(neg_entropy, coef.entropy)));

    terms.policy += -log_prob_action.value().item() * advantage;
    terms.value += advantage * advantage;
    terms.entropy += -neg_entropy.value().item();
  }
  terms.entropy /= static_cast<double>(segment.steps.size());
  terms.total = sum(concat(per_step));
  return terms;
}

LossTerms worker_loss(RolloutSegment& segment, const WorkerNet& worker, const LossCoefficients& coef) {
  if (segment.owner != worker.name()) {
    throw std::invalid_argument("worker_loss: segment owned by '" + segment.owner + "', expected '" + worker.name() + "'");
  }
  return actor_critic_loss(segment, coef);
}

LossTerms goal_actor_loss(RolloutSegment& segment, const GoalPolicy& policy, const LossCoefficients& coef) {
  if (segment.owner != policy.name()) {
    throw std::invalid_argument("goal_actor_loss: segment owned by '" + segment.owner + "', expected '" +
                                policy.name() + "'");
  }
  return actor_critic_loss(segment, coef);
}

double clip_gradients(GradientMap& grads, double clip) {
  if (!(clip > 0.0)) throw std::invalid_argument("clip norm must be positive");
  double sq = 0.0;
  for (const auto& [_, g] : grads) {
    for (double v : g.data()) sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (norm <= clip) return 1.0;
  const double factor = clip / norm;
  for (auto& [_, g] : grads) {
    for (double& v : g.data()) v *= factor;
  }
  return factor;
}

SharedParamStore::SharedParamStore(OptimizerConfig cfg) : cfg_(cfg) {}

void SharedParamStore::add(const ParamSet& params) {
  for (const auto& [name, value] : params) {
    if (slots_.contains(name)) throw std::invalid_argument("parameter '" + name + "' registered twice");
    auto slot = std::make_unique<Slot>();
    slot->value = value;
    slot->square_avg = Tensor(value.shape());
    slots_.emplace(name, std::move(slot));
  }
}

void SharedParamStore::snapshot(ParamSet& into) const {
  for (auto& [name, value] : into) {
    const auto it = slots_.find(name);
    if (it == slots_.end()) throw std::out_of_range("store has no parameter '" + name + "'");
    std::lock_guard lock(it->second->mu);
    value = it->second->value;
  }
}

ParamSet SharedParamStore::values() const {
  ParamSet out;
  for (const auto& [name, slot] : slots_) {
    std::lock_guard lock(slot->mu);
    out.emplace(name, slot->value);
  }
  return out;
}

void SharedParamStore::load(const ParamSet& params) {
  for (const auto& [name, value] : params) {
    const auto it = slots_.find(name);
    if (it == slots_.end()) throw std::out_of_range("store has no parameter '" + name + "'");
    std::lock_guard lock(it->second->mu);
    if (it->second->value.shape() != value.shape()) {
      throw ShapeError("parameter '" + name + "' has shape " + shape_str(it->second->value.shape()) + ", got " +
                       shape_str(value.shape()));
    }
    it->second->value = value;
  }
}

std::uint64_t SharedParamStore::apply_gradients(GradientMap grads, double clip, double learning_rate) {
  for (const auto& [name, g] : grads) {
    const auto it = slots_.find(name);
    if (it == slots_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    if (it->second->value.shape() != g.shape()) {
      throw ShapeError("gradient for '" + name + "' has shape " + shape_str(g.shape()));
    }
  }
  clip_gradients(grads, clip);
  for (const auto& [name, g] : grads) {
    const auto gv = g.data();
    if (std::all_of(gv.begin(), gv.end(), [](double v) { return v == 0.0; })) continue;
    Slot& slot = *slots_.at(name);
    std::lock_guard lock(slot.mu);
    auto value = slot.value.data();
    auto avg = slot.square_avg.data();
    for (std::size_t i = 0; i < gv.size(); ++i) {
      avg[i] = cfg_.decay * avg[i] + (1.0 - cfg_.decay) * gv[i] * gv[i];
      value[i] -= learning_rate * gv[i] / (std::sqrt(avg[i]) + cfg_.epsilon);
    }
  }
  return ++updates_;
}

void TrainerConfig::validate() const {
  if (num_actors == 0) throw std::invalid_argument("trainer.actors must be at least 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("trainer.learning_rate must be nonnegative");
  if (!(entropy_coef >= 0.0)) throw std::invalid_argument("trainer.entropy must be nonnegative");
  if (!(value_coef > 0.0)) throw std::invalid_argument("trainer.value_coef must be positive");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("trainer.clip_norm must be positive");
  if (!(rms_decay > 0.0 && rms_decay < 1.0)) throw std::invalid_argument("trainer.rms_decay out of range");
  if (!(rms_epsilon > 0.0)) throw std::invalid_argument("trainer.rms_epsilon must be positive");
  if (total_steps == 0) throw std::invalid_argument("trainer.total_steps must be positive");
  if (metrics_interval == 0) throw std::invalid_argument("trainer.metrics_interval must be positive");
  if (threshold_window == 0) throw std::invalid_argument("trainer.threshold_window must be positive");
}

double trailing_median(std::span<const EpisodeRecord> episodes, std::size_t end, std::size_t window) {
  if (end == 0 || end > episodes.size()) throw std::out_of_range("trailing_median: bad end index");
  const std::size_t begin = end > window ? end - window : 0;
  std::vector<double> v;
  for (std::size_t i = begin; i < end; ++i) v.push_back(episodes[i].ext_return_scaled);
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

/// Serialized collection channel for episodes, losses and interval rows.
class Collector {
 public:
  Collector(const TrainerConfig& cfg, const TrainHooks& hooks, std::atomic<bool>& stop)
      : cfg_(cfg), hooks_(hooks), stop_(stop), start_(std::chrono::steady_clock::now()),
        next_row_(cfg.metrics_interval) {}

  void on_update(const LossTerms& terms) {
    std::lock_guard lock(mu_);
    ++updates_;
    entropy_ += terms.entropy;
    value_ += terms.value;
    policy_ += terms.policy;
  }

  void on_episode(EpisodeRecord ep) {
    std::lock_guard lock(mu_);
    ep.index = result_.episodes.size();
    result_.episodes.push_back(ep);
    if (hooks_.on_episode) hooks_.on_episode(ep);
    ++ep_count_;
    ext_raw_ += ep.ext_return_raw;
    ext_scaled_ += ep.ext_return_scaled;
    for (std::size_t k = 0; k < 4; ++k) {
      if (ep.int_returns[k]) {
        int_sum_[k] += *ep.int_returns[k];
        int_seen_[k] = true;
      }
    }
    const auto n = result_.episodes.size();
    if (n >= cfg_.threshold_window) {
      const double m = trailing_median(result_.episodes, n, cfg_.threshold_window);
      result_.best_median_return = std::max(result_.best_median_return, m);
      if (m >= cfg_.threshold && !result_.steps_to_threshold) {
        result_.steps_to_threshold = ep.global_step;
        if (cfg_.stop_at_threshold) stop_ = true;
      }
    }
  }

  void on_step(std::uint64_t step, const SharedParamStore& store) {
    std::lock_guard lock(mu_);
    while (next_row_ <= step) {
      emit_row(next_row_);
      next_row_ += cfg_.metrics_interval;
    }
    if (hooks_.checkpoint_interval && hooks_.on_checkpoint && step % hooks_.checkpoint_interval == 0) {
      hooks_.on_checkpoint(step, store.values());
    }
  }

  TrainResult take() { return std::move(result_); }

 private:
  void emit_row(std::uint64_t step) {
    MetricsRow row;
    row.global_step = step;
    row.episode_index = result_.episodes.size();
    if (ep_count_) {
      const auto n = static_cast<double>(ep_count_);
      row.ext_return_raw = ext_raw_ / n;
      row.ext_return_scaled = ext_scaled_ / n;
      std::optional<double>* ints[4] = {&row.int_return_pc, &row.int_return_dc, &row.int_return_fc,
                                        &row.int_return_rand};
      for (std::size_t k = 0; k < 4; ++k) {
        if (int_seen_[k]) *ints[k] = int_sum_[k] / n;
      }
    }
    if (updates_) {
      const auto n = static_cast<double>(updates_);
      row.policy_entropy = entropy_ / n;
      row.value_loss = value_ / n;
      row.policy_loss = policy_ / n;
    }
    if (cfg_.wallclock_enabled()) {
      row.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
    result_.rows.push_back(row);
    if (hooks_.on_row) hooks_.on_row(row);
    ep_count_ = 0;
    ext_raw_ = ext_scaled_ = 0.0;
    int_sum_ = {};
    int_seen_ = {};
    updates_ = 0;
    entropy_ = value_ = policy_ = 0.0;
  }

  const TrainerConfig& cfg_;
  const TrainHooks& hooks_;
  std::atomic<bool>& stop_;
  std::chrono::steady_clock::time_point start_;
  std::mutex mu_;
  TrainResult result_;
  std::uint64_t next_row_;

  std::size_t ep_count_ = 0;
  double ext_raw_ = 0.0;
  double ext_scaled_ = 0.0;
  std::array<double, 4> int_sum_{};
  std::array<bool, 4> int_seen_{};
  std::size_t updates_ = 0;
  double entropy_ = 0.0;
  double value_ = 0.0;
  double policy_ = 0.0;
};

std::uint64_t actor_seed(std::uint64_t seed, std::size_t actor) {
  // splitmix64 of (seed, actor)
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + actor + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct EpisodeTotals {
  std::size_t length = 0;
  double ext_raw = 0.0;
  double ext_scaled = 0.0;
  std::array<std::optional<double>, 4> intrinsic;

  void add(const Transition& tr) {
    ++length;
    ext_raw += tr.ext_raw;
    ext_scaled += tr.ext_scaled;
    for (std::size_t k = 0; k < 4; ++k) {
      if (tr.intrinsic[k]) intrinsic[k] = intrinsic[k].value_or(0.0) + *tr.intrinsic[k];
    }
  }
};

}  // namespace

TrainResult train(const TrainerConfig& cfg, const AgentFactory& make_agent, const EnvFactory& make_env,
                  const TrainHooks& hooks) {
  cfg.validate();
  SharedParamStore store(OptimizerConfig{cfg.rms_decay, cfg.rms_epsilon});
  {
    const auto prototype = make_agent(cfg.seed);
    for (const Network* net : std::as_const(*prototype).networks()) store.add(net->params());
  }

  std::atomic<std::uint64_t> steps{0};
  std::atomic<bool> stop{false};
  Collector collector(cfg, hooks, stop);
  const LossCoefficients coef{cfg.value_coef, cfg.entropy_coef};

  auto learning_rate = [&](std::uint64_t step) {
    if (!cfg.linear_decay) return cfg.learning_rate;
    const double frac = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
    return cfg.learning_rate * std::max(0.0, 1.0 - frac);
  };

  auto run_actor = [&](std::size_t actor) {
    auto agent = make_agent(cfg.seed);
    auto env = make_env(actor);
    Rng rng(actor_seed(cfg.seed, actor));
    for (Network* net : agent->networks()) store.snapshot(net->params());
    agent->begin_episode(env->reset());
    EpisodeTotals totals;

    while (!stop.load()) {
      const std::uint64_t step = steps.fetch_add(1) + 1;
      if (step > cfg.total_steps) break;
      const Transition tr = agent->step(*env, rng);
      totals.add(tr);

      if (agent->manager_segments_ready()) {
        for (RolloutSegment& seg : agent->take_manager_segments()) {
          for (GoalPolicy& gp : agent->goal_policies()) {
            if (gp.name() != seg.owner) continue;
            const LossTerms terms = goal_actor_loss(seg, gp, coef);
            store.apply_gradients(seg.tape->backward(terms.total), cfg.clip_norm, learning_rate(step));
            store.snapshot(gp.params());
          }
        }
      }
      if (agent->worker_segment_ready()) {
        RolloutSegment seg = agent->take_worker_segment();
        const LossTerms terms = worker_loss(seg, agent->worker(), coef);
        store.apply_gradients(seg.tape->backward(terms.total), cfg.clip_norm, learning_rate(step));
        store.snapshot(agent->worker().params());
        collector.on_update(terms);
      }
      if (tr.done) {
        EpisodeRecord ep;
        ep.global_step = step;
        ep.actor = actor;
        ep.length = totals.length;
        ep.ext_return_raw = totals.ext_raw;
        ep.ext_return_scaled = totals.ext_scaled;
        ep.int_returns = totals.intrinsic;
        collector.on_episode(ep);
        totals = EpisodeTotals{};
        agent->begin_episode(env->reset());
      }
      collector.on_step(step, store);
    }
  };

  std::exception_ptr failure;
  std::mutex failure_mu;
  auto guarded = [&](std::size_t actor) {
    try {
      run_actor(actor);
    } catch (const std::exception& e) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::make_exception_ptr(std::runtime_error("actor " + std::to_string(actor) + ": " + e.what()));
      stop = true;
    } catch (...) {
      std::lock_guard lock(failure_mu);
      if (!failure) failure = std::current_exception();
      stop = true;
    }
  };

  if (cfg.num_actors == 1) {
    guarded(0);
  } else {
    std::vector<std::thread> threads;
    for (std::size_t a = 0; a < cfg.num_actors; ++a) threads.emplace_back(guarded, a);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  TrainResult result = collector.take();
  result.steps = std::min(steps.load(), cfg.total_steps);
  result.updates = store.updates();
  result.params = store.values();
  return result;
}

}  // namespace mghl
