#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "mghl/subgoal_rewards.hpp"
#include "mghl/tensor.hpp"

namespace mghl {

using ParamSet = std::map<std::string, Tensor>;
using Rng = std::mt19937_64;

struct ConvSpec {
  std::size_t filters = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
};

struct EncoderConfig {
  Shape input_shape = {3, 12, 12};
  std::vector<ConvSpec> convs = {{8, 3, 1}, {16, 3, 2}};
  std::size_t fc_units = 64;

  /// Small-grid preset: 8@3x3/s1, 16@3x3/s2, FC 64.
  static EncoderConfig desk(Shape input_shape);
  /// 84x84 preset: 16@8x8/s4, 32@4x4/s2, FC 256.
  static EncoderConfig atari(std::size_t channels = 1);

  /// Shape of the last conv layer's output; throws if any layer collapses.
  Shape feature_shape() const;
  void validate() const { (void)feature_shape(); }
};

struct LstmState {
  Tensor h;
  Tensor c;
  static LstmState zeros(std::size_t hidden) { return {Tensor({hidden}), Tensor({hidden})}; }
};

struct LstmVars {
  Var h;
  Var c;
};

LstmVars bind_state(Tape& tape, const LstmState& state);
LstmState read_state(const LstmVars& vars);

/// Owns a named replica of its parameters. Parameter names are prefixed with
/// the network name and never collide across networks of one agent.
class Network {
 public:
  explicit Network(std::string name) : name_(std::move(name)) {}
  virtual ~Network() = default;

  const std::string& name() const { return name_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  std::size_t parameter_count() const;

 protected:
  Var param(Tape& tape, const std::string& local) const;
  void add_uniform(Rng& rng, const std::string& local, Shape shape, std::size_t fan_in);
  void add_orthogonal(Rng& rng, const std::string& local, std::size_t rows, std::size_t cols);
  void add_zeros(const std::string& local, Shape shape);

  std::string name_;
  ParamSet params_;
};

struct EncoderOutput {
  Var features;  // last conv layer after ReLU, (C,H,W)
  Var fc;        // flattened FC output after ReLU
};

struct WorkerConfig {
  EncoderConfig encoder;
  std::size_t hidden = 64;
  std::size_t subgoal_width = 1;
  std::size_t num_actions = 5;
};

struct PolicyOutput {
  Var logits;
  Var probs;
  Var value;  // shape (1)
  LstmVars state;
};

struct WorkerOutput : PolicyOutput {
  Var features;
};

struct ManagerObservation {
  Tensor observation;
  double prev_extrinsic_reward = 0.0;
  Tensor prev_action;  // one-hot, all zeros at episode start
};

struct GoalPolicyConfig {
  SubgoalKind kind = SubgoalKind::kPixel;
  EncoderConfig encoder;
  std::size_t hidden = 64;
  std::size_t space = 1;
  std::size_t num_actions = 5;
};

/// Shared trunk of Worker and goal-policies: conv encoder, FC, LSTM, actor and
/// critic heads. Subclasses decide what is concatenated to the FC output.
class ActorCriticNet : public Network {
 public:
  ActorCriticNet(std::string name, EncoderConfig encoder, std::size_t extra_inputs, std::size_t hidden,
                 std::size_t outputs);

  void init(std::uint64_t seed);

  const EncoderConfig& encoder_config() const { return encoder_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t outputs() const { return outputs_; }
  std::size_t core_input_width() const { return encoder_.fc_units + extra_inputs_; }

  EncoderOutput encode(Tape& tape, Var obs) const;
  /// One LSTM step; the output equals the new hidden state.
  LstmVars recurrent_step(Tape& tape, Var input, LstmVars state) const;
  PolicyOutput heads(Tape& tape, Var core_input, LstmVars state) const;

  /// Last conv feature maps for obs, evaluated on a scratch tape.
  Tensor features(const Tensor& obs) const;

 private:
  EncoderConfig encoder_;
  std::size_t extra_inputs_;
  std::size_t hidden_;
  std::size_t outputs_;
};

class WorkerNet : public ActorCriticNet {
 public:
  explicit WorkerNet(WorkerConfig cfg, std::string name = "worker");

  const WorkerConfig& config() const { return cfg_; }
  WorkerOutput forward(Tape& tape, const Tensor& obs, const Tensor& subgoal_onehots, LstmVars state) const;

 private:
  WorkerConfig cfg_;
};

class GoalPolicy : public ActorCriticNet {
 public:
  explicit GoalPolicy(GoalPolicyConfig cfg);

  SubgoalKind kind() const { return cfg_.kind; }
  std::size_t space() const { return cfg_.space; }
  const GoalPolicyConfig& config() const { return cfg_; }
  PolicyOutput forward(Tape& tape, const ManagerObservation& mobs, LstmVars state) const;

 private:
  GoalPolicyConfig cfg_;
};

}  // namespace mghl
