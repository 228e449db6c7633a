#include "mghl/policy_nets.hpp"

#include <Eigen/QR>
#include <cmath>
#include <stdexcept>

namespace mghl {

namespace {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

EncoderConfig EncoderConfig::desk(Shape input_shape) {
  EncoderConfig cfg;
  cfg.input_shape = std::move(input_shape);
  return cfg;
}

EncoderConfig EncoderConfig::atari(std::size_t channels) {
  EncoderConfig cfg;
  cfg.input_shape = {channels, 84, 84};
  cfg.convs = {{16, 8, 4}, {32, 4, 2}};
  cfg.fc_units = 256;
  return cfg;
}

Shape EncoderConfig::feature_shape() const {
  if (input_shape.size() != 3) throw ShapeError("encoder input must be (C,H,W), got " + shape_str(input_shape));
  if (convs.empty()) throw std::invalid_argument("encoder needs at least one conv layer");
  if (fc_units == 0) throw std::invalid_argument("encoder fc_units must be positive");
  std::size_t c = input_shape[0], h = input_shape[1], w = input_shape[2];
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto& spec = convs[i];
    if (spec.filters == 0 || spec.kernel == 0 || spec.stride == 0) {
      throw std::invalid_argument("conv layer " + std::to_string(i) + " has a zero size");
    }
    if (spec.kernel > h || spec.kernel > w) {
      throw ShapeError("conv layer " + std::to_string(i) + " kernel " + std::to_string(spec.kernel) +
                       " exceeds its " + std::to_string(h) + "x" + std::to_string(w) + " input");
    }
    h = (h - spec.kernel) / spec.stride + 1;
    w = (w - spec.kernel) / spec.stride + 1;
    c = spec.filters;
  }
  return {c, h, w};
}

LstmVars bind_state(Tape& tape, const LstmState& state) { return {tape.constant(state.h), tape.constant(state.c)}; }

LstmState read_state(const LstmVars& vars) { return {vars.h.value(), vars.c.value()}; }

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

Var Network::param(Tape& tape, const std::string& local) const {
  const std::string key = name_ + "/" + local;
  if (tape.has_parameter(key)) return tape.parameter(key, Tensor());
  const auto it = params_.find(key);
  if (it == params_.end()) throw std::out_of_range("network " + name_ + " has no parameter " + local);
  return tape.parameter(key, it->second);
}

void Network::add_uniform(Rng& rng, const std::string& local, Shape shape, std::size_t fan_in) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.data()) v = (2.0 * uniform01(rng) - 1.0) * bound;
  params_[name_ + "/" + local] = std::move(t);
}

void Network::add_orthogonal(Rng& rng, const std::string& local, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g(rows, cols);
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
  const Eigen::MatrixXd r = qr.matrixQR();
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  Tensor t({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) t[i * cols + j] = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  params_[name_ + "/" + local] = std::move(t);
}

void Network::add_zeros(const std::string& local, Shape shape) { params_[name_ + "/" + local] = Tensor(std::move(shape)); }

ActorCriticNet::ActorCriticNet(std::string name, EncoderConfig encoder, std::size_t extra_inputs, std::size_t hidden,
                               std::size_t outputs)
    : Network(std::move(name)), encoder_(std::move(encoder)), extra_inputs_(extra_inputs), hidden_(hidden),
      outputs_(outputs) {
  encoder_.validate();
  if (hidden_ == 0) throw std::invalid_argument(name_ + ": hidden width must be positive");
  if (outputs_ == 0) throw std::invalid_argument(name_ + ": output space must be nonempty");
  init(0);
}

void ActorCriticNet::init(std::uint64_t seed) {
  Rng rng(seed);
  params_.clear();
  std::size_t channels = encoder_.input_shape[0];
  for (std::size_t i = 0; i < encoder_.convs.size(); ++i) {
    const auto& spec = encoder_.convs[i];
    const std::string layer = "conv" + std::to_string(i);
    add_uniform(rng, layer + "/w", {spec.filters, channels, spec.kernel, spec.kernel},
                channels * spec.kernel * spec.kernel);
    add_zeros(layer + "/b", {spec.filters});
    channels = spec.filters;
  }
  const std::size_t flat = shape_size(encoder_.feature_shape());
  add_uniform(rng, "fc/w", {encoder_.fc_units, flat}, flat);
  add_zeros("fc/b", {encoder_.fc_units});
  add_uniform(rng, "lstm/wx", {4 * hidden_, core_input_width()}, core_input_width());
  add_orthogonal(rng, "lstm/wh", 4 * hidden_, hidden_);
  add_zeros("lstm/b", {4 * hidden_});
  add_zeros("actor/w", {outputs_, hidden_});
  add_zeros("actor/b", {outputs_});
  add_zeros("critic/w", {1, hidden_});
  add_zeros("critic/b", {1});
}

EncoderOutput ActorCriticNet::encode(Tape& tape, Var obs) const {
  if (obs.shape() != encoder_.input_shape) {
    throw ShapeError(name_ + ": observation shape " + shape_str(obs.shape()) + " != encoder input " +
                     shape_str(encoder_.input_shape));
  }
  Var x = obs;
  for (std::size_t i = 0; i < encoder_.convs.size(); ++i) {
    const std::string layer = "conv" + std::to_string(i);
    x = relu(conv2d(x, param(tape, layer + "/w"), param(tape, layer + "/b"), encoder_.convs[i].stride));
  }
  Var flat = reshape(x, {x.value().size()});
  Var fc = relu(add(matmul(param(tape, "fc/w"), flat), param(tape, "fc/b")));
  return {x, fc};
}

LstmVars ActorCriticNet::recurrent_step(Tape& tape, Var input, LstmVars state) const {
  if (input.shape() != Shape{core_input_width()}) {
    throw ShapeError(name_ + ": recurrent input width " + shape_str(input.shape()) + " != (" +
                     std::to_string(core_input_width()) + ")");
  }
  const std::size_t h = hidden_;
  Var z = add(add(matmul(param(tape, "lstm/wx"), input), matmul(param(tape, "lstm/wh"), state.h)),
              param(tape, "lstm/b"));
  Var in_gate = sigmoid(slice(z, 0, h));
  Var forget_gate = sigmoid(slice(z, h, h));
  Var candidate = tanh(slice(z, 2 * h, h));
  Var out_gate = sigmoid(slice(z, 3 * h, h));
  Var c = add(mul(forget_gate, state.c), mul(in_gate, candidate));
  Var hidden = mul(out_gate, tanh(c));
  return {hidden, c};
}

PolicyOutput ActorCriticNet::heads(Tape& tape, Var core_input, LstmVars state) const {
  PolicyOutput out;
  out.state = recurrent_step(tape, core_input, state);
  out.logits = add(matmul(param(tape, "actor/w"), out.state.h), param(tape, "actor/b"));
  out.probs = softmax(out.logits);
  out.value = add(matmul(param(tape, "critic/w"), out.state.h), param(tape, "critic/b"));
  return out;
}

Tensor ActorCriticNet::features(const Tensor& obs) const {
  Tape scratch;
  return encode(scratch, scratch.constant(obs)).features.value();
}

WorkerNet::WorkerNet(WorkerConfig cfg, std::string name)
    : ActorCriticNet(std::move(name), cfg.encoder, cfg.subgoal_width, cfg.hidden, cfg.num_actions),
      cfg_(std::move(cfg)) {}

WorkerOutput WorkerNet::forward(Tape& tape, const Tensor& obs, const Tensor& subgoal_onehots, LstmVars state) const {
  if (subgoal_onehots.shape() != Shape{cfg_.subgoal_width}) {
    throw ShapeError(name_ + ": subgoal block " + shape_str(subgoal_onehots.shape()) + " != (" +
                     std::to_string(cfg_.subgoal_width) + ")");
  }
  const EncoderOutput enc = encode(tape, tape.constant(obs));
  const Var parts[] = {enc.fc, tape.constant(subgoal_onehots)};
  WorkerOutput out;
  static_cast<PolicyOutput&>(out) = heads(tape, concat(parts), state);
  out.features = enc.features;
  return out;
}

GoalPolicy::GoalPolicy(GoalPolicyConfig cfg)
    : ActorCriticNet("manager/" + std::string(kind_name(cfg.kind)), cfg.encoder, 1 + cfg.num_actions, cfg.hidden,
                     cfg.space),
      cfg_(std::move(cfg)) {}

PolicyOutput GoalPolicy::forward(Tape& tape, const ManagerObservation& mobs, LstmVars state) const {
  if (mobs.prev_action.shape() != Shape{cfg_.num_actions}) {
    throw ShapeError(name_ + ": previous action vector " + shape_str(mobs.prev_action.shape()) + " != (" +
                     std::to_string(cfg_.num_actions) + ")");
  }
  const EncoderOutput enc = encode(tape, tape.constant(mobs.observation));
  const Var parts[] = {enc.fc, tape.constant(Tensor::scalar(mobs.prev_extrinsic_reward)),
                       tape.constant(mobs.prev_action)};
  return heads(tape, concat(parts), state);
}

}  // namespace mghl
