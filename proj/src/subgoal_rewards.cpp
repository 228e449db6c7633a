#include "mghl/subgoal_rewards.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace mghl {

std::string_view kind_name(SubgoalKind kind) {
  switch (kind) {
    case SubgoalKind::kPixel: return "pc";
    case SubgoalKind::kDirection: return "dc";
    case SubgoalKind::kFeature: return "fc";
    case SubgoalKind::kRandom: return "rand";
  }
  throw std::invalid_argument("unknown subgoal kind");
}

SubgoalKind parse_kind(std::string_view name) {
  for (SubgoalKind k : kAllSubgoalKinds) {
    if (kind_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown subgoal kind '" + std::string(name) + "' (expected pc, dc, fc or rand)");
}

std::vector<SubgoalKind> parse_kind_list(std::string_view list) {
  std::vector<SubgoalKind> kinds;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    auto token = list.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!token.empty() && token.front() == ' ') token.remove_prefix(1);
    while (!token.empty() && token.back() == ' ') token.remove_suffix(1);
    if (!token.empty()) {
      const SubgoalKind k = parse_kind(token);
      for (SubgoalKind seen : kinds) {
        if (seen == k) throw std::invalid_argument("duplicate subgoal kind '" + std::string(token) + "'");
      }
      kinds.push_back(k);
    }
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (kinds.empty()) throw std::invalid_argument("subgoal list is empty");
  return kinds;
}

std::string format_kind_list(std::span<const SubgoalKind> kinds) {
  std::string out;
  for (SubgoalKind k : kinds) {
    if (!out.empty()) out += ',';
    out += kind_name(k);
  }
  return out;
}

Tensor Subgoal::onehot() const {
  if (index >= space) {
    throw std::out_of_range(std::string(kind_name(kind)) + " subgoal index " + std::to_string(index) +
                            " outside space " + std::to_string(space));
  }
  Tensor t({space});
  t[index] = 1.0;
  return t;
}

void RewardWeights::validate() const {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw std::invalid_argument("weights.eta must be positive");
  if (!std::isfinite(dc_unit)) throw std::invalid_argument("weights.dc_unit must be finite");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("weights.alpha out of range");
}

double pixel_control_reward(const Tensor& prev_obs, const Tensor& obs, const PixelBlockMask& block, double eta) {
  if (prev_obs.shape() != obs.shape() || obs.shape() != block.mask.shape()) {
    throw ShapeError("pixel_control_reward: shapes " + shape_str(prev_obs.shape()) + ", " + shape_str(obs.shape()) +
                     ", mask " + shape_str(block.mask.shape()) + " must agree");
  }
  double inside = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double d = obs[i] - prev_obs[i];
    const double sq = d * d;
    total += sq;
    inside += block.mask[i] * sq;
  }
  if (total == 0.0) return 0.0;
  return eta * inside / total;
}

double direction_control_reward(std::size_t action, Direction subgoal, std::span<const Direction> mapping,
                                double unit) {
  if (action >= mapping.size()) {
    throw std::out_of_range("direction_control_reward: action " + std::to_string(action) + " has no direction mapping");
  }
  return mapping[action] == subgoal ? unit : 0.0;
}

double feature_control_reward(const Tensor& prev_feats, const Tensor& feats, std::size_t channel, double eta) {
  if (feats.rank() != 3 || prev_feats.shape() != feats.shape()) {
    throw ShapeError("feature_control_reward: expected matching (C,H,W) features, got " +
                     shape_str(prev_feats.shape()) + " and " + shape_str(feats.shape()));
  }
  const std::size_t channels = feats.dim(0);
  if (channel >= channels) {
    throw std::out_of_range("feature_control_reward: channel " + std::to_string(channel) + " outside " +
                            std::to_string(channels) + " channels");
  }
  const std::size_t plane = feats.dim(1) * feats.dim(2);
  double total = 0.0;
  double chosen = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    double sq = 0.0;
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
      const double d = feats[i] - prev_feats[i];
      sq += d * d;
    }
    const double norm = std::sqrt(sq);
    total += norm;
    if (c == channel) chosen = norm;
  }
  if (total == 0.0) return 0.0;
  return eta * chosen / total;
}

double random_subgoal_reward(std::size_t action, std::size_t token, std::size_t space, double unit) {
  if (token >= space) {
    throw std::out_of_range("random subgoal token " + std::to_string(token) + " outside space " + std::to_string(space));
  }
  return action == token ? unit : 0.0;
}

double compose_intrinsic(std::span<const double> components) {
  return std::accumulate(components.begin(), components.end(), 0.0);
}

double mix_rewards(double r_int, double r_ext, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("mix_rewards: alpha out of range");
  return (1.0 - alpha) / 2.0 * r_int + alpha * r_ext;
}

}  // namespace mghl
