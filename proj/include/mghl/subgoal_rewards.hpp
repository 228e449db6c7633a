#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mghl/tensor.hpp"

namespace mghl {

/// Subgoal types. The enumerator order is the fixed one-hot layout order.
enum class SubgoalKind { kPixel = 0, kDirection = 1, kFeature = 2, kRandom = 3 };

inline constexpr std::array<SubgoalKind, 4> kAllSubgoalKinds = {SubgoalKind::kPixel, SubgoalKind::kDirection,
                                                               SubgoalKind::kFeature, SubgoalKind::kRandom};

std::string_view kind_name(SubgoalKind kind);  // "pc", "dc", "fc", "rand"
SubgoalKind parse_kind(std::string_view name);
/// Parses "pc,fc,dc" style lists. Rejects duplicates and empty lists.
std::vector<SubgoalKind> parse_kind_list(std::string_view list);
std::string format_kind_list(std::span<const SubgoalKind> kinds);

enum class Direction { kNorth = 0, kSouth = 1, kEast = 2, kWest = 3, kStill = 4 };
inline constexpr std::size_t kNumDirections = 5;

struct Subgoal {
  SubgoalKind kind = SubgoalKind::kPixel;
  std::size_t index = 0;
  std::size_t space = 1;

  Tensor onehot() const;
};

struct PixelBlockMask {
  std::size_t block_index = 0;
  Tensor mask;  // 0/1, shaped like the observation
};

struct RewardWeights {
  double eta = 0.05;
  double dc_unit = 0.01;
  double alpha = 0.8;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// eta * ||mask .* (obs - prev)||^2 / ||obs - prev||^2, or 0 for identical frames.
double pixel_control_reward(const Tensor& prev_obs, const Tensor& obs, const PixelBlockMask& block, double eta);

/// unit if the action's direction equals the subgoal direction.
double direction_control_reward(std::size_t action, Direction subgoal, std::span<const Direction> mapping,
                                double unit = 0.01);

/// eta * ||f_k(t) - f_k(t-1)|| / sum_k' ||f_k'(t) - f_k'(t-1)|| with L2 norms per channel of a
/// (channels, H, W) feature tensor; 0 when no channel changed.
double feature_control_reward(const Tensor& prev_feats, const Tensor& feats, std::size_t channel, double eta);

/// unit if the action equals the random token.
double random_subgoal_reward(std::size_t action, std::size_t token, std::size_t space, double unit = 0.01);

double compose_intrinsic(std::span<const double> components);

/// ((1 - alpha) / 2) * r_int + alpha * r_ext. The coefficient does not depend on
/// how many subgoal types contributed to r_int.
double mix_rewards(double r_int, double r_ext, double alpha);

}  // namespace mghl
