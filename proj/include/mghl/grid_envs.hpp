#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mghl/subgoal_rewards.hpp"
#include "mghl/tensor.hpp"

namespace mghl {

enum class Action : std::size_t { kMoveNorth = 0, kMoveSouth = 1, kMoveEast = 2, kMoveWest = 3, kInteract = 4 };
inline constexpr std::size_t kNumActions = 5;

/// Observation channels.
inline constexpr std::size_t kTerrainChannel = 0;
inline constexpr std::size_t kAgentChannel = 1;
inline constexpr std::size_t kItemChannel = 2;
inline constexpr std::size_t kObsChannels = 3;

inline constexpr double kRewardScale = 100.0;

struct ActionSet {
  std::array<Direction, kNumActions> direction_map = {Direction::kNorth, Direction::kSouth, Direction::kEast,
                                                      Direction::kWest, Direction::kStill};

  std::size_t size() const { return direction_map.size(); }
  Direction direction_of(std::size_t action) const;
};

struct EnvStep {
  Tensor obs;
  double raw_ext_reward = 0.0;
  double scaled_ext_reward = 0.0;
  bool done = false;
};

struct EnvConfig {
  std::string name = "keydoor";  // keydoor | collect | shiftgrid
  std::size_t size = 12;
  std::size_t step_limit = 300;
  std::uint64_t seed = 1;  // layout seed used by reset()
  std::size_t pellets = 8;
  std::size_t shift_period = 50;

  void validate() const;
};

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

int manhattan(Cell a, Cell b);

/// Walled square room of size x size cells. Subclasses define items and rewards.
class GridEnv {
 public:
  explicit GridEnv(EnvConfig cfg);
  virtual ~GridEnv() = default;

  Tensor reset(std::uint64_t seed);
  Tensor reset() { return reset(cfg_.seed); }
  EnvStep step(std::size_t action);

  const ActionSet& actions() const { return actions_; }
  Shape observation_shape() const { return {kObsChannels, cfg_.size, cfg_.size}; }
  const EnvConfig& config() const { return cfg_; }
  bool done() const { return done_; }
  std::size_t step_count() const { return steps_; }
  Cell agent() const { return agent_; }
  Tensor observe() const;
  /// True once the episode's task is complete.
  virtual bool solved() const { return false; }

 protected:
  bool is_wall(Cell c) const;
  virtual void place_items(std::mt19937_64& rng) = 0;
  /// Returns raw reward; may set done_.
  virtual double on_action(std::size_t action) = 0;
  virtual void draw_items(Tensor& obs) const = 0;
  virtual double floor_value(Cell) const { return 0.0; }
  Cell random_floor_cell(std::mt19937_64& rng) const;

  EnvConfig cfg_;
  ActionSet actions_;
  Cell agent_;
  std::size_t steps_ = 0;
  bool done_ = true;
};

/// Sparse regime: fetch the key (raw 100), then open the door with it (raw 300).
class KeyDoorEnv : public GridEnv {
 public:
  static constexpr double kKeyReward = 100.0;
  static constexpr double kDoorReward = 300.0;
  static constexpr int kMinKeyDoorDistance = 8;
  static constexpr int kMinStartKeyDistance = 6;

  explicit KeyDoorEnv(EnvConfig cfg) : GridEnv(std::move(cfg)) {}

  Cell key() const { return key_; }
  Cell door() const { return door_; }
  bool has_key() const { return has_key_; }
  bool key_present() const { return !has_key_; }
  bool solved() const override { return opened_; }

 protected:
  void place_items(std::mt19937_64& rng) override;
  double on_action(std::size_t action) override;
  void draw_items(Tensor& obs) const override;

 private:
  Cell key_;
  Cell door_;
  bool has_key_ = false;
  bool opened_ = false;
};

/// Dense regime: raw 10 per pellet, collected by stepping onto it.
class CollectEnv : public GridEnv {
 public:
  static constexpr double kPelletReward = 10.0;

  explicit CollectEnv(EnvConfig cfg) : GridEnv(std::move(cfg)) {}
  std::size_t pellets_left() const { return pellets_.size(); }
  bool solved() const override { return steps_ > 0 && pellets_.empty(); }

 protected:
  void place_items(std::mt19937_64& rng) override;
  double on_action(std::size_t action) override;
  void draw_items(Tensor& obs) const override;

  std::vector<Cell> pellets_;
};

/// Collect whose floor texture changes every shift_period steps.
class ShiftGridEnv : public CollectEnv {
 public:
  static constexpr std::size_t kNumScenes = 4;

  explicit ShiftGridEnv(EnvConfig cfg) : CollectEnv(std::move(cfg)) {}
  std::size_t scene() const { return (step_count() / cfg_.shift_period) % kNumScenes; }

 protected:
  double floor_value(Cell c) const override;
};

std::unique_ptr<GridEnv> make_env(const EnvConfig& cfg);

/// Splits the spatial plane into block_size x block_size tiles, row-major. Each
/// mask covers every channel of its tile.
std::vector<PixelBlockMask> block_partition(const Shape& obs_shape, std::size_t block_size);

/// Walks straight to the key, interacts, walks to the door, interacts.
std::size_t scripted_keydoor_action(const KeyDoorEnv& env);

}  // namespace mghl
