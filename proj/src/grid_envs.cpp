#include "mghl/grid_envs.hpp"

#include <algorithm>
#include <cstdlib>
#include <stdexcept>

namespace mghl {

Direction ActionSet::direction_of(std::size_t action) const {
  if (action >= direction_map.size()) throw std::out_of_range("unknown action " + std::to_string(action));
  return direction_map[action];
}

void EnvConfig::validate() const {
  if (name != "keydoor" && name != "collect" && name != "shiftgrid") {
    throw std::invalid_argument("env.name must be keydoor, collect or shiftgrid (got '" + name + "')");
  }
  if (size < 6) throw std::invalid_argument("env.size must be at least 6");
  if (name == "keydoor" && size < 8) throw std::invalid_argument("env.size must be at least 8 for keydoor");
  if (step_limit == 0) throw std::invalid_argument("env.step_limit must be positive");
  if (shift_period == 0) throw std::invalid_argument("env.shift_period must be positive");
  if (name != "keydoor" && (pellets == 0 || pellets > (size - 2) * (size - 2) - 1)) {
    throw std::invalid_argument("env.pellets out of range");
  }
}

int manhattan(Cell a, Cell b) { return std::abs(a.row - b.row) + std::abs(a.col - b.col); }

GridEnv::GridEnv(EnvConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

bool GridEnv::is_wall(Cell c) const {
  const int last = static_cast<int>(cfg_.size) - 1;
  return c.row <= 0 || c.col <= 0 || c.row >= last || c.col >= last;
}

Cell GridEnv::random_floor_cell(std::mt19937_64& rng) const {
  const auto interior = cfg_.size - 2;
  return Cell{1 + static_cast<int>(rng() % interior), 1 + static_cast<int>(rng() % interior)};
}

Tensor GridEnv::reset(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  steps_ = 0;
  done_ = false;
  place_items(rng);
  return observe();
}

Tensor GridEnv::observe() const {
  const std::size_t n = cfg_.size;
  Tensor obs(observation_shape());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const Cell cell{static_cast<int>(r), static_cast<int>(c)};
      obs[(kTerrainChannel * n + r) * n + c] = is_wall(cell) ? 1.0 : floor_value(cell);
    }
  }
  draw_items(obs);
  obs[(kAgentChannel * n + static_cast<std::size_t>(agent_.row)) * n + static_cast<std::size_t>(agent_.col)] = 1.0;
  return obs;
}

EnvStep GridEnv::step(std::size_t action) {
  if (done_) throw std::logic_error("step() called on a finished episode; call reset()");
  if (action >= actions_.size()) throw std::out_of_range("unknown action " + std::to_string(action));

  Cell target = agent_;
  switch (static_cast<Action>(action)) {
    case Action::kMoveNorth: --target.row; break;
    case Action::kMoveSouth: ++target.row; break;
    case Action::kMoveEast: ++target.col; break;
    case Action::kMoveWest: --target.col; break;
    case Action::kInteract: break;
  }
  if (!is_wall(target)) agent_ = target;

  ++steps_;
  EnvStep out;
  out.raw_ext_reward = on_action(action);
  out.scaled_ext_reward = out.raw_ext_reward / kRewardScale;
  if (steps_ >= cfg_.step_limit) done_ = true;
  out.done = done_;
  out.obs = observe();
  return out;
}

void KeyDoorEnv::place_items(std::mt19937_64& rng) {
  for (;;) {
    key_ = random_floor_cell(rng);
    door_ = random_floor_cell(rng);
    agent_ = random_floor_cell(rng);
    if (manhattan(key_, door_) >= kMinKeyDoorDistance && manhattan(agent_, key_) >= kMinStartKeyDistance &&
        !(agent_ == door_)) {
      break;
    }
  }
  has_key_ = false;
  opened_ = false;
}

double KeyDoorEnv::on_action(std::size_t action) {
  if (static_cast<Action>(action) != Action::kInteract) return 0.0;
  if (!has_key_ && agent_ == key_) {
    has_key_ = true;
    return kKeyReward;
  }
  if (has_key_ && agent_ == door_) {
    done_ = true;
    opened_ = true;
    return kDoorReward;
  }
  return 0.0;
}

void KeyDoorEnv::draw_items(Tensor& obs) const {
  const std::size_t n = cfg_.size;
  auto at = [&](Cell c) -> double& {
    return obs[(kItemChannel * n + static_cast<std::size_t>(c.row)) * n + static_cast<std::size_t>(c.col)];
  };
  at(door_) = 0.5;
  if (!has_key_) at(key_) = 1.0;
}

void CollectEnv::place_items(std::mt19937_64& rng) {
  agent_ = random_floor_cell(rng);
  pellets_.clear();
  while (pellets_.size() < cfg_.pellets) {
    const Cell c = random_floor_cell(rng);
    if (c == agent_ || std::find(pellets_.begin(), pellets_.end(), c) != pellets_.end()) continue;
    pellets_.push_back(c);
  }
}

double CollectEnv::on_action(std::size_t) {
  const auto it = std::find(pellets_.begin(), pellets_.end(), agent_);
  if (it == pellets_.end()) return 0.0;
  pellets_.erase(it);
  if (pellets_.empty()) done_ = true;
  return kPelletReward;
}

void CollectEnv::draw_items(Tensor& obs) const {
  const std::size_t n = cfg_.size;
  for (const Cell& c : pellets_) {
    obs[(kItemChannel * n + static_cast<std::size_t>(c.row)) * n + static_cast<std::size_t>(c.col)] = 1.0;
  }
}

double ShiftGridEnv::floor_value(Cell c) const {
  const std::size_t s = scene();
  if (s == 0) return 0.0;
  const auto phase = (static_cast<std::size_t>(c.row) * s + static_cast<std::size_t>(c.col) * (s + 1)) % 3;
  return 0.1 * static_cast<double>(phase);
}

std::unique_ptr<GridEnv> make_env(const EnvConfig& cfg) {
  cfg.validate();
  if (cfg.name == "keydoor") return std::make_unique<KeyDoorEnv>(cfg);
  if (cfg.name == "collect") return std::make_unique<CollectEnv>(cfg);
  return std::make_unique<ShiftGridEnv>(cfg);
}

std::vector<PixelBlockMask> block_partition(const Shape& obs_shape, std::size_t block_size) {
  if (obs_shape.size() != 3) throw ShapeError("block_partition: expected (C,H,W), got " + shape_str(obs_shape));
  const std::size_t channels = obs_shape[0], height = obs_shape[1], width = obs_shape[2];
  if (block_size == 0 || height % block_size != 0 || width % block_size != 0) {
    throw std::invalid_argument("block_partition: " + std::to_string(height) + "x" + std::to_string(width) +
                                " is not divisible into blocks of " + std::to_string(block_size));
  }
  const std::size_t rows = height / block_size, cols = width / block_size;
  std::vector<PixelBlockMask> blocks;
  blocks.reserve(rows * cols);
  for (std::size_t br = 0; br < rows; ++br) {
    for (std::size_t bc = 0; bc < cols; ++bc) {
      PixelBlockMask block{br * cols + bc, Tensor(obs_shape)};
      for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t r = br * block_size; r < (br + 1) * block_size; ++r) {
          for (std::size_t c = bc * block_size; c < (bc + 1) * block_size; ++c) {
            block.mask[(ch * height + r) * width + c] = 1.0;
          }
        }
      }
      blocks.push_back(std::move(block));
    }
  }
  return blocks;
}

std::size_t scripted_keydoor_action(const KeyDoorEnv& env) {
  const Cell target = env.has_key() ? env.door() : env.key();
  const Cell at = env.agent();
  if (at.row > target.row) return static_cast<std::size_t>(Action::kMoveNorth);
  if (at.row < target.row) return static_cast<std::size_t>(Action::kMoveSouth);
  if (at.col < target.col) return static_cast<std::size_t>(Action::kMoveEast);
  if (at.col > target.col) return static_cast<std::size_t>(Action::kMoveWest);
  return static_cast<std::size_t>(Action::kInteract);
}

}  // namespace mghl
