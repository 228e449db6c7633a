#include <doctest.h>

#include "mghl/grid_envs.hpp"

using namespace mghl;

namespace {

std::size_t count_ones(const Tensor& obs, std::size_t channel) {
  const std::size_t hw = obs.dim(1) * obs.dim(2);
  std::size_t n = 0;
  for (std::size_t i = 0; i < hw; ++i) n += obs[channel * hw + i] == 1.0;
  return n;
}

std::size_t index_of(const EnvConfig& cfg, std::size_t channel, Cell c) {
  return (channel * cfg.size + static_cast<std::size_t>(c.row)) * cfg.size + static_cast<std::size_t>(c.col);
}

EnvConfig keydoor() { return EnvConfig{}; }

}  // namespace

TEST_CASE("keydoor reset") {
  KeyDoorEnv env(keydoor());
  const Tensor a = env.reset(1);
  const Tensor b = env.reset(1);
  CHECK(a == b);
  CHECK(a.shape() == Shape{3, 12, 12});
  CHECK(count_ones(a, kAgentChannel) == 1);
  CHECK(a[index_of(env.config(), kItemChannel, env.key())] == 1.0);
  CHECK(a[index_of(env.config(), kItemChannel, env.door())] == 0.5);
  CHECK(a[index_of(env.config(), kAgentChannel, env.agent())] == 1.0);
  CHECK(manhattan(env.key(), env.door()) >= 8);
  CHECK(manhattan(env.agent(), env.key()) >= 6);
  CHECK(env.step_count() == 0);
  CHECK_FALSE(env.done());
  for (double v : a.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("keydoor rewards") {
  KeyDoorEnv env(keydoor());
  env.reset(4);
  // Walk to the key with the scripted policy, stopping before interacting.
  while (!(env.agent() == env.key())) env.step(scripted_keydoor_action(env));
  const EnvStep s = env.step(static_cast<std::size_t>(Action::kInteract));
  CHECK(s.raw_ext_reward == 100.0);
  CHECK(s.scaled_ext_reward == 1.0);
  CHECK(env.has_key());
  CHECK(s.obs[index_of(env.config(), kItemChannel, env.key())] == 0.0);
  CHECK(env.step(static_cast<std::size_t>(Action::kInteract)).raw_ext_reward == 0.0);

  while (!(env.agent() == env.door())) env.step(scripted_keydoor_action(env));
  const EnvStep d = env.step(static_cast<std::size_t>(Action::kInteract));
  CHECK(d.raw_ext_reward == 300.0);
  CHECK(d.scaled_ext_reward == 3.0);
  CHECK(d.done);
  CHECK(env.solved());
  CHECK_THROWS_AS(env.step(0), std::logic_error);
}

TEST_CASE("door without key gives nothing") {
  KeyDoorEnv env(keydoor());
  env.reset(2);
  const Cell door = env.door();
  for (int guard = 0; guard < 100 && !(env.agent() == door); ++guard) {
    const Cell a = env.agent();
    std::size_t act = a.row > door.row ? 0 : a.row < door.row ? 1 : a.col < door.col ? 2 : 3;
    CHECK(env.step(act).raw_ext_reward == 0.0);
  }
  REQUIRE(env.agent() == door);
  CHECK(env.step(static_cast<std::size_t>(Action::kInteract)).raw_ext_reward == 0.0);
  CHECK_FALSE(env.done());
}

TEST_CASE("walls block movement") {
  KeyDoorEnv env(keydoor());
  env.reset(1);
  while (env.agent().row > 1) env.step(static_cast<std::size_t>(Action::kMoveNorth));
  const Cell before = env.agent();
  const EnvStep s = env.step(static_cast<std::size_t>(Action::kMoveNorth));
  CHECK(env.agent() == before);
  CHECK(s.raw_ext_reward == 0.0);
}

TEST_CASE("step limit ends the episode") {
  EnvConfig cfg = keydoor();
  cfg.step_limit = 300;
  KeyDoorEnv env(cfg);
  env.reset(1);
  EnvStep s;
  for (std::size_t i = 0; i < 300; ++i) {
    CHECK_FALSE(env.done());
    s = env.step(static_cast<std::size_t>(Action::kMoveNorth));
  }
  CHECK(s.done);
  CHECK(s.raw_ext_reward == 0.0);
  CHECK(env.step_count() == 300);
}

TEST_CASE("same seed and actions give the same trajectory") {
  for (const char* name : {"keydoor", "collect", "shiftgrid"}) {
    EnvConfig cfg;
    cfg.name = name;
    auto a = make_env(cfg);
    auto b = make_env(cfg);
    CHECK(a->reset(9) == b->reset(9));
    std::mt19937_64 rng(5);
    while (!a->done()) {
      const std::size_t act = rng() % kNumActions;
      const EnvStep x = a->step(act), y = b->step(act);
      REQUIRE(x.obs == y.obs);
      REQUIRE(x.raw_ext_reward == y.raw_ext_reward);
      REQUIRE(x.done == y.done);
    }
  }
}

TEST_CASE("keydoor rewards are sparse and bounded") {
  KeyDoorEnv env(keydoor());
  std::mt19937_64 rng(11);
  for (int ep = 0; ep < 200; ++ep) {
    env.reset(static_cast<std::uint64_t>(ep));
    int nonzero = 0;
    double total = 0.0;
    while (!env.done()) {
      // Bias towards interacting so the key is picked up now and then.
      const std::size_t act = rng() % 3 == 0 ? 4 : rng() % 4;
      const EnvStep s = env.step(act);
      CHECK((s.scaled_ext_reward == 0.0 || s.scaled_ext_reward == 1.0 || s.scaled_ext_reward == 3.0));
      CHECK(s.scaled_ext_reward == s.raw_ext_reward / 100.0);
      if (s.raw_ext_reward != 0.0) ++nonzero;
      total += s.scaled_ext_reward;
    }
    CHECK(nonzero <= 2);
    CHECK(total <= 4.0);
  }
}

TEST_CASE("scripted policy solves keydoor within the step limit") {
  KeyDoorEnv env(keydoor());
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    env.reset(seed);
    double total = 0.0;
    while (!env.done()) total += env.step(scripted_keydoor_action(env)).scaled_ext_reward;
    CHECK(total == 4.0);
    CHECK(env.step_count() < 300);
    CHECK(env.solved());
  }
}

TEST_CASE("collect pays per pellet") {
  EnvConfig cfg;
  cfg.name = "collect";
  cfg.pellets = 30;
  CollectEnv env(cfg);
  env.reset(3);
  std::mt19937_64 rng(1);
  double total = 0.0;
  while (!env.done()) {
    const EnvStep s = env.step(rng() % 4);
    CHECK((s.raw_ext_reward == 0.0 || s.raw_ext_reward == 10.0));
    total += s.raw_ext_reward;
  }
  CHECK(total == 10.0 * static_cast<double>(30 - env.pellets_left()));
  CHECK(total > 0.0);
}

TEST_CASE("shiftgrid changes scene every period") {
  EnvConfig cfg;
  cfg.name = "shiftgrid";
  ShiftGridEnv env(cfg);
  Tensor obs = env.reset(1);
  CHECK(env.scene() == 0);
  auto terrain = [&](const Tensor& o) {
    return std::vector<double>(o.data().begin(), o.data().begin() + 144);
  };
  const auto t0 = terrain(obs);
  for (int i = 0; i < 49; ++i) obs = env.step(4).obs;
  CHECK(env.scene() == 0);
  CHECK(terrain(obs) == t0);
  obs = env.step(4).obs;
  CHECK(env.scene() == 1);
  CHECK(terrain(obs) != t0);
  for (int i = 0; i < 150; ++i) obs = env.step(4).obs;
  CHECK(env.scene() == 0);
  CHECK(terrain(obs) == t0);
}

TEST_CASE("action directions") {
  ActionSet actions;
  CHECK(actions.direction_of(0) == Direction::kNorth);
  CHECK(actions.direction_of(4) == Direction::kStill);
  for (std::size_t a = 0; a < kNumActions; ++a) CHECK_NOTHROW(actions.direction_of(a));
  CHECK_THROWS_AS(actions.direction_of(5), std::out_of_range);
}

TEST_CASE("block partition") {
  CHECK(block_partition({1, 84, 84}, 14).size() == 36);
  const auto blocks = block_partition({3, 12, 12}, 4);
  REQUIRE(blocks.size() == 9);
  Tensor cover({3, 12, 12});
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < cover.size(); ++i) cover[i] += b.mask[i];
  }
  CHECK(cover == Tensor({3, 12, 12}, 1.0));
  CHECK_THROWS_AS(block_partition({3, 12, 12}, 5), std::invalid_argument);
}

TEST_CASE("config validation") {
  EnvConfig cfg;
  cfg.name = "maze";
  CHECK_THROWS_AS(make_env(cfg), std::invalid_argument);
  cfg = {};
  cfg.size = 7;
  CHECK_THROWS_AS(make_env(cfg), std::invalid_argument);
}
