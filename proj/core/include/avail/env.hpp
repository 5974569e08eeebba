#pragma once

#include <Eigen/Dense>
#include <string_view>

#include "avail/common.hpp"

namespace avail::env {

/// Geometry and thresholds of the TetherValve arena. Defaults give a
/// 0.55 m x 0.55 m table with a 0.15 m tether and a 0.1 m success radius.
struct EnvConfig {
  double arena_half_width = 0.275;
  double arena_height = 0.3;
  double tether_radius = 0.15;
  double max_step = 0.02;
  double grasp_radius = 0.05;
  double success_radius = 0.1;
  double pickup_height = 0.2;
  double pickup_target_x = 0.0;
  double pickup_target_y = 0.0;
  double reposition_max_z = 0.05;
  double hand_init_z = 0.1;

  Eigen::Vector3d pickup_target() const {
    return {pickup_target_x, pickup_target_y, pickup_height};
  }
};

enum class Phase { Reach = 0, Reposition = 1, Pickup = 2 };
constexpr int kNumPhases = 3;

Phase phase_from_name(std::string_view name);  // throws ValidationError on unknown names
std::string_view phase_name(Phase phase);

struct EnvState {
  Eigen::Vector3d hand_pos = Eigen::Vector3d::Zero();
  double grip = 0.0;
  Eigen::Vector3d obj_pos = Eigen::Vector3d::Zero();
  bool held = false;
  long step_count = 0;
};

/// delta in [-1,1]^3 (scaled by max_step), grip command in [-1,1].
struct Action {
  Eigen::Vector3d delta = Eigen::Vector3d::Zero();
  double grip_cmd = -1.0;

  static Action from_vector(const Eigen::Vector4d& v);
  Eigen::Vector4d to_vector() const;
};

constexpr int kObservationDim = 8;
constexpr int kActionDim = 4;

/// [hand_x, hand_y, hand_z, grip, obj_x, obj_y, obj_z, held]
using Observation = Eigen::Matrix<double, kObservationDim, 1>;

/// Hand at a uniform random arena position (z fixed), object uniform over the
/// tether disk on the table, nothing held.
EnvState init(const EnvConfig& cfg, std::uint64_t seed);

/// Pure single-step dynamics: move and clamp the hand, engage/release the
/// grasp, track the held object, project onto the tether disk, drop on
/// release. Throws NumericError on non-finite actions.
EnvState step(const EnvConfig& cfg, const EnvState& state, const Action& action);

bool success(const EnvConfig& cfg, const EnvState& state, Phase task);

Observation observe(const EnvState& state);

/// Proportional controller toward the task's success set; test oracle only.
Action scripted_expert(const EnvConfig& cfg, const EnvState& state, Phase task);

/// True when the state satisfies the tether, arena-bound and held-consistency
/// invariants (with tol slack on the tether bound).
bool check_invariants(const EnvConfig& cfg, const EnvState& state, double tol = 1e-12);

/// Environment handle for training loops; counts init calls so the reset-free
/// contract can be audited.
class CountingEnv {
 public:
  explicit CountingEnv(const EnvConfig& cfg) : cfg_(cfg) {}

  void initialize(std::uint64_t seed) {
    state_ = init(cfg_, seed);
    ++init_calls_;
  }
  void apply(const Action& action) {
    state_ = step(cfg_, state_, action);
    ++steps_;
  }
  void restore(const EnvState& state, long init_calls, long steps) {
    state_ = state;
    init_calls_ = init_calls;
    steps_ = steps;
  }

  const EnvConfig& config() const { return cfg_; }
  const EnvState& state() const { return state_; }
  long init_calls() const { return init_calls_; }
  long steps() const { return steps_; }

 private:
  EnvConfig cfg_;
  EnvState state_;
  long init_calls_ = 0;
  long steps_ = 0;
};

}  // namespace avail::env
