#include "avail/env.hpp"

#include <algorithm>
#include <cmath>

namespace avail::env {

using Eigen::Vector2d;
using Eigen::Vector3d;
using Eigen::Vector4d;

Phase phase_from_name(std::string_view name) {
  if (name == "reach") return Phase::Reach;
  if (name == "reposition") return Phase::Reposition;
  if (name == "pickup") return Phase::Pickup;
  throw ValidationError("unknown task name: " + std::string(name));
}

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::Reach:
      return "reach";
    case Phase::Reposition:
      return "reposition";
    case Phase::Pickup:
      return "pickup";
  }
  throw ValidationError("unknown task id");
}

Action Action::from_vector(const Vector4d& v) {
  Action a;
  a.delta = v.head<3>().cwiseMax(-1.0).cwiseMin(1.0);
  a.grip_cmd = std::clamp(v(3), -1.0, 1.0);
  return a;
}

Vector4d Action::to_vector() const {
  Vector4d v;
  v.head<3>() = delta;
  v(3) = grip_cmd;
  return v;
}

EnvState init(const EnvConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  EnvState s;
  s.hand_pos.x() = uniform_range(rng, -cfg.arena_half_width, cfg.arena_half_width);
  s.hand_pos.y() = uniform_range(rng, -cfg.arena_half_width, cfg.arena_half_width);
  s.hand_pos.z() = cfg.hand_init_z;
  s.grip = 0.0;
  // uniform over the tether disk area
  const double r = cfg.tether_radius * std::sqrt(uniform_double(rng));
  const double theta = uniform_range(rng, 0.0, 2.0 * M_PI);
  s.obj_pos = {r * std::cos(theta), r * std::sin(theta), 0.0};
  s.held = false;
  s.step_count = 0;
  return s;
}

namespace {

double horizontal_distance(const Vector3d& a, const Vector3d& b) {
  return (a.head<2>() - b.head<2>()).norm();
}

bool within_grasp(const EnvConfig& cfg, const Vector3d& hand, const Vector3d& obj) {
  return horizontal_distance(hand, obj) < cfg.grasp_radius &&
         std::abs(hand.z() - obj.z()) < cfg.grasp_radius;
}

Vector3d clamp_hand(const EnvConfig& cfg, const Vector3d& p) {
  return {std::clamp(p.x(), -cfg.arena_half_width, cfg.arena_half_width),
          std::clamp(p.y(), -cfg.arena_half_width, cfg.arena_half_width),
          std::clamp(p.z(), 0.0, cfg.arena_height)};
}

}  // namespace

EnvState step(const EnvConfig& cfg, const EnvState& state, const Action& action) {
  if (!action.delta.allFinite() || !std::isfinite(action.grip_cmd))
    throw NumericError("env::step: non-finite action");

  Vector3d delta = action.delta.cwiseMax(-1.0).cwiseMin(1.0);
  const double grip_cmd = std::clamp(action.grip_cmd, -1.0, 1.0);

  EnvState next = state;
  const Vector3d new_hand = clamp_hand(cfg, state.hand_pos + cfg.max_step * delta);

  if (state.held) {
    if (grip_cmd > 0.0) {
      // rigid attachment: the object follows the hand's realized displacement
      next.obj_pos = state.obj_pos + (new_hand - state.hand_pos);
    } else {
      next.held = false;
      next.obj_pos.z() = 0.0;  // instant ballistic drop
    }
  } else if (grip_cmd > 0.0 && within_grasp(cfg, new_hand, state.obj_pos)) {
    next.held = true;  // grasp engages; object does not move at the grasp instant
  }
  next.hand_pos = new_hand;
  next.grip = std::max(0.0, grip_cmd);

  next.obj_pos.z() = std::clamp(next.obj_pos.z(), 0.0, cfg.arena_height);

  // tether: project the object radially back onto the disk
  const double horiz = next.obj_pos.head<2>().norm();
  if (horiz > cfg.tether_radius) {
    next.obj_pos.head<2>() *= cfg.tether_radius / horiz;
  }

  // the tether can yank the object out of the grasp
  if (next.held && !within_grasp(cfg, next.hand_pos, next.obj_pos)) {
    next.held = false;
    next.obj_pos.z() = 0.0;
  }

  next.step_count = state.step_count + 1;
  return next;
}

bool success(const EnvConfig& cfg, const EnvState& state, Phase task) {
  switch (task) {
    case Phase::Reach:
      return (state.hand_pos - state.obj_pos).norm() < cfg.success_radius;
    case Phase::Reposition:
      return state.obj_pos.head<2>().norm() < cfg.success_radius &&
             state.obj_pos.z() < cfg.reposition_max_z;
    case Phase::Pickup:
      return (state.obj_pos - cfg.pickup_target()).norm() < cfg.success_radius;
  }
  throw ValidationError("success: unknown task id");
}

Observation observe(const EnvState& state) {
  Observation obs;
  obs << state.hand_pos.x(), state.hand_pos.y(), state.hand_pos.z(), state.grip,
      state.obj_pos.x(), state.obj_pos.y(), state.obj_pos.z(), state.held ? 1.0 : 0.0;
  return obs;
}

namespace {

Vector3d toward(const EnvConfig& cfg, const Vector3d& from, const Vector3d& to) {
  return ((to - from) / cfg.max_step).cwiseMax(-1.0).cwiseMin(1.0);
}

// drive the hand into grasp range of the object, closing the grip on the way
Action approach_and_grasp(const EnvConfig& cfg, const EnvState& state) {
  Action a;
  const Vector3d grasp_point = state.obj_pos + Vector3d(0, 0, 0.4 * cfg.grasp_radius);
  a.delta = toward(cfg, state.hand_pos, grasp_point);
  a.grip_cmd = 1.0;
  return a;
}

}  // namespace

Action scripted_expert(const EnvConfig& cfg, const EnvState& state, Phase task) {
  Action a;
  switch (task) {
    case Phase::Reach: {
      a.grip_cmd = -1.0;
      if (!success(cfg, state, task)) a.delta = toward(cfg, state.hand_pos, state.obj_pos);
      return a;
    }
    case Phase::Reposition: {
      if (success(cfg, state, task)) {
        a.grip_cmd = -1.0;
        return a;
      }
      if (!state.held) return approach_and_grasp(cfg, state);
      if (state.obj_pos.head<2>().norm() < 0.8 * cfg.success_radius) {
        a.grip_cmd = -1.0;  // drop it at the center
        return a;
      }
      Vector3d obj_target(0, 0, state.obj_pos.z());
      a.delta = toward(cfg, state.obj_pos, obj_target);
      a.delta.z() = std::clamp((0.03 - state.hand_pos.z()) / cfg.max_step, -1.0, 1.0);
      a.grip_cmd = 1.0;
      return a;
    }
    case Phase::Pickup: {
      if (success(cfg, state, task)) {
        a.grip_cmd = state.held ? 1.0 : -1.0;  // keep holding at the target
        return a;
      }
      if (!state.held) return approach_and_grasp(cfg, state);
      a.delta = toward(cfg, state.obj_pos, cfg.pickup_target());
      a.grip_cmd = 1.0;
      return a;
    }
  }
  throw ValidationError("scripted_expert: unknown task id");
}

bool check_invariants(const EnvConfig& cfg, const EnvState& state, double tol) {
  const double hw = cfg.arena_half_width;
  if (!(std::abs(state.hand_pos.x()) <= hw && std::abs(state.hand_pos.y()) <= hw)) return false;
  if (!(state.hand_pos.z() >= 0.0 && state.hand_pos.z() <= cfg.arena_height)) return false;
  if (!(state.grip >= 0.0 && state.grip <= 1.0)) return false;
  if (state.obj_pos.head<2>().norm() > cfg.tether_radius + tol) return false;
  if (!(state.obj_pos.z() >= 0.0 && state.obj_pos.z() <= cfg.arena_height)) return false;
  if (state.held) {
    if (horizontal_distance(state.hand_pos, state.obj_pos) > cfg.grasp_radius + tol) return false;
    if (std::abs(state.hand_pos.z() - state.obj_pos.z()) > cfg.grasp_radius + tol) return false;
  } else if (state.obj_pos.z() != 0.0) {
    return false;  // an unheld object rests on the table
  }
  return true;
}

}  // namespace avail::env
