#pragma once

// Per-episode randomization of door geometry, door dynamics, robot start
// state, and arm gains.
//
// Draw order is fixed and every draw is consumed even when its range is
// pinned, so pinning one quantity never shifts any other quantity's stream.

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "doorlab/door.hpp"
#include "doorlab/rng.hpp"
#include "doorlab/robot.hpp"

namespace doorlab {

struct Range {
  double lo = 0;
  double hi = 0;

  double mid() const { return 0.5 * (lo + hi); }
  double sample(RngStream& rng) const {
    double u = rng.uniform(lo, hi);  // consumed even when lo == hi
    return lo == hi ? lo : u;
  }
  void pin(double v) { lo = hi = v; }
};

// Door types indexed 0..3.  Order matters: it is the one-hot layout in the
// teacher observation and the row order of exported type probabilities.
inline constexpr int kDoorTypes = 4;

inline int door_type_index(OpeningDir dir, HingeSide side) {
  int i = dir == OpeningDir::pull ? 2 : 0;
  return i + (side == HingeSide::right ? 1 : 0);
}

inline OpeningDir door_type_dir(int idx) {
  return idx >= 2 ? OpeningDir::pull : OpeningDir::push;
}

inline HingeSide door_type_side(int idx) {
  return (idx % 2) ? HingeSide::right : HingeSide::left;
}

struct RandomizationRanges {
  // door type: uniform over the 4 combinations unless pinned
  int door_type_pin = -1;  // -1 = random

  // door geometry
  Range d_w{0.8, 1.0};     // panel width
  Range d_t{0.02, 0.06};   // panel thickness
  Range h_l{0.08, 0.12};   // lever length
  Range h_h{0.7, 1.3};     // spindle height
  Range h_o{0.03, 0.12};   // spindle inset from free edge

  // door dynamics
  Range mass{15.0, 75.0};
  Range tau_hinge{0.0, 30.0};
  double tau_hinge_zero_prob = 0.2;
  Range tau_handle{0.0, 3.0};
  double tau_handle_zero_prob = 0.2;
  Range k_ar{0.0, 4.0};               // quadratic damping
  Range alpha{1.5, 3.0};              // closer damping multiple of tau_hinge
  double damping_zero_prob = 0.4;     // zeroes both damping terms
  Range phi_max{deg2rad(15.0), deg2rad(90.0)};

  // arm gains, one draw per joint
  Range kp{40.0, 60.0};
  Range kd{3.0, 6.0};

  // robot start state
  Range d_wall{1.0, 2.0};    // distance from the wall plane
  Range d_center{-2.0, 2.0}; // lateral offset from the doorway center
  Range yaw{deg2rad(-180.0), deg2rad(180.0)};  // 0 faces through the doorway
  Range v_init{-0.5, 0.5};   // each base velocity component

  void validate() const {
    for (const auto& [name, r] : const_cast<RandomizationRanges*>(this)->entries())
      if (!(r->lo <= r->hi))
        throw std::invalid_argument("randomization: lo > hi for " + name);
    for (double p : {tau_hinge_zero_prob, tau_handle_zero_prob, damping_zero_prob})
      if (!(p >= 0.0 && p <= 1.0))
        throw std::invalid_argument("randomization: probability outside [0,1]");
    if (door_type_pin < -1 || door_type_pin >= kDoorTypes)
      throw std::invalid_argument("randomization: door_type pin outside 0..3");
  }

  std::vector<std::pair<std::string, Range*>> entries() {
    return {{"d_w", &d_w},           {"d_t", &d_t},
            {"h_l", &h_l},           {"h_h", &h_h},
            {"h_o", &h_o},           {"mass", &mass},
            {"tau_hinge", &tau_hinge}, {"tau_handle", &tau_handle},
            {"k_ar", &k_ar},         {"alpha", &alpha},
            {"phi_max", &phi_max},   {"kp", &kp},
            {"kd", &kd},             {"d_wall", &d_wall},
            {"d_center", &d_center}, {"yaw", &yaw},
            {"v_init", &v_init}};
  }

  Range* find(const std::string& name) {
    for (auto& [n, r] : entries())
      if (n == name) return r;
    return nullptr;
  }

  static const std::vector<std::string>& group(const std::string& name) {
    static const std::vector<std::string> geometry{"d_w", "d_t", "h_l", "h_h",
                                                   "h_o"};
    static const std::vector<std::string> dynamics{
        "mass", "tau_hinge", "tau_handle", "k_ar", "alpha", "phi_max", "kp",
        "kd"};
    static const std::vector<std::string> init{"d_wall", "d_center", "yaw",
                                               "v_init"};
    static const std::vector<std::string> none{};
    if (name == "geometry") return geometry;
    if (name == "dynamics") return dynamics;
    if (name == "init") return init;
    return none;
  }

  // Pin a quantity to a constant.  Probability knobs are addressable too.
  void pin(const std::string& name, double value) {
    if (name == "door_type") {
      door_type_pin = static_cast<int>(value);
      validate();
      return;
    }
    if (name == "tau_hinge_zero_prob") { tau_hinge_zero_prob = value; return; }
    if (name == "tau_handle_zero_prob") { tau_handle_zero_prob = value; return; }
    if (name == "damping_zero_prob") { damping_zero_prob = value; return; }
    Range* r = find(name);
    if (!r) throw std::invalid_argument("randomization: unknown name " + name);
    r->pin(value);
  }

  // Freeze a quantity (midpoint), a group, or "all".  Freezing anything that
  // owns a mixture probability also zeroes that probability.
  void freeze(const std::string& name) {
    if (name == "all") {
      for (const std::string& g : {"geometry", "dynamics", "init"}) freeze(g);
      door_type_pin = 0;
      return;
    }
    const auto& members = group(name);
    if (!members.empty()) {
      for (const std::string& m : members) freeze(m);
      return;
    }
    if (name == "door_type") {
      door_type_pin = 0;
      return;
    }
    Range* r = find(name);
    if (!r) throw std::invalid_argument("randomization: unknown name " + name);
    r->pin(r->mid());
    if (name == "tau_hinge") tau_hinge_zero_prob = 0.0;
    if (name == "tau_handle") tau_handle_zero_prob = 0.0;
    if (name == "alpha" || name == "k_ar") damping_zero_prob = 0.0;
  }
};

struct EpisodeSample {
  DoorSpec spec;
  DoorDynamicsParams dyn;
  BaseState base_init;
  ArmState arm_init;
  std::array<double, kArmJoints> kp{};
  std::array<double, kArmJoints> kd{};
  int door_type = 0;
};

// One episode's worth of draws.  The order below is the contract; reorder
// nothing.
inline EpisodeSample sample_episode(RngStream& rng,
                                    const RandomizationRanges& rr,
                                    const ArmParams& arm = ArmParams{}) {
  EpisodeSample s;

  int type = rng.uniform_int(kDoorTypes);
  if (rr.door_type_pin >= 0) type = rr.door_type_pin;
  s.door_type = type;
  s.spec.opening_dir = door_type_dir(type);
  s.spec.hinge_side = door_type_side(type);

  s.spec.width = rr.d_w.sample(rng);
  s.spec.thickness = rr.d_t.sample(rng);
  s.spec.handle_length = rr.h_l.sample(rng);
  s.spec.handle_height = rr.h_h.sample(rng);
  s.spec.handle_offset = rr.h_o.sample(rng);
  s.spec.wall_pose = PlanarPose{};

  s.dyn.mass = rr.mass.sample(rng);
  double tau_h = rr.tau_hinge.sample(rng);
  if (rng.bernoulli(rr.tau_hinge_zero_prob)) tau_h = 0.0;
  s.dyn.hinge_resistance = tau_h;
  double tau_l = rr.tau_handle.sample(rng);
  if (rng.bernoulli(rr.tau_handle_zero_prob)) tau_l = 0.0;
  s.dyn.handle_resistance = tau_l;
  s.dyn.air_damping = rr.k_ar.sample(rng);
  s.dyn.alpha_dc = rr.alpha.sample(rng);
  s.dyn.closer_damping = s.dyn.alpha_dc * s.dyn.hinge_resistance;
  if (rng.bernoulli(rr.damping_zero_prob)) {
    s.dyn.closer_damping = 0.0;
    s.dyn.air_damping = 0.0;
    s.dyn.alpha_dc = 0.0;
  }
  s.dyn.handle_max = rr.phi_max.sample(rng);
  s.dyn.unlatch_angle = kUnlatchFraction * s.dyn.handle_max;
  s.dyn.hinge_inertia = hinge_inertia(s.dyn.mass, s.spec.width);
  s.dyn.handle_inertia = kHandleInertia;

  for (int i = 0; i < kArmJoints; ++i)
    s.kp[static_cast<std::size_t>(i)] = rr.kp.sample(rng);
  for (int i = 0; i < kArmJoints; ++i)
    s.kd[static_cast<std::size_t>(i)] = rr.kd.sample(rng);

  // start side is local -x; 0 yaw faces through the doorway
  double dist = rr.d_wall.sample(rng);
  double lateral = rr.d_center.sample(rng);
  double yaw = rr.yaw.sample(rng);
  double vx = rr.v_init.sample(rng);
  double vy = rr.v_init.sample(rng);
  s.base_init.pos = s.spec.wall_pose.to_world(Vec2(-dist, lateral));
  s.base_init.yaw = wrap_angle(s.spec.wall_pose.yaw + yaw);
  s.base_init.vel = Vec2(vx, vy);
  s.base_init.yaw_rate = 0.0;
  s.base_init.tilt = 0.0;

  s.arm_init = ArmState{};
  s.arm_init.q = arm.q_default;
  s.arm_init.target = arm.q_default;

  s.spec.validate();
  return s;
}

}  // namespace doorlab
