#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "doorlab/geometry.hpp"

namespace doorlab {

enum class OpeningDir { push, pull };
enum class HingeSide { left, right };

constexpr double kPanelHeight = 2.0;       // m
constexpr double kHandleStandoff = 0.05;   // lever spindle proud of the panel face, m
constexpr double kWallThickness = 0.10;    // m
constexpr double kWallLength = 3.0;        // wall extent each side of the doorway, m
constexpr double kUnlatchFraction = 0.8;   // phi_u / phi_max
constexpr double kHandleInertia = 0.05;    // kg m^2
constexpr double kDefaultHingeLimit = deg2rad(110.0);

struct DoorSpec {
  OpeningDir opening_dir = OpeningDir::push;
  HingeSide hinge_side = HingeSide::right;
  double width = 0.9;            // panel width = doorway width, m
  double thickness = 0.04;       // m
  double handle_length = 0.10;   // lever length, m
  double handle_height = 1.0;    // spindle height, m
  double handle_offset = 0.06;   // spindle inset from the free edge, m
  PlanarPose wall_pose;          // doorway center; local +x = through direction
  double panel_height = kPanelHeight;
  double hinge_limit = kDefaultHingeLimit;

  void validate() const {
    if (!(width > 0) || !(thickness > 0) || !(handle_length > 0))
      throw std::invalid_argument("door spec: non-positive dimension");
    if (!(handle_offset >= 0) || handle_offset + handle_length >= width)
      throw std::invalid_argument("door spec: handle does not fit on panel");
    if (!(hinge_limit > 0)) throw std::invalid_argument("door spec: hinge limit");
  }
};

struct DoorDynamicsParams {
  double mass = 30.0;             // kg
  double hinge_resistance = 0.0;  // pretension toward closed, N m
  double handle_resistance = 0.0; // pretension toward released, N m
  double air_damping = 0.0;       // quadratic hinge damping, N m s^2
  double closer_damping = 0.0;    // linear hinge damping, N m s
  double alpha_dc = 0.0;          // sampling rule: closer_damping = alpha_dc * hinge_resistance
  double handle_max = deg2rad(60.0);
  double unlatch_angle = kUnlatchFraction * deg2rad(60.0);
  double hinge_inertia = 8.1;     // kg m^2
  double handle_inertia = kHandleInertia;
};

struct DoorState {
  double hinge_angle = 0;   // theta, 0 = closed
  double hinge_rate = 0;
  double handle_angle = 0;  // phi, 0 = released
  double handle_rate = 0;
  bool latched = true;      // latched implies hinge held at 0
};

// uniform slab swinging about one edge
inline double hinge_inertia(double mass, double width) {
  if (!(mass > 0) || !(width > 0))
    throw std::invalid_argument("hinge_inertia: mass and width must be positive");
  return mass * width * width / 3.0;
}

// +1 if the hinge sits at doorway-local +y
inline double hinge_sign(const DoorSpec& s) {
  return s.hinge_side == HingeSide::right ? 1.0 : -1.0;
}

// world-z rotation sense of opening (+1 = ccw)
inline double swing_sign(const DoorSpec& s) {
  double d = s.opening_dir == OpeningDir::push ? 1.0 : -1.0;
  return d * hinge_sign(s);
}

inline Vec2 hinge_point_xy(const DoorSpec& s) {
  return s.wall_pose.to_world(Vec2(0.0, hinge_sign(s) * s.width / 2.0));
}

// unit vector from hinge toward the free edge at opening angle theta, world frame
inline Vec2 panel_dir(const DoorSpec& s, double theta) {
  Vec2 u0(0.0, -hinge_sign(s));
  return rot2(s.wall_pose.yaw + swing_sign(s) * theta, u0);
}

struct DoorTorques {
  double hinge = 0;
  double handle = 0;
};

// net joint torques under pretension, damping, and boundary stiction
inline DoorTorques net_torques(const DoorState& st, const DoorDynamicsParams& p,
                               double applied_hinge, double applied_handle) {
  DoorTorques out;
  if (st.hinge_angle == 0.0 && st.hinge_rate == 0.0) {
    out.hinge = applied_hinge > p.hinge_resistance ? applied_hinge - p.hinge_resistance : 0.0;
  } else {
    out.hinge = applied_hinge - p.hinge_resistance -
                p.closer_damping * st.hinge_rate -
                p.air_damping * st.hinge_rate * std::abs(st.hinge_rate);
  }
  if (st.handle_angle == 0.0 && st.handle_rate == 0.0) {
    out.handle = applied_handle > p.handle_resistance ? applied_handle - p.handle_resistance : 0.0;
  } else {
    out.handle = applied_handle - p.handle_resistance;
  }
  return out;
}

// one semi-implicit Euler substep; clamps zero the violating rate
inline DoorState step_door(const DoorState& st, const DoorSpec& spec,
                           const DoorDynamicsParams& p, double applied_hinge,
                           double applied_handle, double dt) {
  if (!std::isfinite(applied_hinge) || !std::isfinite(applied_handle) ||
      !std::isfinite(st.hinge_angle) || !std::isfinite(st.hinge_rate) ||
      !std::isfinite(st.handle_angle) || !std::isfinite(st.handle_rate))
    throw std::invalid_argument("step_door: non-finite input");

  DoorState s = st;
  if (s.latched && s.handle_angle >= p.unlatch_angle) s.latched = false;

  DoorTorques tau = net_torques(s, p, applied_hinge, applied_handle);

  s.handle_rate += dt * tau.handle / p.handle_inertia;
  s.handle_angle += dt * s.handle_rate;
  if (s.handle_angle <= 0.0) {
    s.handle_angle = 0.0;
    s.handle_rate = 0.0;
  } else if (s.handle_angle >= p.handle_max) {
    s.handle_angle = p.handle_max;
    s.handle_rate = 0.0;
  }
  if (s.latched && s.handle_angle >= p.unlatch_angle) s.latched = false;

  if (s.latched) {
    s.hinge_angle = 0.0;
    s.hinge_rate = 0.0;
  } else {
    s.hinge_rate += dt * tau.hinge / p.hinge_inertia;
    s.hinge_angle += dt * s.hinge_rate;
    if (s.hinge_angle <= 0.0) {
      s.hinge_angle = 0.0;
      s.hinge_rate = 0.0;
      if (s.handle_angle < p.unlatch_angle) s.latched = true;
    } else if (s.hinge_angle >= spec.hinge_limit) {
      s.hinge_angle = spec.hinge_limit;
      s.hinge_rate = 0.0;
    }
  }
  return s;
}

// full pose of the lever on the start-side face
struct HandleFrame {
  Vec3 spindle;       // rotation point
  Vec3 tip;           // the handle point h
  Vec3 spin_axis;     // unit; positive handle angle turns the tip down
  Vec3 lever_dir;     // unit, spindle -> tip
  Vec3 face_normal;   // unit, out of the start-side face
};

inline HandleFrame handle_frame(const DoorSpec& spec, const DoorState& st) {
  Vec2 u2 = panel_dir(spec, st.hinge_angle);
  Vec3 u(u2.x(), u2.y(), 0.0);
  Vec3 z = Vec3::UnitZ();
  // start-side face normal: (-1, 0) in doorway coords when closed, carried with the panel
  Vec2 m2 = rot2(spec.wall_pose.yaw + swing_sign(spec) * st.hinge_angle, Vec2(-1.0, 0.0));
  Vec3 m(m2.x(), m2.y(), 0.0);

  Vec2 hp = hinge_point_xy(spec);
  Vec3 hinge(hp.x(), hp.y(), 0.0);

  HandleFrame f;
  f.face_normal = m;
  f.spindle = hinge + u * (spec.width - spec.handle_offset) +
              m * (spec.thickness / 2.0 + kHandleStandoff) +
              z * spec.handle_height;
  f.spin_axis = u.cross(z);  // tip moves down for positive handle angle
  double c = std::cos(st.handle_angle), s = std::sin(st.handle_angle);
  f.lever_dir = -u * c - z * s;
  f.tip = f.spindle + spec.handle_length * f.lever_dir;
  return f;
}

// the handle point and its rotation axis
inline std::pair<Vec3, Vec3> handle_world_pose(const DoorSpec& spec, const DoorState& st) {
  HandleFrame f = handle_frame(spec, st);
  return {f.tip, f.spin_axis};
}

struct DoorwayFrame {
  Vec3 center;   // mid-height of the opening
  Vec3 through;  // unit, horizontal
};

inline DoorwayFrame doorway_frame(const DoorSpec& spec) {
  DoorwayFrame d;
  d.center = spec.wall_pose.to_world3(Vec3(0, 0, spec.panel_height / 2.0));
  Vec2 t = rot2(spec.wall_pose.yaw, Vec2(1, 0));
  d.through = Vec3(t.x(), t.y(), 0);
  return d;
}

// the swinging panel as an oriented slab; local x spans hinge -> free edge
inline Slab panel_geometry(const DoorSpec& spec, const DoorState& st) {
  Vec2 u2 = panel_dir(spec, st.hinge_angle);
  Vec3 u(u2.x(), u2.y(), 0.0);
  Vec3 z = Vec3::UnitZ();
  Vec3 n = z.cross(u);
  Vec2 hp = hinge_point_xy(spec);

  Slab slab;
  slab.center = Vec3(hp.x(), hp.y(), 0) + u * (spec.width / 2.0) + z * (spec.panel_height / 2.0);
  slab.half = Vec3(spec.width / 2.0, spec.thickness / 2.0, spec.panel_height / 2.0);
  slab.axes.col(0) = u;
  slab.axes.col(1) = n;
  slab.axes.col(2) = z;
  return slab;
}

inline std::array<Slab, 2> wall_slabs(const DoorSpec& spec) {
  std::array<Slab, 2> walls;
  for (int k = 0; k < 2; ++k) {
    double side = k == 0 ? 1.0 : -1.0;
    Vec3 local(0.0, side * (spec.width / 2.0 + kWallLength / 2.0), spec.panel_height / 2.0);
    walls[k].center = spec.wall_pose.to_world3(local);
    walls[k].half = Vec3(kWallThickness / 2.0, kWallLength / 2.0, spec.panel_height / 2.0);
    walls[k].axes = rot_z(spec.wall_pose.yaw);
  }
  return walls;
}

}  // namespace doorlab
