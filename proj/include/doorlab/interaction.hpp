#pragma once

#include <array>
#include <cstdint>

#include "doorlab/door.hpp"
#include "doorlab/geometry.hpp"

namespace doorlab {

struct InteractionParams {
  double k_g = 2000.0;  // coupling spring, N/m
  double d_g = 50.0;    // coupling damper, N s/m
  double k_c = 5000.0;  // contact spring, N/m
  double d_c = 100.0;   // contact damper, N s/m
  double r_b = 0.35;    // base disc radius, m
  double r_e = 0.04;    // end-effector sphere radius, m
  double grasp_break_factor = 1.5;  // times the grasp zone diagonal
  double thigh_radius = 0.28;
  Vec2 thigh_offset{-0.30, 0.0};  // behind the base center, base frame
  double thigh_height = 0.35;
};

// robot link ids for collision flags
enum RobotLink : int {
  kLinkBase = 0,
  kLinkThigh = 1,
  kLinkArm1 = 2,
  kLinkArm2 = 3,
  kLinkArm3 = 4,
  kLinkArm4 = 5,
  kLinkArm5 = 6,
  kLinkArm6 = 7,
};

inline int count_links(uint32_t mask) { return __builtin_popcount(mask); }

// world velocity of the handle tip from the two door rates
inline Vec3 handle_tip_velocity(const DoorSpec& spec, const DoorState& st,
                                const HandleFrame& f) {
  Vec2 hp = hinge_point_xy(spec);
  Vec3 hinge(hp.x(), hp.y(), 0.0);
  Vec3 v = swing_sign(spec) * st.hinge_rate * Vec3::UnitZ().cross(f.tip - hinge);
  v += st.handle_rate * f.spin_axis.cross(f.tip - f.spindle);
  return v;
}

struct CouplingResult {
  double hinge_torque = 0;   // about the hinge, + opens
  double handle_torque = 0;  // about the spindle, + presses the lever
  Vec3 ee_force = Vec3::Zero();
};

// frictionless spring-damper between hook center and handle tip; the force
// component along the lever bar is dropped (the hook slides along the bar)
inline CouplingResult handle_coupling(const Vec3& ee, const Vec3& ee_vel,
                                      bool engaged, const DoorSpec& spec,
                                      const DoorState& st,
                                      const InteractionParams& p) {
  CouplingResult out;
  if (!engaged) return out;
  HandleFrame f = handle_frame(spec, st);
  Vec3 vh = handle_tip_velocity(spec, st, f);
  Vec3 force = p.k_g * (f.tip - ee) + p.d_g * (vh - ee_vel);
  force -= force.dot(f.lever_dir) * f.lever_dir;
  out.ee_force = force;

  Vec3 on_door = -force;
  Vec2 hp = hinge_point_xy(spec);
  Vec3 hinge(hp.x(), hp.y(), 0.0);
  out.hinge_torque = swing_sign(spec) * (f.tip - hinge).cross(on_door).z();
  out.handle_torque = (f.tip - f.spindle).cross(on_door).dot(f.spin_axis);
  return out;
}

struct ContactForces {
  Vec3 ee_force = Vec3::Zero();
  Vec3 base_force = Vec3::Zero();
  double hinge_torque = 0;
  uint32_t colliding = 0;
};

// positions and velocities of the collision proxies for one substep
struct ProbeSet {
  Vec3 base_center;                // at base height
  Vec3 base_vel;
  Vec3 thigh_center;
  std::array<Vec3, 4> arm_points;  // elbow through wrist, flag probes
  Vec3 ee;
  Vec3 ee_vel;
};

namespace detail {

struct SphereHit {
  bool touching = false;
  double depth = 0;
  Vec3 normal = Vec3::Zero();  // pushes the probe out
  Vec3 point = Vec3::Zero();   // contact point on the slab surface
};

inline SphereHit sphere_slab(const Vec3& c, double radius, const Slab& slab) {
  SphereHit hit;
  if (slab.contains(c)) {
    // deep contact: exit through the nearest face
    Vec3 local = slab.axes.transpose() * (c - slab.center);
    int best = 0;
    double clearance = slab.half(0) - std::abs(local(0));
    for (int i = 1; i < 3; ++i) {
      double cl = slab.half(i) - std::abs(local(i));
      if (cl < clearance) {
        clearance = cl;
        best = i;
      }
    }
    double sign = local(best) >= 0 ? 1.0 : -1.0;
    hit.touching = true;
    hit.depth = radius + clearance;
    hit.normal = sign * slab.axes.col(best);
    Vec3 lp = local;
    lp(best) = sign * slab.half(best);
    hit.point = slab.center + slab.axes * lp;
    return hit;
  }
  Vec3 cp = slab.closest_point(c);
  Vec3 d = c - cp;
  double dist = d.norm();
  if (dist >= radius || dist == 0.0) return hit;
  hit.touching = true;
  hit.depth = radius - dist;
  hit.normal = d / dist;
  hit.point = cp;
  return hit;
}

}  // namespace detail

// penalty contacts of all proxies against the panel and both wall slabs.
// walls are immovable (no door torque); flag-only probes add no force; the
// hook flags only wall contact since the panel is its working surface.
inline ContactForces panel_contact(const ProbeSet& probes, const DoorSpec& spec,
                                   const DoorState& st,
                                   const InteractionParams& p) {
  ContactForces out;
  Slab panel = panel_geometry(spec, st);
  std::array<Slab, 2> walls = wall_slabs(spec);
  Vec2 hp = hinge_point_xy(spec);
  Vec3 hinge(hp.x(), hp.y(), 0.0);
  double chi = swing_sign(spec);

  struct Probe {
    Vec3 pos;
    Vec3 vel;
    double radius;
    int link;
    bool force;
  };
  std::array<Probe, 7> list = {{
      {probes.base_center, probes.base_vel, p.r_b, kLinkBase, true},
      {probes.thigh_center, probes.base_vel, p.thigh_radius, kLinkThigh, false},
      {probes.arm_points[0], Vec3::Zero(), 0.04, kLinkArm2, false},
      {probes.arm_points[1], Vec3::Zero(), 0.04, kLinkArm3, false},
      {probes.arm_points[2], Vec3::Zero(), 0.04, kLinkArm4, false},
      {probes.arm_points[3], Vec3::Zero(), 0.04, kLinkArm5, false},
      {probes.ee, probes.ee_vel, p.r_e, kLinkArm6, true},
  }};

  for (const Probe& probe : list) {
    // panel
    detail::SphereHit hit = detail::sphere_slab(probe.pos, probe.radius, panel);
    if (hit.touching) {
      if (probe.link != kLinkArm6) out.colliding |= 1u << probe.link;
      if (probe.force) {
        Vec3 v_surf = chi * st.hinge_rate * Vec3::UnitZ().cross(hit.point - hinge);
        double closing = -(probe.vel - v_surf).dot(hit.normal);
        double mag = std::max(0.0, p.k_c * hit.depth + p.d_c * closing);
        Vec3 f = mag * hit.normal;
        if (probe.link == kLinkBase) out.base_force += f;
        else out.ee_force += f;
        out.hinge_torque += chi * (hit.point - hinge).cross(-f).z();
      }
    }
    // walls
    for (const Slab& wall : walls) {
      detail::SphereHit wh = detail::sphere_slab(probe.pos, probe.radius, wall);
      if (!wh.touching) continue;
      out.colliding |= 1u << probe.link;
      if (probe.force) {
        double closing = -probe.vel.dot(wh.normal);
        double mag = std::max(0.0, p.k_c * wh.depth + p.d_c * closing);
        Vec3 f = mag * wh.normal;
        if (probe.link == kLinkBase) out.base_force += f;
        else out.ee_force += f;
      }
    }
  }
  return out;
}

enum class Zone { none, z1, z2 };

// traversal credit regions for pull doors: z1 is the sector the panel has
// swept (start side, within 1.5 m of the doorway), z2 is past the wall plane
inline Zone zone_membership(const Vec3& point, const DoorSpec& spec,
                            const DoorState& st) {
  if (spec.opening_dir != OpeningDir::pull) return Zone::none;
  Vec3 local = spec.wall_pose.to_local3(point);
  if (local.x() > 0.0) return Zone::z2;
  if (local.head<2>().norm() > 1.5) return Zone::none;

  Vec2 hinge_local(0.0, hinge_sign(spec) * spec.width / 2.0);
  Vec2 rel = local.head<2>() - hinge_local;
  if (rel.norm() < 1e-9) return Zone::none;
  Vec2 u0(0.0, -hinge_sign(spec));
  double chi = swing_sign(spec);
  double cross = u0.x() * rel.y() - u0.y() * rel.x();
  double swept = chi * std::atan2(cross, u0.dot(rel));
  if (swept >= 0.0 && swept <= st.hinge_angle) return Zone::z1;
  return Zone::none;
}

inline bool behind_panel(const Vec3& point, const DoorSpec& spec,
                         const DoorState& st) {
  return zone_membership(point, spec, st) != Zone::none;
}

}  // namespace doorlab
