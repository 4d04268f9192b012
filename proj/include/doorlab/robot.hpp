#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include "doorlab/geometry.hpp"

namespace doorlab {

constexpr int kArmJoints = 6;
constexpr int kActionDim = 9;  // vx, vy, wz, six arm joint offsets

struct BaseParams {
  double v_max = 0.5;        // m/s, planar speed cap
  double w_max = 1.0;        // rad/s
  double deadband = 0.1;     // commands below this are zeroed
  double tau_loco = 0.3;     // velocity tracking time constant, s
  double mass = 50.0;        // virtual mass for external pushes, kg
  double height = 0.5;       // base center above ground, m
  double tilt_gain = 0.002;  // rad per N of horizontal end-effector force
  double tilt_cap = 0.3;     // rad
};

struct ArmParams {
  std::array<double, 6> link_lengths{0.10, 0.30, 0.30, 0.10, 0.08, 0.06};
  std::array<double, 6> q_lower{-2.9, -1.6, -2.8, -2.0, -2.9, -2.9};
  std::array<double, 6> q_upper{2.9, 1.6, 2.8, 2.0, 2.9, 2.9};
  std::array<double, 6> tau_limit{40, 40, 40, 15, 10, 5};
  std::array<double, 6> kp{50, 50, 50, 50, 50, 50};
  std::array<double, 6> kd{4.5, 4.5, 4.5, 4.5, 4.5, 4.5};
  std::array<double, 6> q_default{0.0, 0.9, -2.2, 1.3, 0.0, 0.0};
  std::array<double, 6> inertia{0.5, 0.5, 0.3, 0.1, 0.05, 0.02};
  double action_scale = 0.5;  // rad per action unit
  double saturation = 0.7;    // fraction of stall torque the target may demand
  double qd_limit = 8.0;      // rad/s
  Vec3 mount_offset{0.25, 0.0, 0.05};  // arm base in the base frame
};

struct RobotParams {
  BaseParams base;
  ArmParams arm;
};

struct BaseState {
  Vec2 pos = Vec2::Zero();   // world
  double yaw = 0;
  Vec2 vel = Vec2::Zero();   // world frame
  double yaw_rate = 0;
  double tilt = 0;           // virtual lean from end-effector load
};

struct ArmState {
  std::array<double, 6> q{};
  std::array<double, 6> qd{};
  std::array<double, 6> qdd{};
  std::array<double, 6> target{};
};

struct RobotState {
  BaseState base;
  ArmState arm;
};

struct Action {
  double vx = 0, vy = 0, wz = 0;
  std::array<double, 6> arm{};

  static Action from_flat(const double* a) {
    Action act;
    act.vx = a[0];
    act.vy = a[1];
    act.wz = a[2];
    for (int i = 0; i < 6; ++i) act.arm[i] = a[3 + i];
    return act;
  }
};

struct BaseCommand {
  double vx = 0, vy = 0, wz = 0;
};

// speed caps first, then the deadband
inline BaseCommand clip_base_command(double vx, double vy, double wz,
                                     const BaseParams& p) {
  BaseCommand c;
  double n = std::hypot(vx, vy);
  double s = n > p.v_max ? p.v_max / n : 1.0;
  c.vx = vx * s;
  c.vy = vy * s;
  c.wz = clip(wz, -p.w_max, p.w_max);
  if (std::hypot(c.vx, c.vy) < p.deadband) c.vx = c.vy = 0.0;
  if (std::abs(c.wz) < p.deadband) c.wz = 0.0;
  return c;
}

// PD target per joint, bounded so the position error cannot demand more than
// a fixed fraction of the stall torque
inline std::array<double, 6> arm_pd_target(const std::array<double, 6>& action,
                                           const std::array<double, 6>& q,
                                           const ArmParams& p) {
  std::array<double, 6> t;
  for (int i = 0; i < 6; ++i) {
    double band = p.saturation * p.tau_limit[i] / p.kp[i];
    double raw = p.action_scale * action[i] + p.q_default[i];
    t[i] = clip(raw, q[i] - band, q[i] + band);
  }
  return t;
}

struct FkResult {
  Vec3 ee = Vec3::Zero();        // hook center
  Mat3 ee_frame = Mat3::Identity();  // x approach, y closure axis
  Vec3 shoulder = Vec3::Zero();
  Eigen::Matrix<double, 3, 6> jac;  // d(ee)/dq, world frame, base held fixed
  std::array<Vec3, 7> joints;       // mount, shoulder, elbow, ..., ee
};

// chain: yaw, shoulder pitch, elbow pitch, wrist pitch, wrist roll, hook yaw
inline FkResult fk(const std::array<double, 6>& q, const BaseState& base,
                   const RobotParams& params) {
  const auto& L = params.arm.link_lengths;
  Vec3 pb(base.pos.x(), base.pos.y(), params.base.height);
  Mat3 Rb = rot_z(base.yaw);
  Vec3 p0 = pb + Rb * params.arm.mount_offset;

  Mat3 R1 = Rb * rot_z(q[0]);
  Vec3 p1 = p0 + R1 * Vec3(0, 0, L[0]);  // shoulder
  Mat3 R2 = R1 * rot_y(q[1]);
  Vec3 p2 = p1 + R2 * Vec3(L[1], 0, 0);
  Mat3 R3 = R2 * rot_y(q[2]);
  Vec3 p3 = p2 + R3 * Vec3(L[2], 0, 0);
  Mat3 R4 = R3 * rot_y(q[3]);
  Vec3 p4 = p3 + R4 * Vec3(L[3], 0, 0);
  Mat3 R5 = R4 * rot_x(q[4]);
  Vec3 p5 = p4 + R5 * Vec3(L[4], 0, 0);
  Mat3 R6 = R5 * rot_z(q[5]);
  Vec3 e = p5 + R6 * Vec3(L[5], 0, 0);

  FkResult f;
  f.ee = e;
  f.ee_frame = R6;
  f.shoulder = p1;
  f.joints = {p0, p1, p2, p3, p4, p5, e};

  std::array<Vec3, 6> axes = {Rb.col(2), R1.col(1), R2.col(1),
                              R3.col(1), R4.col(0), R5.col(2)};
  std::array<Vec3, 6> origins = {p0, p1, p2, p3, p4, p5};
  for (int i = 0; i < 6; ++i) f.jac.col(i) = axes[i].cross(e - origins[i]);
  return f;
}

// world velocity of the hook center
inline Vec3 ee_velocity(const FkResult& f, const BaseState& base,
                        const std::array<double, 6>& qd) {
  Vec3 pb(base.pos.x(), base.pos.y(), 0);
  Vec3 r = f.ee - Vec3(base.pos.x(), base.pos.y(), f.ee.z());
  Vec3 v(base.vel.x(), base.vel.y(), 0);
  v += base.yaw_rate * Vec3::UnitZ().cross(f.ee - pb);
  Eigen::Map<const Eigen::Matrix<double, 6, 1>> qdv(qd.data());
  v += f.jac * qdv;
  (void)r;
  return v;
}

// one substep: first-order base velocity tracking plus torque-limited arm PD.
// arm targets are read from state (held between control ticks); ee_force and
// base_force are the external loads for this substep.
inline RobotState step_robot(const RobotState& st, const Action& act,
                             const Vec3& ee_force, const Vec3& base_force,
                             double dt, const RobotParams& params) {
  RobotState s = st;
  BaseCommand cmd = clip_base_command(act.vx, act.vy, act.wz, params.base);

  Vec2 v_target = rot2(s.base.yaw, Vec2(cmd.vx, cmd.vy));
  s.base.vel += dt * ((v_target - s.base.vel) / params.base.tau_loco +
                      base_force.head<2>() / params.base.mass);
  s.base.pos += dt * s.base.vel;
  s.base.yaw_rate += dt * (cmd.wz - s.base.yaw_rate) / params.base.tau_loco;
  s.base.yaw = wrap_angle(s.base.yaw + dt * s.base.yaw_rate);
  s.base.tilt = std::min(params.base.tilt_cap,
                         params.base.tilt_gain * ee_force.head<2>().norm());

  FkResult f = fk(s.arm.q, st.base, params);
  Eigen::Matrix<double, 6, 1> jt = f.jac.transpose() * ee_force;
  const auto& ap = params.arm;
  for (int i = 0; i < 6; ++i) {
    double tau = ap.kp[i] * (s.arm.target[i] - s.arm.q[i]) - ap.kd[i] * s.arm.qd[i];
    tau = clip(tau, -ap.tau_limit[i], ap.tau_limit[i]);
    tau += jt(i);
    s.arm.qdd[i] = tau / ap.inertia[i];
    s.arm.qd[i] = clip(s.arm.qd[i] + dt * s.arm.qdd[i], -ap.qd_limit, ap.qd_limit);
    s.arm.q[i] += dt * s.arm.qd[i];
    if (s.arm.q[i] <= ap.q_lower[i]) {
      s.arm.q[i] = ap.q_lower[i];
      s.arm.qd[i] = 0.0;
    } else if (s.arm.q[i] >= ap.q_upper[i]) {
      s.arm.q[i] = ap.q_upper[i];
      s.arm.qd[i] = 0.0;
    }
  }
  return s;
}

constexpr double kGraspHalfX = 0.03;   // along the hook opening
constexpr double kGraspHalfY = 0.015;
constexpr double kGraspHalfZ = 0.015;

inline bool grasp_zone_test(const Vec3& ee, const Mat3& ee_frame, const Vec3& h) {
  Vec3 d = ee_frame.transpose() * (h - ee);
  return std::abs(d.x()) <= kGraspHalfX && std::abs(d.y()) <= kGraspHalfY &&
         std::abs(d.z()) <= kGraspHalfZ;
}

// zone diagonal, used for the coupling break distance
inline double grasp_zone_diagonal() {
  return 2.0 * std::sqrt(kGraspHalfX * kGraspHalfX + kGraspHalfY * kGraspHalfY +
                         kGraspHalfZ * kGraspHalfZ);
}

// angle between the hook closure axis and the handle bar, [0, pi]
inline double grasp_orientation_error(const Mat3& ee_frame, const Vec3& bar_axis) {
  Vec3 closure = ee_frame.col(1);
  double c = clip(closure.dot(bar_axis.normalized()), -1.0, 1.0);
  return std::acos(c);
}

}  // namespace doorlab
