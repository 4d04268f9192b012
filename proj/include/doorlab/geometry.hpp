#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace doorlab {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

constexpr double kPi = 3.14159265358979323846;

constexpr double deg2rad(double d) { return d * kPi / 180.0; }
constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

// wrap to (-pi, pi]
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

inline Vec2 rot2(double yaw, const Vec2& v) {
  double c = std::cos(yaw), s = std::sin(yaw);
  return Vec2(c * v.x() - s * v.y(), s * v.x() + c * v.y());
}

inline Mat3 rot_z(double a) {
  double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}

inline Mat3 rot_y(double a) {
  double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}

inline Mat3 rot_x(double a) {
  double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}

// ground-plane pose: x-y position plus heading
struct PlanarPose {
  double x = 0, y = 0, yaw = 0;

  Vec2 to_world(const Vec2& local) const { return Vec2(x, y) + rot2(yaw, local); }
  Vec2 to_local(const Vec2& world) const { return rot2(-yaw, world - Vec2(x, y)); }
  Vec3 to_world3(const Vec3& local) const {
    Vec2 p = to_world(local.head<2>());
    return Vec3(p.x(), p.y(), local.z());
  }
  Vec3 to_local3(const Vec3& world) const {
    Vec2 p = to_local(world.head<2>());
    return Vec3(p.x(), p.y(), world.z());
  }
};

// oriented box: columns of `axes` are the local unit axes
struct Slab {
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Zero();
  Mat3 axes = Mat3::Identity();

  Vec3 closest_point(const Vec3& p) const {
    Vec3 d = axes.transpose() * (p - center);
    Vec3 c = d.cwiseMax(-half).cwiseMin(half);
    return center + axes * c;
  }
  bool contains(const Vec3& p) const {
    Vec3 d = (axes.transpose() * (p - center)).cwiseAbs();
    return (d.array() <= half.array()).all();
  }
};

inline double clip(double v, double lo, double hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

}  // namespace doorlab
