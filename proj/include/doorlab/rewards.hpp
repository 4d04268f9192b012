#pragma once

// Reward terms and the opening -> passing stage machine.
//
// Terms are pure functions of the quantities they score.  Composition picks
// which block is live: below theta_enough the handle-manipulation block, above
// it the frozen handle bonus plus (pull doors only) the around-panel bonus,
// and once the stage machine has fired, a constant opening payout plus the
// doorway-progress term.  Shaping applies in every stage.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>

#include "doorlab/door.hpp"
#include "doorlab/geometry.hpp"
#include "doorlab/interaction.hpp"
#include "doorlab/robot.hpp"

namespace doorlab {

struct RewardConfig {
  double theta_target = deg2rad(75.0);  // best opening angle
  double theta_enough = deg2rad(30.0);  // handle block freezes here
  double theta_pass = deg2rad(70.0);    // stage machine threshold
  double psi_bar = deg2rad(8.0);        // base-tilt penalty threshold
  double v_max = 0.5;                   // progress speed for full r_p

  double open_scale = 3.0;  // on r_od
  double hg_scale = 0.5;    // on r_hg inside r_hm
  double adp_scale = 0.5;   // on r_adp inside r_o

  // shaping mix
  double s_ma = 0.3;
  double s_pbt = 0.5;
  double s_psa = 1.0;
  double s_pcl = 0.1;
  double s_pc = 2.0;

  double reach_limit = 0.6;  // ||e - s|| where r_psa starts
  double reach_ramp = 0.1;   // and saturates reach_limit + ramp later

  // per-action magnitude limits; ramp width is half the limit
  std::array<double, 9> action_limit{0.5, 0.5, 1.0, 2.0, 2.0,
                                     2.0, 2.0, 2.0, 2.0};

  // grasp-related terms only count within this range of the handle
  double handle_range = 1.0;

  // Maxima derived from the live scales so config edits stay consistent.
  double max_handle_reward() const { return 1.0 + 1.0 + 1.0 + hg_scale; }
  double max_open_reward(OpeningDir dir) const {
    double r = open_scale + max_handle_reward();
    if (dir == OpeningDir::pull) r += adp_scale * 4.0;
    return r;
  }
};

enum class Stage : std::uint8_t { opening = 0, passing = 1 };

struct StageState {
  Stage stage = Stage::opening;
  bool passed_doorway = false;  // base crossed the wall plane
};

struct RewardBreakdown {
  double r_ehd = 0, r_th = 0, r_eho = 0, r_hg = 0, r_plg = 0;
  double r_od = 0, r_adp = 0, r_hm = 0, r_o = 0, r_p = 0;
  double r_ma = 0, r_pbt = 0, r_psa = 0, r_pcl = 0, r_pc = 0, r_s = 0;
  double total = 0;
};

// Handle-manipulation block.  grasped flags mean "handle inside the grasp
// box"; the leave penalty wants last step's flag too.
inline void handle_manipulation_terms(const Vec3& ee, const Vec3& handle,
                                      double orient_err, bool grasped,
                                      bool grasped_prev, double handle_angle,
                                      double handle_max,
                                      const RewardConfig& cfg,
                                      RewardBreakdown& out) {
  const double d = (ee - handle).norm();
  out.r_ehd = std::exp(-d);
  out.r_th = handle_max > 0 ? handle_angle / handle_max : 0.0;
  out.r_eho = 1.0 - std::abs(orient_err) / kPi;
  out.r_hg = (grasped && d <= cfg.handle_range) ? 1.0 : 0.0;
  out.r_plg = (grasped_prev && !grasped && d <= cfg.handle_range) ? -1.0 : 0.0;
  out.r_hm = out.r_ehd + out.r_th + out.r_eho + cfg.hg_scale * out.r_hg +
             out.r_plg;
}

inline double zone_score(Zone z) {
  switch (z) {
    case Zone::z1: return 1.0;
    case Zone::z2: return 2.0;
    default: return 0.0;
  }
}

// r_od tracks the target angle; r_adp pays for getting base and EE around the
// panel, pull doors only and only once the door is open enough.
inline void open_door_terms(double hinge_angle, Zone base_zone, Zone ee_zone,
                            OpeningDir dir, const RewardConfig& cfg,
                            RewardBreakdown& out) {
  out.r_od = 1.0 - std::abs(hinge_angle - cfg.theta_target) / cfg.theta_target;
  const bool adp_live =
      dir == OpeningDir::pull && hinge_angle >= cfg.theta_enough;
  out.r_adp = adp_live ? zone_score(base_zone) + zone_score(ee_zone) : 0.0;
}

// Progress toward, then through, the doorway.  Clipped above only.
inline double passing_term(const Vec2& base_xy, const Vec2& base_vel,
                           const DoorwayFrame& doorway, bool passed_doorway,
                           const RewardConfig& cfg) {
  const Vec2 through = doorway.through.head<2>();
  Vec2 p = through;
  if (!passed_doorway) {
    Vec2 to_center = Vec2(doorway.center.head<2>()) - base_xy;
    double n = to_center.norm();
    if (n > 1e-12) p = to_center / n;
  }
  return std::min(1.0, p.dot(base_vel) / cfg.v_max);
}

// Shaping block: smooth arm motion, tilt, reach, action limits, collisions.
inline void shaping_terms(const std::array<double, kArmJoints>& qd,
                          const std::array<double, kArmJoints>& qdd,
                          double tilt, const Vec3& ee, const Vec3& shoulder,
                          const std::array<double, kActionDim>& action,
                          std::uint32_t colliding_links,
                          const RewardConfig& cfg, RewardBreakdown& out) {
  out.r_ma = 0.0;
  for (int i = 0; i < kArmJoints; ++i) {
    out.r_ma += std::exp(-0.01 * qd[i] * qd[i]);
    out.r_ma += std::exp(-1e-6 * qdd[i] * qdd[i]);
  }
  out.r_pbt = tilt > cfg.psi_bar ? -1.0 : 0.0;
  const double reach = (ee - shoulder).norm();
  out.r_psa = -clip((reach - cfg.reach_limit) / cfg.reach_ramp, 0.0, 1.0);
  out.r_pcl = 0.0;
  for (int i = 0; i < kActionDim; ++i) {
    const double bar = cfg.action_limit[static_cast<std::size_t>(i)];
    out.r_pcl -= clip((std::abs(action[static_cast<std::size_t>(i)]) - bar) /
                          (0.5 * bar),
                      0.0, 1.0);
  }
  out.r_pc = -static_cast<double>(count_links(colliding_links));
  out.r_s = cfg.s_ma * out.r_ma + cfg.s_pbt * out.r_pbt + cfg.s_psa * out.r_psa +
            cfg.s_pcl * out.r_pcl + cfg.s_pc * out.r_pc;
}

// Opening -> Passing fires at theta_pass; pull doors additionally need base
// and EE behind the panel.  Passing is absorbing.
inline StageState stage_update(StageState st, double hinge_angle,
                               OpeningDir dir, bool base_behind,
                               bool ee_behind, bool base_crossed,
                               const RewardConfig& cfg) {
  if (st.stage == Stage::opening && hinge_angle > cfg.theta_pass) {
    if (dir == OpeningDir::push || (base_behind && ee_behind))
      st.stage = Stage::passing;
  }
  st.passed_doorway = st.passed_doorway || base_crossed;
  return st;
}

// Fills r_o and total from the already-computed terms.
inline void compose_reward(Stage stage, double hinge_angle, OpeningDir dir,
                           const RewardConfig& cfg, RewardBreakdown& out) {
  if (stage == Stage::opening) {
    const double handle_block = hinge_angle < cfg.theta_enough
                                    ? out.r_hm
                                    : cfg.max_handle_reward() +
                                          cfg.adp_scale * out.r_adp;
    out.r_o = cfg.open_scale * out.r_od + handle_block;
    out.total = out.r_o + out.r_s;
  } else {
    out.r_o = cfg.max_open_reward(dir);
    out.total = out.r_o + out.r_p + out.r_s;
  }
}

}  // namespace doorlab
