#pragma once

// Vectorized 50 Hz episodic environment: reset/step loop, observation
// builders, termination, and per-episode success metrics.
//
// Every stream is keyed by (seed, global env index, episode, salt), so a
// batch of N environments is bit-identical to N batches of one, and building
// an observation twice gives the same bytes.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "doorlab/domain_rand.hpp"
#include "doorlab/door.hpp"
#include "doorlab/interaction.hpp"
#include "doorlab/rewards.hpp"
#include "doorlab/rng.hpp"
#include "doorlab/robot.hpp"

namespace doorlab {

inline constexpr char kObsLayoutVersion[] = "obs-layout-v1";
inline constexpr int kTeacherObsDim = 46;
inline constexpr int kStudentObsDim = 19;
inline constexpr int kPrivilegedDim = 12;  // tail block of the teacher obs

inline constexpr std::uint64_t kSampleSalt = 0x5f73616d706c65ULL;
inline constexpr std::uint64_t kNoiseSalt = 0x5f6e6f697365ULL;

struct ObsField {
  const char* name;
  int start;
  int len;
};

// Fixed index map.  The student keeps the teacher's non-privileged fields
// minus previous action and arm joint velocities.
inline const std::vector<ObsField>& teacher_obs_layout() {
  static const std::vector<ObsField> fields{
      {"base_yaw", 0, 1},        {"base_tilt", 1, 1},
      {"base_vel", 2, 2},        {"base_yaw_rate", 4, 1},
      {"arm_q", 5, 6},           {"arm_qd", 11, 6},
      {"prev_action", 17, 9},    {"handle_rel", 26, 3},
      {"doorway_rel", 29, 3},    {"through_rel", 32, 2},
      {"door_angles", 34, 4},    {"panel_mass", 38, 1},
      {"joint_torques", 39, 2},  {"door_type", 41, 4},
      {"stage", 45, 1}};
  return fields;
}

inline const std::vector<ObsField>& student_obs_layout() {
  static const std::vector<ObsField> fields{
      {"base_yaw", 0, 1},   {"base_tilt", 1, 1}, {"base_vel", 2, 2},
      {"base_yaw_rate", 4, 1}, {"arm_q", 5, 6},  {"handle_rel", 11, 3},
      {"doorway_rel", 14, 3},  {"through_rel", 17, 2}};
  return fields;
}

// student index i reads teacher index map[i]
inline const std::array<int, kStudentObsDim>& student_index_map() {
  static const std::array<int, kStudentObsDim> map = [] {
    std::array<int, kStudentObsDim> m{};
    int k = 0;
    for (int i = 0; i < 11; ++i) m[static_cast<std::size_t>(k++)] = i;
    for (int i = 26; i < 34; ++i) m[static_cast<std::size_t>(k++)] = i;
    return m;
  }();
  return map;
}

struct NoiseConfig {
  double position = 0.01;  // reserved for metric proprio fields
  double angle = 0.05;
  double velocity = 0.05;
  double extero = 0.02;
};

// per-field noise std for the student observation
inline double student_noise_std(int index, const NoiseConfig& n) {
  if (index <= 1) return n.angle;        // yaw, tilt
  if (index <= 4) return n.velocity;     // base velocities
  if (index <= 10) return n.angle;       // arm q
  return n.extero;                       // handle, doorway, through
}

struct EnvConfig {
  double dt = 0.02;
  int substeps = 4;
  int episode_len = 500;
  int n_envs = 1;
  std::uint64_t seed = 0;
  int env_index_offset = 0;  // global index of env 0, for split-batch runs
  NoiseConfig noise;
  InteractionParams interaction;
  RewardConfig reward;
  RandomizationRanges randomization;
  RobotParams robot;

  void validate() const {
    if (n_envs < 1) throw std::invalid_argument("env: n_envs < 1");
    if (substeps < 1 || dt <= 0) throw std::invalid_argument("env: bad dt");
    if (episode_len < 1) throw std::invalid_argument("env: bad episode_len");
    randomization.validate();
  }
};

struct StepInfo {
  bool episode_end = false;
  bool nan_abort = false;
  bool opened_enough = false;   // valid at episode_end
  bool passed_through = false;  // valid at episode_end
  Stage stage = Stage::opening;
  double theta = 0;
  int door_type = 0;
  RewardBreakdown breakdown;
  Eigen::VectorXf terminal_obs;  // teacher obs of the final state, horizon end only
};

struct StepOut {
  Eigen::VectorXf reward;          // per env
  std::vector<std::uint8_t> done;  // per env
  std::vector<StepInfo> info;      // per env
};

struct EnvState {
  EpisodeSample sample;
  RobotParams robot;  // config params with the episode's sampled gains
  DoorState door;
  RobotState rs;
  StageState stage;
  std::array<double, kActionDim> prev_action{};
  bool grasp_engaged = false;   // force-coupling hysteresis
  bool grasp_raw_prev = false;  // raw grasp-box membership at the last tick
  int t = 0;
  std::uint64_t episode = 0;
  double max_theta = 0;
  double max_local_x = -1e18;
  double prev_local_x = -1e18;
  bool crossed_doorway = false;  // plane crossing happened inside the doorway span
  double hinge_internal = 0;   // resistance+damping torque at step end
  double handle_internal = 0;
  std::uint32_t colliding = 0;  // union over the last control step
};

class VecEnv {
 public:
  explicit VecEnv(const EnvConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    envs_.resize(static_cast<std::size_t>(cfg_.n_envs));
    reset_all();
  }

  int num_envs() const { return cfg_.n_envs; }
  const EnvConfig& config() const { return cfg_; }
  const EnvState& state(int i) const { return envs_[idx(i)]; }

  void reset_all() {
    for (int i = 0; i < cfg_.n_envs; ++i) {
      envs_[idx(i)].episode = 0;
      reset_env_with_stream(i);
    }
  }

  // next episode from the env's own stream
  void reset_env(int i) {
    envs_[idx(i)].episode += 1;
    reset_env_with_stream(i);
  }

  // pinned episode, e.g. scripted tests and sweeps; the episode counter
  // still advances so later natural resets stay on-stream
  void reset_with(int i, const EpisodeSample& sample) {
    EnvState& e = envs_[idx(i)];
    e.episode += 1;
    apply_sample(e, sample);
  }

  // actions: kActionDim x n_envs
  StepOut step(const Eigen::Ref<const Eigen::MatrixXf>& actions) {
    if (actions.rows() != kActionDim || actions.cols() != cfg_.n_envs)
      throw std::invalid_argument("env: action shape");
    StepOut out;
    out.reward = Eigen::VectorXf::Zero(cfg_.n_envs);
    out.done.assign(static_cast<std::size_t>(cfg_.n_envs), 0);
    out.info.resize(static_cast<std::size_t>(cfg_.n_envs));
    for (int i = 0; i < cfg_.n_envs; ++i) {
      std::array<double, kActionDim> a{};
      for (int k = 0; k < kActionDim; ++k)
        a[static_cast<std::size_t>(k)] = static_cast<double>(actions(k, i));
      step_one(i, a, out.reward(i), out.done[static_cast<std::size_t>(i)],
               out.info[idx(i)]);
    }
    return out;
  }

  // current (post-reset) observations
  Eigen::MatrixXf teacher_obs_batch() const {
    Eigen::MatrixXf m(kTeacherObsDim, cfg_.n_envs);
    for (int i = 0; i < cfg_.n_envs; ++i) m.col(i) = teacher_obs(i);
    return m;
  }

  Eigen::MatrixXf student_obs_batch() const {
    Eigen::MatrixXf m(kStudentObsDim, cfg_.n_envs);
    for (int i = 0; i < cfg_.n_envs; ++i) m.col(i) = student_obs(i);
    return m;
  }

  Eigen::VectorXf teacher_obs(int i) const {
    return build_teacher_obs(envs_[idx(i)]);
  }

  // student view with per-field Gaussian noise; a pure function of
  // (seed, env, episode, tick), so rebuilding gives identical bytes
  Eigen::VectorXf student_obs(int i) const {
    const EnvState& e = envs_[idx(i)];
    Eigen::VectorXf teacher = build_teacher_obs(e);
    Eigen::VectorXf s(kStudentObsDim);
    const auto& map = student_index_map();
    RngStream noise = RngStream::keyed(
        cfg_.seed, global_index(i), e.episode,
        kNoiseSalt + static_cast<std::uint64_t>(e.t));
    for (int k = 0; k < kStudentObsDim; ++k) {
      double std_k = student_noise_std(k, cfg_.noise);
      s(k) = teacher(map[static_cast<std::size_t>(k)]) +
             static_cast<float>(noise.normal(0.0, std_k));
    }
    return s;
  }

  // success metrics of the running episode so far
  bool opened_enough(int i) const {
    return envs_[idx(i)].max_theta >= cfg_.reward.theta_enough;
  }
  bool passed_through(int i) const {
    const EnvState& e = envs_[idx(i)];
    return e.crossed_doorway && e.max_local_x >= 0.5;
  }

 private:
  static std::size_t idx(int i) { return static_cast<std::size_t>(i); }

  std::uint64_t global_index(int i) const {
    return static_cast<std::uint64_t>(cfg_.env_index_offset + i);
  }

  void reset_env_with_stream(int i) {
    EnvState& e = envs_[idx(i)];
    RngStream rng =
        RngStream::keyed(cfg_.seed, global_index(i), e.episode, kSampleSalt);
    apply_sample(e, sample_episode(rng, cfg_.randomization, cfg_.robot.arm));
  }

  void apply_sample(EnvState& e, const EpisodeSample& sample) {
    e.sample = sample;
    e.robot = cfg_.robot;
    e.robot.arm.kp = sample.kp;
    e.robot.arm.kd = sample.kd;
    e.door = DoorState{};
    e.rs.base = sample.base_init;
    e.rs.arm = sample.arm_init;
    e.stage = StageState{};
    e.prev_action = {};
    e.grasp_engaged = false;
    e.grasp_raw_prev = false;
    e.t = 0;
    e.max_theta = 0;
    e.max_local_x = sample.spec.wall_pose.to_local(e.rs.base.pos).x();
    e.prev_local_x = e.max_local_x;
    e.crossed_doorway = false;
    e.hinge_internal = 0;
    e.handle_internal = 0;
    e.colliding = 0;
  }

  static bool finite_state(const EnvState& e) {
    bool ok = std::isfinite(e.door.hinge_angle) &&
              std::isfinite(e.door.hinge_rate) &&
              std::isfinite(e.door.handle_angle) &&
              std::isfinite(e.door.handle_rate) &&
              e.rs.base.pos.allFinite() && e.rs.base.vel.allFinite() &&
              std::isfinite(e.rs.base.yaw) && std::isfinite(e.rs.base.yaw_rate);
    for (int i = 0; i < kArmJoints && ok; ++i)
      ok = std::isfinite(e.rs.arm.q[static_cast<std::size_t>(i)]) &&
           std::isfinite(e.rs.arm.qd[static_cast<std::size_t>(i)]);
    return ok;
  }

  void step_one(int i, const std::array<double, kActionDim>& a, float& reward,
                std::uint8_t& done, StepInfo& info) {
    EnvState& e = envs_[idx(i)];
    const DoorSpec& spec = e.sample.spec;
    Action act = Action::from_flat(a.data());

    // PD targets latch at the control tick
    e.rs.arm.target = arm_pd_target(act.arm, e.rs.arm.q, e.robot.arm);

    const double h = cfg_.dt / cfg_.substeps;
    double applied_hinge = 0, applied_handle = 0;
    e.colliding = 0;
    bool aborted = false;
    try {
      for (int sub = 0; sub < cfg_.substeps; ++sub) {
        FkResult f = fk(e.rs.arm.q, e.rs.base, e.robot);
        Vec3 ee_vel = ee_velocity(f, e.rs.base, e.rs.arm.qd);
        HandleFrame hf = handle_frame(spec, e.door);

        // grasp hysteresis: engage inside the box, release when the handle
        // point drifts well clear of it
        if (!e.grasp_engaged) {
          if (grasp_zone_test(f.ee, f.ee_frame, hf.tip)) e.grasp_engaged = true;
        } else if ((hf.tip - f.ee).norm() >
                   cfg_.interaction.grasp_break_factor *
                       grasp_zone_diagonal()) {
          e.grasp_engaged = false;
        }

        CouplingResult grip = handle_coupling(f.ee, ee_vel, e.grasp_engaged,
                                              spec, e.door, cfg_.interaction);

        ProbeSet probes;
        probes.base_center = Vec3(e.rs.base.pos.x(), e.rs.base.pos.y(),
                                  e.robot.base.height);
        probes.base_vel = Vec3(e.rs.base.vel.x(), e.rs.base.vel.y(), 0);
        Vec2 thigh = e.rs.base.pos +
                     rot2(e.rs.base.yaw, cfg_.interaction.thigh_offset);
        probes.thigh_center =
            Vec3(thigh.x(), thigh.y(), cfg_.interaction.thigh_height);
        for (int k = 0; k < 4; ++k)
          probes.arm_points[static_cast<std::size_t>(k)] =
              f.joints[static_cast<std::size_t>(k + 2)];
        probes.ee = f.ee;
        probes.ee_vel = ee_vel;
        ContactForces contact =
            panel_contact(probes, spec, e.door, cfg_.interaction);
        e.colliding |= contact.colliding;

        applied_hinge = grip.hinge_torque + contact.hinge_torque;
        applied_handle = grip.handle_torque;
        DoorState next_door =
            step_door(e.door, spec, e.sample.dyn, applied_hinge,
                      applied_handle, h);
        e.rs = step_robot(e.rs, act, grip.ee_force + contact.ee_force,
                          contact.base_force, h, e.robot);
        e.door = next_door;
      }
    } catch (const std::exception&) {
      aborted = true;
    }
    if (!aborted && !finite_state(e)) aborted = true;

    e.t += 1;
    info.door_type = e.sample.door_type;

    if (aborted) {
      // never propagate: flag, zero reward, restart the episode
      info.episode_end = true;
      info.nan_abort = true;
      info.stage = e.stage.stage;
      info.theta = e.door.hinge_angle;
      reward = 0.0f;
      done = 1;
      reset_env(i);
      return;
    }

    e.max_theta = std::max(e.max_theta, e.door.hinge_angle);
    double local_x = spec.wall_pose.to_local(e.rs.base.pos).x();
    e.max_local_x = std::max(e.max_local_x, local_x);
    if (!e.crossed_doorway && e.prev_local_x < 0.0 && local_x >= 0.0) {
      // walking around the wall ends must not count as traversal
      double local_y = spec.wall_pose.to_local(e.rs.base.pos).y();
      e.crossed_doorway = std::abs(local_y) <= spec.width / 2.0;
    }
    e.prev_local_x = local_x;

    // end-of-step kinematics feed stage, rewards, and the observation
    FkResult f = fk(e.rs.arm.q, e.rs.base, e.robot);
    HandleFrame hf = handle_frame(spec, e.door);
    Vec3 base3(e.rs.base.pos.x(), e.rs.base.pos.y(), 0);

    DoorTorques net = net_torques(e.door, e.sample.dyn, applied_hinge,
                                  applied_handle);
    e.hinge_internal = applied_hinge - net.hinge;
    e.handle_internal = applied_handle - net.handle;

    e.stage = stage_update(e.stage, e.door.hinge_angle, spec.opening_dir,
                           behind_panel(base3, spec, e.door),
                           behind_panel(f.ee, spec, e.door), local_x > 0.0,
                           cfg_.reward);

    RewardBreakdown b;
    bool grasp_raw = grasp_zone_test(f.ee, f.ee_frame, hf.tip);
    handle_manipulation_terms(f.ee, hf.tip,
                              grasp_orientation_error(f.ee_frame, hf.lever_dir),
                              grasp_raw, e.grasp_raw_prev, e.door.handle_angle,
                              e.sample.dyn.handle_max, cfg_.reward, b);
    e.grasp_raw_prev = grasp_raw;
    open_door_terms(e.door.hinge_angle, zone_membership(base3, spec, e.door),
                    zone_membership(f.ee, spec, e.door), spec.opening_dir,
                    cfg_.reward, b);
    b.r_p = passing_term(e.rs.base.pos, e.rs.base.vel, doorway_frame(spec),
                         e.stage.passed_doorway, cfg_.reward);
    shaping_terms(e.rs.arm.qd, e.rs.arm.qdd, e.rs.base.tilt, f.ee, f.shoulder,
                  a, e.colliding, cfg_.reward, b);
    compose_reward(e.stage.stage, e.door.hinge_angle, spec.opening_dir,
                   cfg_.reward, b);

    e.prev_action = a;

    reward = static_cast<float>(b.total);
    info.breakdown = b;
    info.stage = e.stage.stage;
    info.theta = e.door.hinge_angle;

    if (e.t >= cfg_.episode_len) {
      info.episode_end = true;
      info.opened_enough = opened_enough(i);
      info.passed_through = passed_through(i);
      info.terminal_obs = build_teacher_obs(e);
      done = 1;
      reset_env(i);
    }
  }

  Eigen::VectorXf build_teacher_obs(const EnvState& e) const {
    const DoorSpec& spec = e.sample.spec;
    Eigen::VectorXd o = Eigen::VectorXd::Zero(kTeacherObsDim);
    const BaseState& b = e.rs.base;
    o(0) = b.yaw;
    o(1) = b.tilt;
    Vec2 v_body = rot2(-b.yaw, b.vel);
    o(2) = v_body.x();
    o(3) = v_body.y();
    o(4) = b.yaw_rate;
    for (int i = 0; i < kArmJoints; ++i) {
      o(5 + i) = e.rs.arm.q[static_cast<std::size_t>(i)];
      o(11 + i) = e.rs.arm.qd[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < kActionDim; ++i)
      o(17 + i) = e.prev_action[static_cast<std::size_t>(i)];

    HandleFrame hf = handle_frame(spec, e.door);
    DoorwayFrame dw = doorway_frame(spec);
    Mat3 R_inv = rot_z(-b.yaw);
    Vec3 base3(b.pos.x(), b.pos.y(), 0);
    Vec3 handle_rel = R_inv * (hf.tip - base3);
    Vec3 doorway_rel = R_inv * (dw.center - base3);
    Vec2 through_rel = rot2(-b.yaw, Vec2(dw.through.head<2>()));
    o.segment<3>(26) = handle_rel;
    o.segment<3>(29) = doorway_rel;
    o.segment<2>(32) = through_rel;

    o(34) = e.door.hinge_angle;
    o(35) = e.door.handle_angle;
    o(36) = e.door.hinge_rate;
    o(37) = e.door.handle_rate;
    o(38) = e.sample.dyn.mass;
    o(39) = e.hinge_internal;
    o(40) = e.handle_internal;
    o(41 + e.sample.door_type) = 1.0;
    o(45) = e.stage.stage == Stage::passing ? 1.0 : 0.0;
    return o.cast<float>();
  }

  EnvConfig cfg_;
  std::vector<EnvState> envs_;
};

}  // namespace doorlab
