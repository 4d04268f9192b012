#pragma once

// Experiment configuration: one structured file with sections env,
// randomization, reward, robot, door, ppo, distill, eval. Every key has a
// default; unknown keys are rejected; parse -> serialize -> parse is the
// identity. The config hash covers everything except out_dir/run_name so
// reruns into different directories still match.

#include <array>
#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <string>
#include <vector>

#include "doorlab/distill.hpp"
#include "doorlab/env.hpp"
#include "doorlab/io.hpp"
#include "doorlab/ppo.hpp"

namespace doorlab::cfg {

using io::ConfigError;
using nlohmann::json;

// a single fully specified door, used by replay and repeatability runs
struct DoorConfig {
  std::string opening_dir = "push";
  std::string hinge_side = "right";
  double d_w = 0.9;
  double d_t = 0.04;
  double h_l = 0.10;
  double h_h = 1.0;
  double h_o = 0.06;
  double mass = 30.0;
  double tau_hinge = 0.0;
  double tau_handle = 0.0;
  double k_ar = 0.0;
  double alpha_dc = 0.0;
  double phi_max = deg2rad(60.0);

  int type_index() const {
    if (opening_dir != "push" && opening_dir != "pull")
      throw ConfigError("config: door.opening_dir must be push or pull");
    if (hinge_side != "left" && hinge_side != "right")
      throw ConfigError("config: door.hinge_side must be left or right");
    return door_type_index(
        opening_dir == "pull" ? OpeningDir::pull : OpeningDir::push,
        hinge_side == "right" ? HingeSide::right : HingeSide::left);
  }

  // pins the sampler to exactly this door; episode init stays random
  void apply_pins(RandomizationRanges& r) const {
    r.pin("door_type", type_index());
    r.pin("d_w", d_w);
    r.pin("d_t", d_t);
    r.pin("h_l", h_l);
    r.pin("h_h", h_h);
    r.pin("h_o", h_o);
    r.pin("mass", mass);
    r.pin("tau_hinge", tau_hinge);
    r.pin("tau_hinge_zero_prob", 0.0);
    r.pin("tau_handle", tau_handle);
    r.pin("tau_handle_zero_prob", 0.0);
    r.pin("k_ar", k_ar);
    r.pin("alpha", alpha_dc);
    r.pin("damping_zero_prob", 0.0);
    r.pin("phi_max", phi_max);
  }
};

struct PpoSection {
  ppo::PpoConfig ppo;
  long total_env_steps = 2'000'000;
  int snapshot_interval = 10;  // iterations between best-checkpoint checks
};

struct DistillSection {
  distill::DistillConfig dc;
  long total_env_steps = 1'000'000;
};

struct EvalSection {
  int n_envs = 512;
  int episodes_per_env = 4;
  std::vector<double> resistances{0, 10, 20, 30, 40, 50, 60};
  int repeat_trials = 20;
  int repeat_door_type = 1;
  int export_episodes = 8;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  std::string run_name = "run";
  EnvConfig env;  // also carries the randomization/reward/robot sections
  DoorConfig door;
  PpoSection ppo;
  DistillSection distill;
  EvalSection eval;
};

// ---------------------------------------------------------------------------
// strict parsing helpers

inline void require_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object())
    throw ConfigError("config: section '" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const auto& k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& v, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(v);
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for " + where + "." + key + ": " +
                      e.what());
  }
}

inline void read_range(const json& j, const char* key, Range& r) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(std::string("config: randomization.") + key +
                      " must be [lo, hi]");
  r.lo = v[0].get<double>();
  r.hi = v[1].get<double>();
}

inline json range_json(const Range& r) { return json::array({r.lo, r.hi}); }

// ---------------------------------------------------------------------------
// serialization: every key present, every default visible

inline json dump_config(const ExperimentConfig& c) {
  json env;
  env["dt"] = c.env.dt;
  env["substeps"] = c.env.substeps;
  env["episode_len"] = c.env.episode_len;
  env["n_envs"] = c.env.n_envs;
  env["noise_position"] = c.env.noise.position;
  env["noise_angle"] = c.env.noise.angle;
  env["noise_velocity"] = c.env.noise.velocity;
  env["noise_extero"] = c.env.noise.extero;
  env["k_g"] = c.env.interaction.k_g;
  env["d_g"] = c.env.interaction.d_g;
  env["k_c"] = c.env.interaction.k_c;
  env["d_c"] = c.env.interaction.d_c;
  env["r_b"] = c.env.interaction.r_b;
  env["r_e"] = c.env.interaction.r_e;

  const RandomizationRanges& r = c.env.randomization;
  json rnd;
  rnd["door_type"] = r.door_type_pin;
  rnd["d_w"] = range_json(r.d_w);
  rnd["d_t"] = range_json(r.d_t);
  rnd["h_l"] = range_json(r.h_l);
  rnd["h_h"] = range_json(r.h_h);
  rnd["h_o"] = range_json(r.h_o);
  rnd["mass"] = range_json(r.mass);
  rnd["tau_hinge"] = range_json(r.tau_hinge);
  rnd["tau_hinge_zero_prob"] = r.tau_hinge_zero_prob;
  rnd["tau_handle"] = range_json(r.tau_handle);
  rnd["tau_handle_zero_prob"] = r.tau_handle_zero_prob;
  rnd["k_ar"] = range_json(r.k_ar);
  rnd["alpha"] = range_json(r.alpha);
  rnd["damping_zero_prob"] = r.damping_zero_prob;
  rnd["phi_max"] = range_json(r.phi_max);
  rnd["kp"] = range_json(r.kp);
  rnd["kd"] = range_json(r.kd);
  rnd["d_wall"] = range_json(r.d_wall);
  rnd["d_center"] = range_json(r.d_center);
  rnd["yaw"] = range_json(r.yaw);
  rnd["v_init"] = range_json(r.v_init);

  const RewardConfig& w = c.env.reward;
  json rew;
  rew["theta_target"] = w.theta_target;
  rew["theta_enough"] = w.theta_enough;
  rew["theta_pass"] = w.theta_pass;
  rew["psi_bar"] = w.psi_bar;
  rew["v_max"] = w.v_max;
  rew["open_scale"] = w.open_scale;
  rew["hg_scale"] = w.hg_scale;
  rew["adp_scale"] = w.adp_scale;
  rew["s_ma"] = w.s_ma;
  rew["s_pbt"] = w.s_pbt;
  rew["s_psa"] = w.s_psa;
  rew["s_pcl"] = w.s_pcl;
  rew["s_pc"] = w.s_pc;
  rew["reach_limit"] = w.reach_limit;
  rew["reach_ramp"] = w.reach_ramp;
  rew["action_limit"] = w.action_limit;
  rew["handle_range"] = w.handle_range;

  json rob;
  rob["link_lengths"] = c.env.robot.arm.link_lengths;
  rob["kp"] = c.env.robot.arm.kp;
  rob["kd"] = c.env.robot.arm.kd;
  rob["tau_limits"] = c.env.robot.arm.tau_limit;
  rob["q_default"] = c.env.robot.arm.q_default;
  rob["action_scale"] = c.env.robot.arm.action_scale;
  rob["sigma"] = c.env.robot.arm.saturation;
  rob["tau_loco"] = c.env.robot.base.tau_loco;

  json door;
  door["opening_dir"] = c.door.opening_dir;
  door["hinge_side"] = c.door.hinge_side;
  door["d_w"] = c.door.d_w;
  door["d_t"] = c.door.d_t;
  door["h_l"] = c.door.h_l;
  door["h_h"] = c.door.h_h;
  door["h_o"] = c.door.h_o;
  door["mass"] = c.door.mass;
  door["tau_hinge"] = c.door.tau_hinge;
  door["tau_handle"] = c.door.tau_handle;
  door["k_ar"] = c.door.k_ar;
  door["alpha_dc"] = c.door.alpha_dc;
  door["phi_max"] = c.door.phi_max;

  json ppo;
  ppo["gamma"] = c.ppo.ppo.gamma;
  ppo["lam"] = c.ppo.ppo.lam;
  ppo["clip"] = c.ppo.ppo.clip;
  ppo["epochs"] = c.ppo.ppo.epochs;
  ppo["minibatches"] = c.ppo.ppo.minibatches;
  ppo["lr"] = c.ppo.ppo.lr;
  ppo["value_coef"] = c.ppo.ppo.value_coef;
  ppo["entropy_coef"] = c.ppo.ppo.entropy_coef;
  ppo["grad_clip"] = c.ppo.ppo.grad_clip;
  ppo["rollout_len"] = c.ppo.ppo.rollout_len;
  ppo["total_env_steps"] = c.ppo.total_env_steps;
  ppo["snapshot_interval"] = c.ppo.snapshot_interval;

  json dis;
  dis["lr"] = c.distill.dc.lr;
  dis["imitation_weight"] = c.distill.dc.imitation_weight;
  dis["estimation_weight"] = c.distill.dc.estimation_weight;
  dis["type_weight"] = c.distill.dc.type_weight;
  dis["smooth_l1_beta"] = c.distill.dc.smooth_l1_beta;
  dis["window"] = c.distill.dc.window;
  dis["grad_clip"] = c.distill.dc.grad_clip;
  dis["total_env_steps"] = c.distill.total_env_steps;

  json ev;
  ev["n_envs"] = c.eval.n_envs;
  ev["episodes_per_env"] = c.eval.episodes_per_env;
  ev["resistances"] = c.eval.resistances;
  ev["repeat_trials"] = c.eval.repeat_trials;
  ev["repeat_door_type"] = c.eval.repeat_door_type;
  ev["export_episodes"] = c.eval.export_episodes;

  return json{{"seed", c.seed},   {"out_dir", c.out_dir},
              {"run_name", c.run_name}, {"env", env},
              {"randomization", rnd},   {"reward", rew},
              {"robot", rob},           {"door", door},
              {"ppo", ppo},             {"distill", dis},
              {"eval", ev}};
}

inline ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  require_keys(j, {"seed", "out_dir", "run_name", "env", "randomization",
                   "reward", "robot", "door", "ppo", "distill", "eval"},
               "top level");
  read_if(j, "seed", c.seed, "top level");
  read_if(j, "out_dir", c.out_dir, "top level");
  read_if(j, "run_name", c.run_name, "top level");

  if (j.contains("env")) {
    const json& e = j.at("env");
    require_keys(e,
                 {"dt", "substeps", "episode_len", "n_envs", "noise_position",
                  "noise_angle", "noise_velocity", "noise_extero", "k_g",
                  "d_g", "k_c", "d_c", "r_b", "r_e"},
                 "env");
    read_if(e, "dt", c.env.dt, "env");
    read_if(e, "substeps", c.env.substeps, "env");
    read_if(e, "episode_len", c.env.episode_len, "env");
    read_if(e, "n_envs", c.env.n_envs, "env");
    read_if(e, "noise_position", c.env.noise.position, "env");
    read_if(e, "noise_angle", c.env.noise.angle, "env");
    read_if(e, "noise_velocity", c.env.noise.velocity, "env");
    read_if(e, "noise_extero", c.env.noise.extero, "env");
    read_if(e, "k_g", c.env.interaction.k_g, "env");
    read_if(e, "d_g", c.env.interaction.d_g, "env");
    read_if(e, "k_c", c.env.interaction.k_c, "env");
    read_if(e, "d_c", c.env.interaction.d_c, "env");
    read_if(e, "r_b", c.env.interaction.r_b, "env");
    read_if(e, "r_e", c.env.interaction.r_e, "env");
  }

  if (j.contains("randomization")) {
    const json& s = j.at("randomization");
    require_keys(s,
                 {"door_type", "d_w", "d_t", "h_l", "h_h", "h_o", "mass",
                  "tau_hinge", "tau_hinge_zero_prob", "tau_handle",
                  "tau_handle_zero_prob", "k_ar", "alpha", "damping_zero_prob",
                  "phi_max", "kp", "kd", "d_wall", "d_center", "yaw",
                  "v_init"},
                 "randomization");
    RandomizationRanges& r = c.env.randomization;
    read_if(s, "door_type", r.door_type_pin, "randomization");
    read_range(s, "d_w", r.d_w);
    read_range(s, "d_t", r.d_t);
    read_range(s, "h_l", r.h_l);
    read_range(s, "h_h", r.h_h);
    read_range(s, "h_o", r.h_o);
    read_range(s, "mass", r.mass);
    read_range(s, "tau_hinge", r.tau_hinge);
    read_if(s, "tau_hinge_zero_prob", r.tau_hinge_zero_prob, "randomization");
    read_range(s, "tau_handle", r.tau_handle);
    read_if(s, "tau_handle_zero_prob", r.tau_handle_zero_prob,
            "randomization");
    read_range(s, "k_ar", r.k_ar);
    read_range(s, "alpha", r.alpha);
    read_if(s, "damping_zero_prob", r.damping_zero_prob, "randomization");
    read_range(s, "phi_max", r.phi_max);
    read_range(s, "kp", r.kp);
    read_range(s, "kd", r.kd);
    read_range(s, "d_wall", r.d_wall);
    read_range(s, "d_center", r.d_center);
    read_range(s, "yaw", r.yaw);
    read_range(s, "v_init", r.v_init);
  }

  if (j.contains("reward")) {
    const json& s = j.at("reward");
    require_keys(s,
                 {"theta_target", "theta_enough", "theta_pass", "psi_bar",
                  "v_max", "open_scale", "hg_scale", "adp_scale", "s_ma",
                  "s_pbt", "s_psa", "s_pcl", "s_pc", "reach_limit",
                  "reach_ramp", "action_limit", "handle_range"},
                 "reward");
    RewardConfig& w = c.env.reward;
    read_if(s, "theta_target", w.theta_target, "reward");
    read_if(s, "theta_enough", w.theta_enough, "reward");
    read_if(s, "theta_pass", w.theta_pass, "reward");
    read_if(s, "psi_bar", w.psi_bar, "reward");
    read_if(s, "v_max", w.v_max, "reward");
    read_if(s, "open_scale", w.open_scale, "reward");
    read_if(s, "hg_scale", w.hg_scale, "reward");
    read_if(s, "adp_scale", w.adp_scale, "reward");
    read_if(s, "s_ma", w.s_ma, "reward");
    read_if(s, "s_pbt", w.s_pbt, "reward");
    read_if(s, "s_psa", w.s_psa, "reward");
    read_if(s, "s_pcl", w.s_pcl, "reward");
    read_if(s, "s_pc", w.s_pc, "reward");
    read_if(s, "reach_limit", w.reach_limit, "reward");
    read_if(s, "reach_ramp", w.reach_ramp, "reward");
    read_if(s, "action_limit", w.action_limit, "reward");
    read_if(s, "handle_range", w.handle_range, "reward");
  }

  if (j.contains("robot")) {
    const json& s = j.at("robot");
    require_keys(s,
                 {"link_lengths", "kp", "kd", "tau_limits", "q_default",
                  "action_scale", "sigma", "tau_loco"},
                 "robot");
    ArmParams& a = c.env.robot.arm;
    read_if(s, "link_lengths", a.link_lengths, "robot");
    read_if(s, "kp", a.kp, "robot");
    read_if(s, "kd", a.kd, "robot");
    read_if(s, "tau_limits", a.tau_limit, "robot");
    read_if(s, "q_default", a.q_default, "robot");
    read_if(s, "action_scale", a.action_scale, "robot");
    read_if(s, "sigma", a.saturation, "robot");
    read_if(s, "tau_loco", c.env.robot.base.tau_loco, "robot");
  }

  if (j.contains("door")) {
    const json& s = j.at("door");
    require_keys(s,
                 {"opening_dir", "hinge_side", "d_w", "d_t", "h_l", "h_h",
                  "h_o", "mass", "tau_hinge", "tau_handle", "k_ar",
                  "alpha_dc", "phi_max"},
                 "door");
    DoorConfig& d = c.door;
    read_if(s, "opening_dir", d.opening_dir, "door");
    read_if(s, "hinge_side", d.hinge_side, "door");
    read_if(s, "d_w", d.d_w, "door");
    read_if(s, "d_t", d.d_t, "door");
    read_if(s, "h_l", d.h_l, "door");
    read_if(s, "h_h", d.h_h, "door");
    read_if(s, "h_o", d.h_o, "door");
    read_if(s, "mass", d.mass, "door");
    read_if(s, "tau_hinge", d.tau_hinge, "door");
    read_if(s, "tau_handle", d.tau_handle, "door");
    read_if(s, "k_ar", d.k_ar, "door");
    read_if(s, "alpha_dc", d.alpha_dc, "door");
    read_if(s, "phi_max", d.phi_max, "door");
    d.type_index();  // validates the two enum strings
  }

  if (j.contains("ppo")) {
    const json& s = j.at("ppo");
    require_keys(s,
                 {"gamma", "lam", "clip", "epochs", "minibatches", "lr",
                  "value_coef", "entropy_coef", "grad_clip", "rollout_len",
                  "total_env_steps", "snapshot_interval"},
                 "ppo");
    ppo::PpoConfig& p = c.ppo.ppo;
    read_if(s, "gamma", p.gamma, "ppo");
    read_if(s, "lam", p.lam, "ppo");
    read_if(s, "clip", p.clip, "ppo");
    read_if(s, "epochs", p.epochs, "ppo");
    read_if(s, "minibatches", p.minibatches, "ppo");
    read_if(s, "lr", p.lr, "ppo");
    read_if(s, "value_coef", p.value_coef, "ppo");
    read_if(s, "entropy_coef", p.entropy_coef, "ppo");
    read_if(s, "grad_clip", p.grad_clip, "ppo");
    read_if(s, "rollout_len", p.rollout_len, "ppo");
    read_if(s, "total_env_steps", c.ppo.total_env_steps, "ppo");
    read_if(s, "snapshot_interval", c.ppo.snapshot_interval, "ppo");
  }

  if (j.contains("distill")) {
    const json& s = j.at("distill");
    require_keys(s,
                 {"lr", "imitation_weight", "estimation_weight", "type_weight",
                  "smooth_l1_beta", "window", "grad_clip", "total_env_steps"},
                 "distill");
    distill::DistillConfig& d = c.distill.dc;
    read_if(s, "lr", d.lr, "distill");
    read_if(s, "imitation_weight", d.imitation_weight, "distill");
    read_if(s, "estimation_weight", d.estimation_weight, "distill");
    read_if(s, "type_weight", d.type_weight, "distill");
    read_if(s, "smooth_l1_beta", d.smooth_l1_beta, "distill");
    read_if(s, "window", d.window, "distill");
    read_if(s, "grad_clip", d.grad_clip, "distill");
    read_if(s, "total_env_steps", c.distill.total_env_steps, "distill");
  }

  if (j.contains("eval")) {
    const json& s = j.at("eval");
    require_keys(s,
                 {"n_envs", "episodes_per_env", "resistances", "repeat_trials",
                  "repeat_door_type", "export_episodes"},
                 "eval");
    EvalSection& e = c.eval;
    read_if(s, "n_envs", e.n_envs, "eval");
    read_if(s, "episodes_per_env", e.episodes_per_env, "eval");
    read_if(s, "resistances", e.resistances, "eval");
    read_if(s, "repeat_trials", e.repeat_trials, "eval");
    read_if(s, "repeat_door_type", e.repeat_door_type, "eval");
    read_if(s, "export_episodes", e.export_episodes, "eval");
  }

  try {
    c.env.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.ppo.ppo.epochs < 1 || c.ppo.ppo.minibatches < 1 ||
      c.ppo.ppo.rollout_len < 1 || c.ppo.total_env_steps < 1 ||
      c.ppo.snapshot_interval < 1)
    throw ConfigError("config: ppo counts must be positive");
  if (c.distill.dc.window < 1)
    throw ConfigError("config: distill.window must be >= 1");
  if (c.distill.dc.imitation_weight < 0 || c.distill.dc.estimation_weight < 0 ||
      c.distill.dc.type_weight < 0)
    throw ConfigError("config: distill weights must be >= 0");
  if (c.distill.total_env_steps < 1)
    throw ConfigError("config: distill.total_env_steps must be positive");
  if (c.eval.n_envs < 1 || c.eval.episodes_per_env < 1 ||
      c.eval.repeat_trials < 1 || c.eval.export_episodes < 1)
    throw ConfigError("config: eval counts must be positive");
  if (c.eval.repeat_door_type < 0 || c.eval.repeat_door_type >= kDoorTypes)
    throw ConfigError("config: eval.repeat_door_type outside 0..3");
  for (double lvl : c.eval.resistances)
    if (lvl < 0) throw ConfigError("config: eval.resistances must be >= 0");
  return c;
}

// "section.key=value" (nested via dots); value is JSON if it parses, else a
// bare string
inline void apply_set(json& j, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("config: --set expects section.key=value, got '" +
                      assignment + "'");
  std::string path = assignment.substr(0, eq);
  std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json* cur = &j;
  std::size_t start = 0;
  while (true) {
    std::size_t dot = path.find('.', start);
    if (dot == std::string::npos) break;
    cur = &(*cur)[path.substr(start, dot - start)];
    start = dot + 1;
  }
  (*cur)[path.substr(start)] = value;
}

inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& sets = {},
                                    const std::vector<std::string>& freezes =
                                        {}) {
  json j = json::object();
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config: parse error in " + path);
  }
  for (const auto& s : sets) apply_set(j, s);
  ExperimentConfig c = parse_config(j);
  for (const auto& name : freezes) {
    try {
      c.env.randomization.freeze(name);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: --freeze ") + name + ": " +
                        e.what());
    }
  }
  return c;
}

// excludes out_dir/run_name so relocated reruns hash identically
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  json j = dump_config(c);
  j.erase("out_dir");
  j.erase("run_name");
  return io::fnv1a64(j.dump());
}

inline json obs_layout_json() {
  json teacher = json::array();
  for (const auto& f : teacher_obs_layout())
    teacher.push_back(
        {{"name", f.name}, {"start", f.start}, {"len", f.len}});
  json student = json::array();
  for (const auto& f : student_obs_layout())
    student.push_back(
        {{"name", f.name}, {"start", f.start}, {"len", f.len}});
  json map = json::array();
  for (int idx : student_index_map()) map.push_back(idx);
  return json{{"layout_version", kObsLayoutVersion},
              {"teacher_dim", kTeacherObsDim},
              {"student_dim", kStudentObsDim},
              {"teacher", teacher},
              {"student", student},
              {"student_index_map", map}};
}

}  // namespace doorlab::cfg
