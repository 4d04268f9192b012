// Experiment workbench: teacher training, student distillation, evaluation
// protocols, exports, and action replay. One process per run; every run
// directory gets a config snapshot, the observation layout, and logs that
// embed (config hash, seed, layout version).
//
// Exit codes: 0 ok, 2 config error, 3 checkpoint error, 4 NaN abort,
// 1 anything else.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "doorlab/config.hpp"
#include "doorlab/distill.hpp"
#include "doorlab/env.hpp"
#include "doorlab/eval.hpp"
#include "doorlab/io.hpp"
#include "doorlab/nn.hpp"
#include "doorlab/ppo.hpp"

namespace {

using namespace doorlab;
using io::CheckpointError;
using io::ConfigError;
using io::CsvWriter;
using io::JsonlWriter;
using io::LogMeta;
using io::NanAbortError;
using nlohmann::json;

const char* kTypeNames[kDoorTypes] = {"push-left", "push-right", "pull-left",
                                      "pull-right"};

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::vector<std::string> freezes;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string run_name;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool needs_run_dir) {
  cmd->add_option("--config", o.config_path, "experiment config file (JSON)");
  cmd->add_option("--set", o.sets,
                  "override a config value, section.key=value (repeatable)");
  cmd->add_option("--freeze", o.freezes,
                  "pin a randomization range (or group, or 'all') to its "
                  "midpoint (repeatable)");
  cmd->add_option("--seed", o.seed, "experiment seed (overrides config)");
  if (needs_run_dir) {
    cmd->add_option("--out", o.out_dir, "output root directory");
    cmd->add_option("--name", o.run_name, "run name (subdirectory)");
  }
}

cfg::ExperimentConfig load_experiment(const CommonOpts& o) {
  cfg::ExperimentConfig c =
      cfg::load_config(o.config_path, o.sets, o.freezes);
  if (o.seed) c.seed = *o.seed;
  if (!o.out_dir.empty()) c.out_dir = o.out_dir;
  if (!o.run_name.empty()) c.run_name = o.run_name;
  return c;
}

// config snapshot + observation layout, written into every run directory
LogMeta write_preamble(const io::RunDir& run, const cfg::ExperimentConfig& c) {
  {
    std::ofstream f(run.file("config.json"), std::ios::trunc);
    f << cfg::dump_config(c).dump(2) << '\n';
    if (!f) throw std::runtime_error("cannot write config snapshot");
  }
  {
    std::ofstream f(run.file("obs_layout.json"), std::ios::trunc);
    f << cfg::obs_layout_json().dump(2) << '\n';
    if (!f) throw std::runtime_error("cannot write obs layout");
  }
  return LogMeta{cfg::config_hash(c), c.seed};
}

// ---------------------------------------------------------------------------
// checkpoints

json checkpoint_header_checked(const std::string& path) {
  json h;
  try {
    h = nn::read_checkpoint_header(path);
  } catch (const std::exception& e) {
    std::ifstream probe(path);
    if (!probe) throw CheckpointError("checkpoint not found: " + path);
    throw CheckpointError(e.what());
  }
  if (!h.contains("layout_version") ||
      h.at("layout_version") != kObsLayoutVersion)
    throw CheckpointError("checkpoint layout version mismatch in " + path);
  if (!h.contains("kind"))
    throw CheckpointError("checkpoint missing kind in " + path);
  return h;
}

struct LoadedTeacher {
  std::unique_ptr<nn::ActorCritic<float>> net;
  nn::RunningNorm norm;
  bool privileged = true;
  json header;
};

LoadedTeacher load_teacher(const std::string& path) {
  LoadedTeacher t;
  t.header = checkpoint_header_checked(path);
  if (t.header.at("kind") != "teacher")
    throw CheckpointError("checkpoint kind mismatch: expected teacher in " +
                          path);
  try {
    int obs = t.header.at("obs_dim").get<int>();
    int act = t.header.at("act_dim").get<int>();
    RngStream rng = RngStream::keyed(0);
    t.net = std::make_unique<nn::ActorCritic<float>>(obs, act, rng);
    nn::load_checkpoint(path, t.net->store);
    t.norm = nn::RunningNorm::from_json(t.header.at("obs_norm"));
    t.privileged = t.header.at("privileged").get<bool>();
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(e.what());
  }
  return t;
}

struct LoadedStudent {
  std::unique_ptr<nn::StudentNet<float>> net;
  nn::RunningNorm norm;
  bool recurrent = true;
  json header;
};

LoadedStudent load_student(const std::string& path) {
  LoadedStudent s;
  s.header = checkpoint_header_checked(path);
  if (s.header.at("kind") != "student")
    throw CheckpointError("checkpoint kind mismatch: expected student in " +
                          path);
  try {
    s.recurrent = s.header.at("recurrent").get<bool>();
    RngStream rng = RngStream::keyed(0);
    s.net = std::make_unique<nn::StudentNet<float>>(
        kStudentObsDim, kActionDim, s.recurrent, rng);
    nn::load_checkpoint(path, s.net->store);
    s.norm = nn::RunningNorm::from_json(s.header.at("obs_norm"));
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(e.what());
  }
  return s;
}

// either network kind behind the uniform policy interface
struct AnyPolicy {
  LoadedTeacher teacher;
  LoadedStudent student;
  std::unique_ptr<eval::TeacherPolicy> tp;
  std::unique_ptr<eval::StudentPolicy> sp;
};

AnyPolicy load_policy(const std::string& path) {
  AnyPolicy p;
  json h = checkpoint_header_checked(path);
  if (h.at("kind") == "teacher") {
    p.teacher = load_teacher(path);
    p.tp = std::make_unique<eval::TeacherPolicy>(
        *p.teacher.net, p.teacher.norm, p.teacher.privileged);
  } else {
    p.student = load_student(path);
    p.sp = std::make_unique<eval::StudentPolicy>(*p.student.net,
                                                 p.student.norm);
  }
  return p;
}

template <typename F>
auto with_policy(AnyPolicy& p, F&& f) {
  return p.tp ? f(*p.tp) : f(*p.sp);
}

// ---------------------------------------------------------------------------
// train-teacher

int cmd_train_teacher(const CommonOpts& opts, bool student_view) {
  cfg::ExperimentConfig c = load_experiment(opts);
  io::RunDir run(c.out_dir, c.run_name);
  LogMeta meta = write_preamble(run, c);

  EnvConfig ec = c.env;
  ec.seed = c.seed;
  VecEnv env(ec);
  ppo::PpoConfig pc = c.ppo.ppo;
  pc.seed = c.seed;
  ppo::PpoTrainer trainer(env, !student_view, pc, c.seed);

  JsonlWriter curves(run.file("teacher_curves.jsonl"), meta);
  const long steps_per_iter =
      static_cast<long>(pc.rollout_len) * ec.n_envs;
  const long iters =
      std::max(1L, (c.ppo.total_env_steps + steps_per_iter - 1) /
                       steps_per_iter);
  double best_opened = -1.0;

  auto save = [&](const std::string& name) {
    json md;
    md["kind"] = "teacher";
    md["privileged"] = !student_view;
    md["obs_dim"] = trainer.net().obs_dim;
    md["act_dim"] = trainer.net().act_dim;
    md["obs_norm"] = trainer.obs_norm().to_json();
    md["config_hash"] = io::hex64(meta.config_hash);
    md["seed"] = c.seed;
    md["layout_version"] = kObsLayoutVersion;
    md["env_steps"] = trainer.env_steps();
    nn::save_checkpoint(run.file(name), trainer.net().store, md);
  };

  for (long it = 0; it < iters; ++it) {
    ppo::IterStats st = trainer.train_iteration();
    if (!std::isfinite(st.update.policy_loss) ||
        !std::isfinite(st.update.value_loss))
      throw NanAbortError("nan abort: non-finite loss at step " +
                          std::to_string(trainer.env_steps()));
    curves.write(json{{"step", trainer.env_steps()},
                      {"iter", it},
                      {"policy_loss", st.update.policy_loss},
                      {"value_loss", st.update.value_loss},
                      {"entropy", st.update.entropy},
                      {"approx_kl", st.update.approx_kl},
                      {"clip_frac", st.update.clip_frac},
                      {"opened_rate", trainer.opened_rate()},
                      {"passed_rate", trainer.passed_rate()}});
    if ((it + 1) % c.ppo.snapshot_interval == 0 || it + 1 == iters) {
      double opened = trainer.opened_rate();
      if (opened > best_opened) {
        best_opened = opened;
        save("best.ckpt");
      }
    }
  }
  save("teacher.ckpt");
  std::printf("teacher trained: %ld env steps, opened %.3f passed %.3f\n",
              trainer.env_steps(), trainer.opened_rate(),
              trainer.passed_rate());
  return 0;
}

// ---------------------------------------------------------------------------
// train-student

int cmd_train_student(const CommonOpts& opts, const std::string& teacher_path,
                      const std::string& ablate) {
  cfg::ExperimentConfig c = load_experiment(opts);
  io::RunDir run(c.out_dir, c.run_name);
  LogMeta meta = write_preamble(run, c);

  LoadedTeacher teacher = load_teacher(teacher_path);
  if (!teacher.privileged)
    throw CheckpointError(
        "checkpoint mismatch: distillation needs a privileged teacher");

  EnvConfig ec = c.env;
  ec.seed = c.seed;
  VecEnv env(ec);

  distill::DistillConfig dc = c.distill.dc;
  dc.seed = c.seed;
  if (ablate == "no-estimation") dc.no_estimation_loss = true;
  if (ablate == "mlp") dc.mlp_student = true;
  distill::DistillTrainer trainer(env, *teacher.net, teacher.norm, dc,
                                  c.seed);

  JsonlWriter curves(run.file("student_curves.jsonl"), meta);
  const long steps_per_window = static_cast<long>(dc.window) * ec.n_envs;
  const long windows =
      std::max(1L, (c.distill.total_env_steps + steps_per_window - 1) /
                       steps_per_window);
  for (long w = 0; w < windows; ++w) {
    distill::WindowStats st = trainer.train_window();
    if (!std::isfinite(st.losses.total))
      throw NanAbortError("nan abort: non-finite loss at step " +
                          std::to_string(trainer.env_steps()));
    curves.write(json{{"step", trainer.env_steps()},
                      {"imitation", st.losses.imitation},
                      {"estimation", st.losses.estimation},
                      {"door_type", st.losses.type_ce}});
  }
  if (!trainer.teacher_unchanged())
    throw std::runtime_error("teacher parameters changed during distillation");

  json md;
  md["kind"] = "student";
  md["recurrent"] = !dc.mlp_student;
  md["obs_dim"] = kStudentObsDim;
  md["act_dim"] = kActionDim;
  md["obs_norm"] = trainer.student_norm().to_json();
  md["teacher_hash"] = io::hex64(trainer.teacher_hash());
  md["config_hash"] = io::hex64(meta.config_hash);
  md["seed"] = c.seed;
  md["layout_version"] = kObsLayoutVersion;
  md["env_steps"] = trainer.env_steps();
  nn::save_checkpoint(run.file("student.ckpt"), trainer.student().store, md);
  std::printf("student trained: %ld env steps\n", trainer.env_steps());
  return 0;
}

// ---------------------------------------------------------------------------
// eval protocols

std::string ci_str(const eval::RateCI& ci) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f [%.3f, %.3f]", ci.rate, ci.lo, ci.hi);
  return buf;
}

int cmd_eval(const CommonOpts& opts, const std::string& ckpt,
             const std::string& protocol) {
  cfg::ExperimentConfig c = load_experiment(opts);
  io::RunDir run(c.out_dir, c.run_name);
  LogMeta meta = write_preamble(run, c);
  AnyPolicy pol = load_policy(ckpt);

  EnvConfig ec = c.env;
  ec.seed = c.seed;
  ec.n_envs = c.eval.n_envs;

  if (protocol == "grid") {
    auto rows = with_policy(pol, [&](auto& p) {
      return eval::evaluate_grid(ec, p, c.eval.episodes_per_env);
    });
    CsvWriter csv(run.file("grid.csv"), meta,
                  {"door_type", "trials", "opened_rate", "opened_lo",
                   "opened_hi", "passed_rate", "passed_lo", "passed_hi"});
    std::printf("%-11s %-7s %-22s %s\n", "door_type", "trials", "opened",
                "passed");
    for (const auto& r : rows) {
      csv.row({kTypeNames[r.door_type], CsvWriter::num(r.opened.trials),
               CsvWriter::num(r.opened.rate), CsvWriter::num(r.opened.lo),
               CsvWriter::num(r.opened.hi), CsvWriter::num(r.passed.rate),
               CsvWriter::num(r.passed.lo), CsvWriter::num(r.passed.hi)});
      std::printf("%-11s %-7d %-22s %s\n", kTypeNames[r.door_type],
                  r.opened.trials, ci_str(r.opened).c_str(),
                  ci_str(r.passed).c_str());
    }
    return 0;
  }
  if (protocol == "repeatability") {
    // the door section fixes the physical door; type alternates per side
    c.door.apply_pins(ec.randomization);
    ec.n_envs = 1;
    auto res = with_policy(pol, [&](auto& p) {
      return eval::repeatability(ec, p, c.eval.repeat_door_type,
                                 c.eval.repeat_trials);
    });
    CsvWriter csv(run.file("repeatability.csv"), meta,
                  {"door_type", "trials", "opened", "passed"});
    csv.row({kTypeNames[res.door_type_a], CsvWriter::num(res.opened_a.trials),
             CsvWriter::num(res.opened_a.hits),
             CsvWriter::num(res.passed_a.hits)});
    csv.row({kTypeNames[res.door_type_b], CsvWriter::num(res.opened_b.trials),
             CsvWriter::num(res.opened_b.hits),
             CsvWriter::num(res.passed_b.hits)});
    int total = res.passed_a.trials + res.passed_b.trials;
    int passed = res.passed_a.hits + res.passed_b.hits;
    std::printf("%s: opened %d/%d passed %d/%d\n",
                kTypeNames[res.door_type_a], res.opened_a.hits,
                res.opened_a.trials, res.passed_a.hits, res.passed_a.trials);
    std::printf("%s: opened %d/%d passed %d/%d\n",
                kTypeNames[res.door_type_b], res.opened_b.hits,
                res.opened_b.trials, res.passed_b.hits, res.passed_b.trials);
    std::printf("overall passed %d/%d (%s)\n", passed, total,
                ci_str(eval::wilson(passed, total)).c_str());
    return 0;
  }
  throw ConfigError("config: unknown protocol '" + protocol +
                    "' (grid or repeatability)");
}

int cmd_sweep(const CommonOpts& opts, const std::string& ckpt,
              std::vector<double> levels) {
  cfg::ExperimentConfig c = load_experiment(opts);
  if (levels.empty()) levels = c.eval.resistances;
  io::RunDir run(c.out_dir, c.run_name);
  LogMeta meta = write_preamble(run, c);
  AnyPolicy pol = load_policy(ckpt);

  EnvConfig ec = c.env;
  ec.seed = c.seed;
  ec.n_envs = c.eval.n_envs;
  auto rows = with_policy(pol, [&](auto& p) {
    return eval::resistance_sweep(ec, p, levels, c.eval.episodes_per_env);
  });

  CsvWriter csv(run.file("sweep.csv"), meta,
                {"resistance", "trials", "opened_rate", "opened_lo",
                 "opened_hi", "passed_rate", "passed_lo", "passed_hi"});
  std::printf("%-11s %-7s %-22s %s\n", "resistance", "trials", "opened",
              "passed");
  for (const auto& r : rows) {
    csv.row({CsvWriter::num(r.resistance), CsvWriter::num(r.opened.trials),
             CsvWriter::num(r.opened.rate), CsvWriter::num(r.opened.lo),
             CsvWriter::num(r.opened.hi), CsvWriter::num(r.passed.rate),
             CsvWriter::num(r.passed.lo), CsvWriter::num(r.passed.hi)});
    std::printf("%-11.1f %-7d %-22s %s\n", r.resistance, r.opened.trials,
                ci_str(r.opened).c_str(), ci_str(r.passed).c_str());
  }
  std::printf("pass rate non-increasing within one CI width: %s\n",
              eval::sweep_monotone_within_ci(rows) ? "yes" : "no");
  return 0;
}

int cmd_export_hidden(const CommonOpts& opts, const std::string& ckpt,
                      int episodes) {
  cfg::ExperimentConfig c = load_experiment(opts);
  io::RunDir run(c.out_dir, c.run_name);
  LogMeta meta = write_preamble(run, c);
  AnyPolicy pol = load_policy(ckpt);
  if (!pol.sp)
    throw CheckpointError(
        "checkpoint mismatch: export-hidden needs a student checkpoint");

  EnvConfig ec = c.env;
  ec.seed = c.seed;
  if (episodes <= 0) episodes = c.eval.export_episodes;
  auto rows = eval::export_hidden_states(ec, *pol.sp, episodes);

  std::vector<std::string> cols{"episode", "t", "door_type"};
  for (int i = 0; i < nn::kStudentHidden; ++i)
    cols.push_back("h" + std::to_string(i));
  CsvWriter csv(run.file("hidden.csv"), meta, cols);
  Eigen::MatrixXd X(nn::kStudentHidden, static_cast<long>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<std::string> cells{CsvWriter::num(rows[i].episode),
                                   CsvWriter::num(rows[i].t),
                                   CsvWriter::num(rows[i].door_type)};
    for (int k = 0; k < nn::kStudentHidden; ++k)
      cells.push_back(CsvWriter::num(rows[i].hidden(k)));
    csv.row(cells);
    X.col(static_cast<long>(i)) = rows[i].hidden.cast<double>();
  }

  eval::Pca2 pca = eval::fit_pca2(X);
  CsvWriter pcsv(run.file("hidden_pca.csv"), meta,
                 {"episode", "t", "door_type", "p0", "p1"});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Eigen::Vector2d p = pca.project(X.col(static_cast<long>(i)));
    pcsv.row({CsvWriter::num(rows[i].episode), CsvWriter::num(rows[i].t),
              CsvWriter::num(rows[i].door_type), CsvWriter::num(p(0)),
              CsvWriter::num(p(1))});
  }
  std::printf("exported %zu hidden states over %d episodes\n", rows.size(),
              episodes);
  return 0;
}

int cmd_export_type_probs(const CommonOpts& opts, const std::string& ckpt,
                          int episodes) {
  cfg::ExperimentConfig c = load_experiment(opts);
  io::RunDir run(c.out_dir, c.run_name);
  LogMeta meta = write_preamble(run, c);
  AnyPolicy pol = load_policy(ckpt);
  if (!pol.sp)
    throw CheckpointError(
        "checkpoint mismatch: export-type-probs needs a student checkpoint");

  EnvConfig ec = c.env;
  ec.seed = c.seed;
  if (episodes <= 0) episodes = c.eval.export_episodes;
  auto rows = eval::export_type_probs(ec, *pol.sp, episodes);

  std::vector<std::string> cols{"episode", "t", "true_type",
                                "p0", "p1", "p2", "p3"};
  for (int i = 0; i < kActionDim; ++i) cols.push_back("a" + std::to_string(i));
  CsvWriter csv(run.file("type_probs.csv"), meta, cols);
  int end_correct = 0, end_total = 0;
  for (const auto& r : rows) {
    std::vector<std::string> cells{CsvWriter::num(r.episode),
                                   CsvWriter::num(r.t),
                                   CsvWriter::num(r.true_type)};
    for (double p : r.p) cells.push_back(CsvWriter::num(p));
    for (int i = 0; i < kActionDim; ++i)
      cells.push_back(CsvWriter::num(static_cast<double>(r.action(i))));
    csv.row(cells);
    if (r.t == ec.episode_len - 1) {
      int argmax = 0;
      for (int k = 1; k < kDoorTypes; ++k)
        if (r.p[static_cast<std::size_t>(k)] >
            r.p[static_cast<std::size_t>(argmax)])
          argmax = k;
      end_correct += argmax == r.true_type ? 1 : 0;
      end_total += 1;
    }
  }
  std::printf("episode-end door type accuracy: %d/%d\n", end_correct,
              end_total);
  return 0;
}

// ---------------------------------------------------------------------------
// replay

std::vector<Eigen::VectorXf> read_actions(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open action file " + path);
  std::vector<Eigen::VectorXf> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    Eigen::VectorXf a(kActionDim);
    std::stringstream ss(line);
    std::string cell;
    int i = 0;
    while (std::getline(ss, cell, ',')) {
      if (i >= kActionDim) break;
      try {
        a(i) = std::stof(cell);
      } catch (const std::exception&) {
        throw ConfigError("config: bad action value '" + cell + "' in " +
                          path);
      }
      i += 1;
    }
    if (i != kActionDim)
      throw ConfigError("config: action rows need " +
                        std::to_string(kActionDim) + " values in " + path);
    out.push_back(a);
  }
  if (out.empty()) throw ConfigError("config: no actions in " + path);
  return out;
}

int cmd_replay(const CommonOpts& opts, const std::string& actions_path) {
  cfg::ExperimentConfig c = load_experiment(opts);
  io::RunDir run(c.out_dir, c.run_name);
  LogMeta meta = write_preamble(run, c);

  EnvConfig ec = c.env;
  ec.seed = c.seed;
  ec.n_envs = 1;
  c.door.apply_pins(ec.randomization);
  VecEnv env(ec);

  auto actions = read_actions(actions_path);
  CsvWriter csv(run.file("trace.csv"), meta,
                {"t",     "theta", "phi",   "stage", "r_ehd", "r_th",
                 "r_eho", "r_hg",  "r_plg", "r_od",  "r_adp", "r_hm",
                 "r_o",   "r_p",   "r_ma",  "r_pbt", "r_psa", "r_pcl",
                 "r_pc",  "r_s",   "total", "opened", "passed"});
  // one horizon at most; a mid-trace reset would splice two episodes
  long steps = std::min(static_cast<long>(actions.size()),
                        static_cast<long>(ec.episode_len));
  for (long t = 0; t < steps; ++t) {
    Eigen::MatrixXf a = actions[static_cast<std::size_t>(t)];
    StepOut out = env.step(a);
    const StepInfo& i = out.info[0];
    const RewardBreakdown& b = i.breakdown;
    double phi = out.done[0] ? std::numeric_limits<double>::quiet_NaN()
                             : env.state(0).door.handle_angle;
    csv.row({CsvWriter::num(t), CsvWriter::num(i.theta), CsvWriter::num(phi),
             CsvWriter::num(static_cast<int>(i.stage)), CsvWriter::num(b.r_ehd),
             CsvWriter::num(b.r_th), CsvWriter::num(b.r_eho),
             CsvWriter::num(b.r_hg), CsvWriter::num(b.r_plg),
             CsvWriter::num(b.r_od), CsvWriter::num(b.r_adp),
             CsvWriter::num(b.r_hm), CsvWriter::num(b.r_o),
             CsvWriter::num(b.r_p), CsvWriter::num(b.r_ma),
             CsvWriter::num(b.r_pbt), CsvWriter::num(b.r_psa),
             CsvWriter::num(b.r_pcl), CsvWriter::num(b.r_pc),
             CsvWriter::num(b.r_s), CsvWriter::num(b.total),
             CsvWriter::num(out.done[0] ? (i.opened_enough ? 1 : 0)
                                        : (env.opened_enough(0) ? 1 : 0)),
             CsvWriter::num(out.done[0] ? (i.passed_through ? 1 : 0)
                                        : (env.passed_through(0) ? 1 : 0))});
  }
  std::printf("replayed %ld steps\n", steps);
  return 0;
}

int cmd_print_config(const CommonOpts& opts) {
  cfg::ExperimentConfig c = load_experiment(opts);
  std::cout << cfg::dump_config(c).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"door opening and traversal: training and evaluation"};
  app.require_subcommand(1);

  CommonOpts o_teacher, o_student, o_eval, o_sweep, o_hidden, o_probs,
      o_replay, o_print;
  bool student_view = false;
  std::string teacher_ckpt, ablate, eval_ckpt, sweep_ckpt, hidden_ckpt,
      probs_ckpt, actions_path;
  std::string protocol = "grid";
  std::vector<double> sweep_levels;
  int hidden_episodes = 0, probs_episodes = 0;

  CLI::App* t = app.add_subcommand("train-teacher",
                                   "PPO teacher on privileged observations");
  add_common(t, o_teacher, true);
  t->add_flag("--student-view", student_view,
              "ablation: train on the student observation instead (requires "
              "zero observation noise)");

  CLI::App* s =
      app.add_subcommand("train-student", "distill a teacher into a student");
  add_common(s, o_student, true);
  s->add_option("--teacher", teacher_ckpt, "teacher checkpoint")->required();
  s->add_option("--ablate", ablate, "no-estimation | mlp")
      ->check(CLI::IsMember({"no-estimation", "mlp"}));

  CLI::App* e = app.add_subcommand("eval", "success rates by door type");
  add_common(e, o_eval, true);
  e->add_option("--ckpt", eval_ckpt, "policy checkpoint")->required();
  e->add_option("--protocol", protocol, "grid | repeatability");

  CLI::App* w =
      app.add_subcommand("sweep", "success rates across hinge resistances");
  add_common(w, o_sweep, true);
  w->add_option("--ckpt", sweep_ckpt, "policy checkpoint")->required();
  w->add_option("--resistances", sweep_levels, "comma-separated N m levels")
      ->delimiter(',');

  CLI::App* h = app.add_subcommand("export-hidden",
                                   "recurrent state traces + 2D projection");
  add_common(h, o_hidden, true);
  h->add_option("--ckpt", hidden_ckpt, "student checkpoint")->required();
  h->add_option("--episodes", hidden_episodes, "episodes to export");

  CLI::App* p = app.add_subcommand("export-type-probs",
                                   "door type beliefs and actions over time");
  add_common(p, o_probs, true);
  p->add_option("--ckpt", probs_ckpt, "student checkpoint")->required();
  p->add_option("--episodes", probs_episodes, "episodes to export");

  CLI::App* r = app.add_subcommand(
      "replay", "drive one env with a recorded action file");
  add_common(r, o_replay, true);
  r->add_option("--actions", actions_path,
                "CSV of actions, one step per row")
      ->required();

  CLI::App* pc = app.add_subcommand(
      "print-config", "dump the merged config (all defaults visible)");
  add_common(pc, o_print, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (t->parsed()) return cmd_train_teacher(o_teacher, student_view);
    if (s->parsed()) return cmd_train_student(o_student, teacher_ckpt, ablate);
    if (e->parsed()) return cmd_eval(o_eval, eval_ckpt, protocol);
    if (w->parsed()) return cmd_sweep(o_sweep, sweep_ckpt, sweep_levels);
    if (h->parsed())
      return cmd_export_hidden(o_hidden, hidden_ckpt, hidden_episodes);
    if (p->parsed())
      return cmd_export_type_probs(o_probs, probs_ckpt, probs_episodes);
    if (r->parsed()) return cmd_replay(o_replay, actions_path);
    if (pc->parsed()) return cmd_print_config(o_print);
  } catch (const ConfigError& ex) {
    std::fprintf(stderr, "%s\n", ex.what());
    return 2;
  } catch (const CheckpointError& ex) {
    std::fprintf(stderr, "%s\n", ex.what());
    return 3;
  } catch (const NanAbortError& ex) {
    std::fprintf(stderr, "%s\n", ex.what());
    return 4;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}
