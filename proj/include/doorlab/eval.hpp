#pragma once

// Evaluation protocols: success grids by door type, hinge-resistance sweep,
// door-type probability traces, hidden-state export with a first-look PCA,
// and fixed-door repeatability runs. Everything is deterministic given the
// seed; rates carry Wilson 95% confidence intervals.

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "doorlab/distill.hpp"
#include "doorlab/env.hpp"
#include "doorlab/nn.hpp"

namespace doorlab::eval {

using Eigen::MatrixXf;
using Eigen::VectorXf;

struct RateCI {
  int hits = 0;
  int trials = 0;
  double rate = 0;
  double lo = 0;
  double hi = 0;
};

inline RateCI wilson(int hits, int trials, double z = 1.96) {
  if (hits < 0 || trials < 0 || hits > trials)
    throw std::invalid_argument("wilson: bad counts");
  RateCI out;
  out.hits = hits;
  out.trials = trials;
  if (trials == 0) {
    out.lo = 0;
    out.hi = 1;
    return out;
  }
  double n = trials;
  double p = static_cast<double>(hits) / n;
  double z2 = z * z;
  double denom = 1.0 + z2 / n;
  double center = (p + z2 / (2 * n)) / denom;
  double half = (z / denom) * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
  out.rate = p;
  // center -+ half hits 0 and 1 exactly at the boundary counts; snap there
  // instead of leaving rounding dust
  out.lo = hits == 0 ? 0.0 : std::max(0.0, center - half);
  out.hi = hits == trials ? 1.0 : std::min(1.0, center + half);
  return out;
}

// ---------------------------------------------------------------------------
// policies

// actor-critic mean action on either observation view
class TeacherPolicy {
 public:
  TeacherPolicy(const nn::ActorCritic<float>& net, nn::RunningNorm norm,
                bool privileged)
      : net_(net), norm_(std::move(norm)), privileged_(privileged) {
    int want = privileged ? kTeacherObsDim : kStudentObsDim;
    if (net.obs_dim != want || norm_.dim() != want)
      throw std::invalid_argument("policy/observation dimension mismatch");
  }
  void reset(int) {}
  void on_episode_end(int) {}
  MatrixXf act(const VecEnv& env) {
    MatrixXf raw =
        privileged_ ? env.teacher_obs_batch() : env.student_obs_batch();
    return net_.actor_mean(norm_.normalize(raw));
  }

 private:
  const nn::ActorCritic<float>& net_;
  nn::RunningNorm norm_;
  bool privileged_;
};

// recurrent student; keeps per-env hidden state and exposes the belief heads
class StudentPolicy {
 public:
  StudentPolicy(const nn::StudentNet<float>& net, nn::RunningNorm norm)
      : net_(net), norm_(std::move(norm)) {
    if (net.obs_dim != kStudentObsDim || norm_.dim() != kStudentObsDim)
      throw std::invalid_argument("student observation dimension mismatch");
  }
  void reset(int n) {
    hidden_ = net_.initial_hidden(n);
    pre_hidden_ = hidden_;
  }
  void on_episode_end(int i) { hidden_.col(i).setZero(); }
  MatrixXf act(const VecEnv& env) {
    MatrixXf obs = norm_.normalize(env.student_obs_batch());
    MatrixXf h_next;
    pre_hidden_ = hidden_;
    net_.forward(obs, hidden_, last_action_, est_, h_next);
    hidden_ = h_next;
    return last_action_;
  }
  // state fed into the last act(); zeros at each episode's first step
  const MatrixXf& pre_step_hidden() const { return pre_hidden_; }
  const MatrixXf& estimation() const { return est_; }
  const MatrixXf& last_action() const { return last_action_; }
  std::array<double, kDoorTypes> type_probs(int env_idx) const {
    nn::VecX<float> logits =
        est_.col(env_idx).segment(distill::kEstDim, kDoorTypes);
    nn::VecX<float> p = distill::softmax<float>(logits);
    std::array<double, kDoorTypes> out{};
    for (int k = 0; k < kDoorTypes; ++k) out[static_cast<std::size_t>(k)] = p(k);
    return out;
  }

 private:
  const nn::StudentNet<float>& net_;
  nn::RunningNorm norm_;
  MatrixXf hidden_;
  MatrixXf pre_hidden_;
  MatrixXf est_;
  MatrixXf last_action_;
};

// seeded Gaussian actions; the sanity floor for every protocol
class RandomPolicy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : seed_(seed) { reset(0); }
  void reset(int) { rng_ = RngStream::keyed(seed_, 0, 0, 0x65765261); }
  void on_episode_end(int) {}
  MatrixXf act(const VecEnv& env) {
    MatrixXf a(kActionDim, env.num_envs());
    for (int c = 0; c < a.cols(); ++c)
      for (int r = 0; r < a.rows(); ++r)
        a(r, c) = static_cast<float>(rng_.normal());
    return a;
  }

 private:
  std::uint64_t seed_;
  RngStream rng_;
};

// ---------------------------------------------------------------------------
// rollout engine

struct EpisodeOutcome {
  int env_index = 0;
  int door_type = 0;
  bool opened = false;
  bool passed = false;
  bool aborted = false;
};

// steps the policy for exactly episodes_per_env horizons, collecting every
// episode that ends inside the window; numerics aborts count as failures
template <typename Policy, typename Hook>
std::vector<EpisodeOutcome> run_episodes(VecEnv& env, Policy& pol,
                                         int episodes_per_env,
                                         Hook&& per_step) {
  const int N = env.num_envs();
  pol.reset(N);
  std::vector<EpisodeOutcome> outcomes;
  const long total_steps =
      static_cast<long>(episodes_per_env) * env.config().episode_len;
  for (long t = 0; t < total_steps; ++t) {
    MatrixXf a = pol.act(env);
    StepOut out = env.step(a);
    for (int n = 0; n < N; ++n) {
      if (!out.done[static_cast<std::size_t>(n)]) continue;
      const StepInfo& info = out.info[static_cast<std::size_t>(n)];
      EpisodeOutcome o;
      o.env_index = n;
      o.door_type = info.door_type;
      o.opened = info.opened_enough;
      o.passed = info.passed_through;
      o.aborted = info.nan_abort;
      outcomes.push_back(o);
      pol.on_episode_end(n);
    }
    per_step(static_cast<int>(t), out, pol);
  }
  return outcomes;
}

template <typename Policy>
std::vector<EpisodeOutcome> run_episodes(VecEnv& env, Policy& pol,
                                         int episodes_per_env) {
  return run_episodes(env, pol, episodes_per_env,
                      [](int, const StepOut&, Policy&) {});
}

// ---------------------------------------------------------------------------
// success grid

struct GridRow {
  int door_type = 0;
  RateCI opened;
  RateCI passed;
};

inline std::vector<GridRow> tabulate_by_type(
    const std::vector<EpisodeOutcome>& outcomes) {
  std::array<int, kDoorTypes> n{}, op{}, pa{};
  for (const auto& o : outcomes) {
    n[static_cast<std::size_t>(o.door_type)] += 1;
    op[static_cast<std::size_t>(o.door_type)] += o.opened ? 1 : 0;
    pa[static_cast<std::size_t>(o.door_type)] += o.passed ? 1 : 0;
  }
  std::vector<GridRow> rows;
  for (int k = 0; k < kDoorTypes; ++k) {
    GridRow r;
    r.door_type = k;
    r.opened = wilson(op[static_cast<std::size_t>(k)],
                      n[static_cast<std::size_t>(k)]);
    r.passed = wilson(pa[static_cast<std::size_t>(k)],
                      n[static_cast<std::size_t>(k)]);
    rows.push_back(r);
  }
  return rows;
}

template <typename Policy>
std::vector<GridRow> evaluate_grid(const EnvConfig& cfg, Policy& pol,
                                   int episodes_per_env) {
  VecEnv env(cfg);
  return tabulate_by_type(run_episodes(env, pol, episodes_per_env));
}

// ---------------------------------------------------------------------------
// hinge-resistance sweep

struct SweepRow {
  double resistance = 0;
  RateCI opened;
  RateCI passed;
};

inline EnvConfig pinned_resistance_config(EnvConfig cfg, double resistance) {
  cfg.randomization.pin("tau_hinge", resistance);
  cfg.randomization.pin("tau_hinge_zero_prob", 0.0);
  return cfg;
}

template <typename Policy>
std::vector<SweepRow> resistance_sweep(const EnvConfig& base, Policy& pol,
                                       const std::vector<double>& levels,
                                       int episodes_per_env) {
  std::vector<SweepRow> rows;
  for (double level : levels) {
    if (level < 0) throw std::invalid_argument("sweep: negative resistance");
    EnvConfig cfg = pinned_resistance_config(base, level);
    VecEnv env(cfg);
    auto outcomes = run_episodes(env, pol, episodes_per_env);
    int op = 0, pa = 0;
    for (const auto& o : outcomes) {
      op += o.opened ? 1 : 0;
      pa += o.passed ? 1 : 0;
    }
    SweepRow r;
    r.resistance = level;
    r.opened = wilson(op, static_cast<int>(outcomes.size()));
    r.passed = wilson(pa, static_cast<int>(outcomes.size()));
    rows.push_back(r);
  }
  return rows;
}

// non-increasing pass rate across levels: any increase must fit inside one
// confidence-interval width (the wider of the two adjacent intervals)
inline bool sweep_monotone_within_ci(const std::vector<SweepRow>& rows) {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    double w_prev = rows[i - 1].passed.hi - rows[i - 1].passed.lo;
    double w_cur = rows[i].passed.hi - rows[i].passed.lo;
    double slack = std::max(w_prev, w_cur);
    if (rows[i].passed.rate > rows[i - 1].passed.rate + slack) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// door-type probability traces

struct TypeProbRow {
  int episode = 0;
  int t = 0;
  int true_type = 0;
  std::array<double, kDoorTypes> p{};
  VectorXf action;
};

inline double type_entropy(const std::array<double, kDoorTypes>& p) {
  double h = 0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

inline std::vector<TypeProbRow> export_type_probs(const EnvConfig& base,
                                                  StudentPolicy& pol,
                                                  int episodes) {
  EnvConfig cfg = base;
  cfg.n_envs = 1;
  VecEnv env(cfg);
  std::vector<TypeProbRow> rows;
  int episode = 0;
  int t_in_ep = 0;
  auto hook = [&](int, const StepOut& out, StudentPolicy& p) {
    TypeProbRow r;
    r.episode = episode;
    r.t = t_in_ep;
    // at a done step state(0) already belongs to the next episode, the
    // step info does not
    r.true_type = out.info[0].door_type;
    r.p = p.type_probs(0);
    r.action = p.last_action().col(0);
    rows.push_back(r);
    t_in_ep += 1;
    if (out.done[0]) {
      episode += 1;
      t_in_ep = 0;
    }
  };
  run_episodes(env, pol, episodes, hook);
  return rows;
}

// ---------------------------------------------------------------------------
// hidden-state export and first-look projection

struct HiddenRow {
  int episode = 0;
  int t = 0;
  int door_type = 0;
  VectorXf hidden;  // state fed into the step; zeros at t = 0
};

inline std::vector<HiddenRow> export_hidden_states(const EnvConfig& base,
                                                   StudentPolicy& pol,
                                                   int episodes) {
  EnvConfig cfg = base;
  cfg.n_envs = 1;
  VecEnv env(cfg);
  std::vector<HiddenRow> rows;
  int episode = 0;
  int t_in_ep = 0;
  auto hook = [&](int, const StepOut& out, StudentPolicy& p) {
    HiddenRow r;
    r.episode = episode;
    r.t = t_in_ep;
    r.door_type = out.info[0].door_type;
    r.hidden = p.pre_step_hidden().col(0);
    rows.push_back(r);
    t_in_ep += 1;
    if (out.done[0]) {
      episode += 1;
      t_in_ep = 0;
    }
  };
  run_episodes(env, pol, episodes, hook);
  return rows;
}

struct Pca2 {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;  // 2 x D, rows are principal directions
  Eigen::Vector2d project(const Eigen::VectorXd& x) const {
    return components * (x - mean);
  }
};

// columns of X are samples
inline Pca2 fit_pca2(const Eigen::MatrixXd& X) {
  if (X.cols() < 2) throw std::invalid_argument("pca: need >= 2 samples");
  Pca2 out;
  out.mean = X.rowwise().mean();
  Eigen::MatrixXd C = X.colwise() - out.mean;
  Eigen::MatrixXd cov = (C * C.transpose()) / static_cast<double>(X.cols());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  // eigenvalues ascend; take the last two
  long d = cov.rows();
  out.components.resize(2, d);
  out.components.row(0) = es.eigenvectors().col(d - 1).transpose();
  out.components.row(1) = es.eigenvectors().col(d - 2).transpose();
  return out;
}

// Fisher discriminant on 2D points with a midpoint threshold; the
// "linearly separable in the projection" check reduced to one number
inline double lda_accuracy(const Eigen::Matrix2Xd& pts,
                           const std::vector<int>& labels) {
  if (pts.cols() != static_cast<long>(labels.size()) || pts.cols() < 2)
    throw std::invalid_argument("lda: bad inputs");
  Eigen::Vector2d m0 = Eigen::Vector2d::Zero(), m1 = Eigen::Vector2d::Zero();
  int n0 = 0, n1 = 0;
  for (long i = 0; i < pts.cols(); ++i) {
    if (labels[static_cast<std::size_t>(i)] == 0) {
      m0 += pts.col(i);
      n0 += 1;
    } else {
      m1 += pts.col(i);
      n1 += 1;
    }
  }
  if (n0 == 0 || n1 == 0) throw std::invalid_argument("lda: one class empty");
  m0 /= n0;
  m1 /= n1;
  Eigen::Matrix2d sw = Eigen::Matrix2d::Identity() * 1e-9;
  for (long i = 0; i < pts.cols(); ++i) {
    const Eigen::Vector2d& m =
        labels[static_cast<std::size_t>(i)] == 0 ? m0 : m1;
    Eigen::Vector2d d = pts.col(i) - m;
    sw += d * d.transpose();
  }
  Eigen::Vector2d w = sw.ldlt().solve(m1 - m0);
  double thresh = 0.5 * w.dot(m0 + m1);
  int correct = 0;
  for (long i = 0; i < pts.cols(); ++i) {
    int pred = w.dot(pts.col(i)) > thresh ? 1 : 0;
    correct += pred == labels[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(pts.cols());
}

// ---------------------------------------------------------------------------
// fixed-door repeatability

// the same physical door approached from the other side swaps both the
// opening direction and the apparent hinge side
inline int mirrored_door_type(int door_type) {
  if (door_type < 0 || door_type >= kDoorTypes)
    throw std::invalid_argument("bad door type");
  return kDoorTypes - 1 - door_type;
}

struct RepeatabilityResult {
  int door_type_a = 0;
  int door_type_b = 0;
  RateCI opened_a, passed_a;
  RateCI opened_b, passed_b;
};

// base config's randomization should pin the door's geometry and dynamics;
// this pins the type per side and runs n trials each
template <typename Policy>
RepeatabilityResult repeatability(const EnvConfig& base, Policy& pol,
                                  int door_type, int trials_per_side) {
  RepeatabilityResult res;
  res.door_type_a = door_type;
  res.door_type_b = mirrored_door_type(door_type);
  int side = 0;
  for (int type : {res.door_type_a, res.door_type_b}) {
    EnvConfig cfg = base;
    cfg.n_envs = 1;
    cfg.randomization.pin("door_type", type);
    VecEnv env(cfg);
    auto outcomes = run_episodes(env, pol, trials_per_side);
    int op = 0, pa = 0;
    for (const auto& o : outcomes) {
      op += o.opened ? 1 : 0;
      pa += o.passed ? 1 : 0;
    }
    RateCI opened = wilson(op, static_cast<int>(outcomes.size()));
    RateCI passed = wilson(pa, static_cast<int>(outcomes.size()));
    if (side == 0) {
      res.opened_a = opened;
      res.passed_a = passed;
    } else {
      res.opened_b = opened;
      res.passed_b = passed;
    }
    side += 1;
  }
  return res;
}

}  // namespace doorlab::eval
