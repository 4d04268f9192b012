#pragma once

// Teacher-to-student distillation: the student drives the environments with
// its own actions, the frozen teacher labels the same states from privileged
// observations, and truncated backprop through time fits the student's action
// head, privileged-estimation decoder, and door-type classifier.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <stdexcept>
#include <vector>

#include "doorlab/env.hpp"
#include "doorlab/nn.hpp"

namespace doorlab::distill {

using Eigen::MatrixXf;
using Eigen::VectorXf;

// teacher-observation rows holding the student's estimation targets: the
// exteroceptive block plus every privileged scalar, then the type one-hot
inline constexpr int kEstStart = 26;
inline constexpr int kEstDim = 15;
inline constexpr int kTypeStart = 41;

struct DistillConfig {
  double lr = 1e-3;
  double imitation_weight = 1.0;
  double estimation_weight = 0.5;
  double type_weight = 0.5;
  double smooth_l1_beta = 1.0;
  int window = 50;  // BPTT truncation, aligned with episode starts
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  bool no_estimation_loss = false;  // drops estimation + type terms
  bool mlp_student = false;         // feed-forward student ablation
};

inline double smooth_l1(double d, double beta = 1.0) {
  double a = std::abs(d);
  return a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
}

inline double smooth_l1_grad(double d, double beta = 1.0) {
  if (std::abs(d) < beta) return d / beta;
  return d > 0 ? 1.0 : -1.0;
}

template <typename T>
nn::VecX<T> softmax(const nn::VecX<T>& logits) {
  nn::VecX<T> p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

template <typename T>
struct WindowBatch {
  int W = 0, N = 0;
  std::vector<nn::MatX<T>> obs;           // normalized student obs per step
  std::vector<nn::MatX<T>> teacher_mean;  // action labels per step
  std::vector<nn::MatX<T>> est_target;    // normalized continuous targets
  std::vector<std::vector<int>> type_label;
  std::vector<std::vector<std::uint8_t>> done;  // episode ended after step t
  nn::MatX<T> h0;
};

struct WindowLosses {
  double imitation = 0;
  double estimation = 0;
  double type_ce = 0;
  double total = 0;
  double type_accuracy = 0;
};

// Replays the window (resetting hidden state after episode ends), computes
// the weighted losses, and accumulates parameter gradients. Pure function of
// (parameters, batch, config), which keeps it finite-difference checkable.
template <typename T>
WindowLosses window_backward(nn::StudentNet<T>& net,
                             const WindowBatch<T>& batch,
                             const DistillConfig& cfg,
                             nn::MatX<T>* h_final = nullptr) {
  const int W = batch.W, N = batch.N;
  const int act_dim = net.act_dim;
  const double inv_count = 1.0 / (static_cast<double>(W) * N);
  const double beta = cfg.smooth_l1_beta;
  const bool est_on = !cfg.no_estimation_loss;

  std::vector<typename nn::StudentNet<T>::StepCache> caches(
      static_cast<std::size_t>(W));
  std::vector<nn::MatX<T>> acts(static_cast<std::size_t>(W)),
      ests(static_cast<std::size_t>(W));
  nn::MatX<T> h = batch.h0;
  for (int t = 0; t < W; ++t) {
    nn::MatX<T> h_next;
    net.forward(batch.obs[static_cast<std::size_t>(t)], h,
                acts[static_cast<std::size_t>(t)],
                ests[static_cast<std::size_t>(t)], h_next,
                &caches[static_cast<std::size_t>(t)]);
    for (int n = 0; n < N; ++n)
      if (batch.done[static_cast<std::size_t>(t)][static_cast<std::size_t>(n)])
        h_next.col(n).setZero();
    h = h_next;
  }
  if (h_final) *h_final = h;

  WindowLosses out;
  std::vector<nn::MatX<T>> dacts(static_cast<std::size_t>(W)),
      dests(static_cast<std::size_t>(W));
  for (int t = 0; t < W; ++t) {
    const nn::MatX<T>& a = acts[static_cast<std::size_t>(t)];
    const nn::MatX<T>& e = ests[static_cast<std::size_t>(t)];
    const nn::MatX<T>& la = batch.teacher_mean[static_cast<std::size_t>(t)];
    nn::MatX<T>& da =
        dacts[static_cast<std::size_t>(t)] = nn::MatX<T>::Zero(a.rows(), N);
    nn::MatX<T>& de =
        dests[static_cast<std::size_t>(t)] = nn::MatX<T>::Zero(e.rows(), N);

    for (int n = 0; n < N; ++n) {
      for (int d = 0; d < act_dim; ++d) {
        double diff = static_cast<double>(a(d, n)) - la(d, n);
        out.imitation += smooth_l1(diff, beta) * inv_count;
        da(d, n) = static_cast<T>(cfg.imitation_weight *
                                  smooth_l1_grad(diff, beta) * inv_count);
      }
      if (!est_on) continue;
      const nn::MatX<T>& te = batch.est_target[static_cast<std::size_t>(t)];
      for (int d = 0; d < kEstDim; ++d) {
        double diff = static_cast<double>(e(d, n)) - te(d, n);
        out.estimation += smooth_l1(diff, beta) * inv_count;
        de(d, n) = static_cast<T>(cfg.estimation_weight *
                                  smooth_l1_grad(diff, beta) * inv_count);
      }
      int label =
          batch.type_label[static_cast<std::size_t>(t)][static_cast<std::size_t>(n)];
      nn::VecX<T> logits = e.col(n).segment(kEstDim, kDoorTypes);
      nn::VecX<T> p = softmax<T>(logits);
      out.type_ce += -std::log(std::max(static_cast<double>(p(label)), 1e-12)) *
                     inv_count;
      int argmax = 0;
      p.maxCoeff(&argmax);
      out.type_accuracy += (argmax == label) ? inv_count : 0.0;
      for (int k = 0; k < kDoorTypes; ++k)
        de(kEstDim + k, n) = static_cast<T>(
            cfg.type_weight *
            (static_cast<double>(p(k)) - (k == label ? 1.0 : 0.0)) *
            inv_count);
    }
  }
  out.total = cfg.imitation_weight * out.imitation +
              cfg.estimation_weight * out.estimation +
              cfg.type_weight * out.type_ce;

  nn::MatX<T> dh = nn::MatX<T>::Zero(nn::kStudentHidden, N);
  for (int t = W - 1; t >= 0; --t) {
    // state was replaced by zeros after episode ends, so nothing flows back
    for (int n = 0; n < N; ++n)
      if (batch.done[static_cast<std::size_t>(t)][static_cast<std::size_t>(n)])
        dh.col(n).setZero();
    dh = net.backward(caches[static_cast<std::size_t>(t)],
                      dacts[static_cast<std::size_t>(t)],
                      dests[static_cast<std::size_t>(t)], dh);
  }
  return out;
}

struct WindowStats {
  long window = 0;
  long env_steps = 0;  // cumulative
  WindowLosses losses;
  double mean_step_reward = 0;
  int episodes = 0;
  double opened_rate = 0;  // trailing window of finished episodes
  double passed_rate = 0;
  double grad_norm = 0;
};

// Runs student-driven rollouts against the environment, labeling each visited
// state with the frozen teacher's mean action.
class DistillTrainer {
 public:
  DistillTrainer(VecEnv& venv, const nn::ActorCritic<float>& teacher,
                 const nn::RunningNorm& teacher_norm, const DistillConfig& cfg,
                 std::uint64_t net_seed)
      : env_(venv),
        teacher_(teacher),
        teacher_norm_(teacher_norm),
        cfg_(cfg),
        teacher_hash_(nn::param_hash(teacher.store)) {
    if (teacher.obs_dim != kTeacherObsDim)
      throw std::invalid_argument("distillation expects a privileged teacher");
    if (teacher_norm.dim() != kTeacherObsDim)
      throw std::invalid_argument("teacher normalizer dimension mismatch");
    const auto& map = student_index_map();
    student_norm_ = teacher_norm.slice(map.data(), kStudentObsDim);
    std::array<int, kEstDim> est_idx{};
    for (int i = 0; i < kEstDim; ++i) est_idx[static_cast<std::size_t>(i)] = kEstStart + i;
    target_norm_ = teacher_norm.slice(est_idx.data(), kEstDim);

    RngStream rng = RngStream::keyed(net_seed);
    net_ = std::make_unique<nn::StudentNet<float>>(
        kStudentObsDim, kActionDim, !cfg.mlp_student, rng);
    adam_.lr = cfg_.lr;
    hidden_ = net_->initial_hidden(env_.num_envs());
  }

  nn::StudentNet<float>& student() { return *net_; }
  const nn::RunningNorm& student_norm() const { return student_norm_; }
  const nn::RunningNorm& target_norm() const { return target_norm_; }
  std::uint64_t teacher_hash() const { return teacher_hash_; }
  bool teacher_unchanged() const {
    return nn::param_hash(teacher_.store) == teacher_hash_;
  }
  long env_steps() const { return env_steps_; }

  WindowStats train_window() {
    const int W = cfg_.window;
    const int N = env_.num_envs();
    WindowBatch<float> batch;
    batch.W = W;
    batch.N = N;
    batch.h0 = hidden_;
    batch.obs.resize(static_cast<std::size_t>(W));
    batch.teacher_mean.resize(static_cast<std::size_t>(W));
    batch.est_target.resize(static_cast<std::size_t>(W));
    batch.type_label.assign(static_cast<std::size_t>(W),
                            std::vector<int>(static_cast<std::size_t>(N), 0));
    batch.done.assign(
        static_cast<std::size_t>(W),
        std::vector<std::uint8_t>(static_cast<std::size_t>(N), 0));

    WindowStats st;
    double reward_sum = 0;
    for (int t = 0; t < W; ++t) {
      MatrixXf teacher_raw = env_.teacher_obs_batch();
      MatrixXf teacher_obs = teacher_norm_.normalize(teacher_raw);
      batch.teacher_mean[static_cast<std::size_t>(t)] =
          teacher_.actor_mean(teacher_obs);
      batch.est_target[static_cast<std::size_t>(t)] = target_norm_.normalize(
          teacher_raw.middleRows(kEstStart, kEstDim));
      for (int n = 0; n < N; ++n) {
        int argmax = 0;
        teacher_raw.col(n).segment(kTypeStart, kDoorTypes).maxCoeff(&argmax);
        batch.type_label[static_cast<std::size_t>(t)][static_cast<std::size_t>(n)] =
            argmax;
      }

      MatrixXf obs = student_norm_.normalize(env_.student_obs_batch());
      batch.obs[static_cast<std::size_t>(t)] = obs;
      MatrixXf act, est, h_next;
      net_->forward(obs, hidden_, act, est, h_next);

      StepOut out = env_.step(act);
      reward_sum += out.reward.sum();
      for (int n = 0; n < N; ++n) {
        if (!out.done[static_cast<std::size_t>(n)]) continue;
        batch.done[static_cast<std::size_t>(t)][static_cast<std::size_t>(n)] = 1;
        h_next.col(n).setZero();
        const StepInfo& info = out.info[static_cast<std::size_t>(n)];
        outcome_window_.push_back({info.opened_enough, info.passed_through});
        if (outcome_window_.size() > kOutcomeWindow)
          outcome_window_.pop_front();
        st.episodes += 1;
      }
      hidden_ = h_next;
    }

    net_->store.zero_grad();
    st.losses = window_backward(*net_, batch, cfg_);
    st.grad_norm = nn::global_grad_norm(net_->store);
    nn::clip_global_grad_norm(net_->store, static_cast<float>(cfg_.grad_clip));
    adam_.step(net_->store);

    env_steps_ += static_cast<long>(W) * N;
    st.window = window_++;
    st.env_steps = env_steps_;
    st.mean_step_reward = reward_sum / (static_cast<double>(W) * N);
    st.opened_rate = opened_rate();
    st.passed_rate = passed_rate();
    return st;
  }

  double opened_rate() const {
    return window_rate([](const Outcome& o) { return o.opened; });
  }
  double passed_rate() const {
    return window_rate([](const Outcome& o) { return o.passed; });
  }

 private:
  template <class F>
  double window_rate(F pick) const {
    if (outcome_window_.empty()) return 0.0;
    double hits = 0;
    for (const auto& o : outcome_window_) hits += pick(o) ? 1.0 : 0.0;
    return hits / static_cast<double>(outcome_window_.size());
  }

  struct Outcome {
    bool opened = false;
    bool passed = false;
  };
  static constexpr std::size_t kOutcomeWindow = 512;

  VecEnv& env_;
  const nn::ActorCritic<float>& teacher_;
  nn::RunningNorm teacher_norm_;
  nn::RunningNorm student_norm_{1};
  nn::RunningNorm target_norm_{1};
  DistillConfig cfg_;
  std::uint64_t teacher_hash_;
  std::unique_ptr<nn::StudentNet<float>> net_;
  nn::Adam<float> adam_;
  MatrixXf hidden_;
  long window_ = 0;
  long env_steps_ = 0;
  std::deque<Outcome> outcome_window_;
};

}  // namespace doorlab::distill
