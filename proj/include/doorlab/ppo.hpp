#pragma once

// Clipped-surrogate policy optimization over the vectorized environment:
// diagonal Gaussian policy, generalized advantage estimation with bootstrap
// values at time limits, fixed epoch/minibatch schedule with keyed shuffles.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <memory>
#include <stdexcept>
#include <vector>

#include "doorlab/env.hpp"
#include "doorlab/nn.hpp"

namespace doorlab::ppo {

using Eigen::MatrixXf;
using Eigen::VectorXf;

inline constexpr double kHalfLog2Pi = 0.9189385332046727;  // 0.5*ln(2*pi)
inline constexpr std::uint64_t kActionSalt = 0x616374;   // action noise
inline constexpr std::uint64_t kShuffleSalt = 0x736866;  // minibatch shuffle

// log N(a; mean, diag exp(log_std)^2) summed over action dims, per column
inline VectorXf gaussian_log_prob(const MatrixXf& a, const MatrixXf& mean,
                                  const VectorXf& log_std) {
  Eigen::ArrayXf inv_std = (-log_std.array()).exp();
  Eigen::ArrayXXf z = (a - mean).array().colwise() * inv_std;
  VectorXf lp = (-0.5f * z.square()).colwise().sum().transpose().matrix();
  float base = -log_std.sum() -
               static_cast<float>(a.rows()) * static_cast<float>(kHalfLog2Pi);
  return (lp.array() + base).matrix();
}

// entropy of the diagonal Gaussian; state independent
inline double gaussian_entropy(const VectorXf& log_std) {
  return static_cast<double>(log_std.sum()) +
         log_std.size() * (0.5 + kHalfLog2Pi);
}

inline MatrixXf gaussian_sample(const MatrixXf& mean, const VectorXf& log_std,
                                RngStream& rng) {
  MatrixXf a(mean.rows(), mean.cols());
  for (int c = 0; c < mean.cols(); ++c)
    for (int r = 0; r < mean.rows(); ++r)
      a(r, c) = mean(r, c) +
                std::exp(log_std(r)) * static_cast<float>(rng.normal());
  return a;
}

// advantages via exponentially weighted temporal differences; dones cut the
// recursion and substitute terminal_values for the next value (0 when the
// episode truly ended, the critic's bootstrap when only the clock ran out)
inline void gae(const MatrixXf& rewards, const MatrixXf& values,
                const MatrixXf& dones, const MatrixXf& terminal_values,
                const VectorXf& bootstrap, double gamma, double lam,
                MatrixXf& advantages, MatrixXf& returns) {
  const int T = static_cast<int>(rewards.rows());
  const int N = static_cast<int>(rewards.cols());
  advantages.resize(T, N);
  returns.resize(T, N);
  for (int n = 0; n < N; ++n) {
    double carry = 0.0;
    for (int t = T - 1; t >= 0; --t) {
      bool done = dones(t, n) != 0.0f;
      double next_v = done ? terminal_values(t, n)
                           : (t == T - 1 ? bootstrap(n) : values(t + 1, n));
      double delta = rewards(t, n) + gamma * next_v - values(t, n);
      carry = delta + gamma * lam * (done ? 0.0 : carry);
      advantages(t, n) = static_cast<float>(carry);
      returns(t, n) = static_cast<float>(carry + values(t, n));
    }
  }
}

inline std::vector<int> keyed_permutation(int n, std::uint64_t seed,
                                          std::uint64_t iter,
                                          std::uint64_t epoch) {
  RngStream rng = RngStream::keyed(seed, iter, epoch, kShuffleSalt);
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(idx[static_cast<std::size_t>(i)],
              idx[static_cast<std::size_t>(rng.uniform_int(i + 1))]);
  return idx;
}

struct PpoConfig {
  double gamma = 0.99;
  double lam = 0.95;
  double clip = 0.2;
  int epochs = 5;
  int minibatches = 4;
  double lr = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.005;
  double grad_clip = 1.0;
  int rollout_len = 50;
  std::uint64_t seed = 0;
};

struct Rollout {
  int T = 0, N = 0;
  std::vector<MatrixXf> obs;      // T entries, obs_dim x N, pre-normalized
  std::vector<MatrixXf> actions;  // T entries, act_dim x N
  MatrixXf logp;                  // everything below is T x N
  MatrixXf rewards;
  MatrixXf values;
  MatrixXf dones;
  MatrixXf terminal_values;
  VectorXf bootstrap;  // critic value after the last step, per env
  MatrixXf advantages;
  MatrixXf returns;
};

struct UpdateStats {
  double policy_loss = 0;
  double value_loss = 0;
  double entropy = 0;
  double approx_kl = 0;
  double clip_frac = 0;
  double grad_norm = 0;
  // mean |ratio-1| over the first minibatch before any step; a fresh rollout
  // from the unchanged policy must give ~0
  double first_ratio_dev = 0;
};

struct IterStats {
  long iter = 0;
  long env_steps = 0;  // cumulative
  double mean_step_reward = 0;
  int episodes = 0;  // ended during this iteration
  double mean_episode_return = 0;
  double opened_rate = 0;  // over a trailing window of finished episodes
  double passed_rate = 0;
  long nan_aborts = 0;  // cumulative
  UpdateStats update;
};

// Trains an actor-critic on either the privileged observation (46) or the
// proprioceptive view (19, requires a noise-free environment).
class PpoTrainer {
 public:
  PpoTrainer(VecEnv& venv, bool privileged, const PpoConfig& cfg,
             std::uint64_t net_seed)
      : env_(venv),
        privileged_(privileged),
        cfg_(cfg),
        obs_dim_(privileged ? kTeacherObsDim : kStudentObsDim),
        norm_(privileged ? kTeacherObsDim : kStudentObsDim) {
    if (!privileged_) {
      const auto& n = venv.config().noise;
      if (n.position != 0 || n.angle != 0 || n.velocity != 0 || n.extero != 0)
        throw std::invalid_argument(
            "proprioceptive-only training expects a noise-free environment");
    }
    RngStream rng = RngStream::keyed(net_seed);
    net_ = std::make_unique<nn::ActorCritic<float>>(obs_dim_, kActionDim,
                                                    rng);
    adam_.lr = cfg_.lr;
    ep_return_ = Eigen::VectorXd::Zero(env_.num_envs());
  }

  nn::ActorCritic<float>& net() { return *net_; }
  const nn::ActorCritic<float>& net() const { return *net_; }
  nn::RunningNorm& obs_norm() { return norm_; }
  long iter() const { return iter_; }
  long env_steps() const { return env_steps_; }
  long nan_aborts() const { return nan_aborts_; }

  MatrixXf raw_obs() const {
    return privileged_ ? env_.teacher_obs_batch() : env_.student_obs_batch();
  }

  Rollout collect() {
    const int T = cfg_.rollout_len;
    const int N = env_.num_envs();
    Rollout ro;
    ro.T = T;
    ro.N = N;
    ro.obs.resize(static_cast<std::size_t>(T));
    ro.actions.resize(static_cast<std::size_t>(T));
    ro.logp.resize(T, N);
    ro.rewards.resize(T, N);
    ro.values.resize(T, N);
    ro.dones.setZero(T, N);
    ro.terminal_values.setZero(T, N);

    RngStream act_rng =
        RngStream::keyed(cfg_.seed, static_cast<std::uint64_t>(iter_), 0,
                         kActionSalt);
    MatrixXf raw_batch(obs_dim_, T * N);

    for (int t = 0; t < T; ++t) {
      MatrixXf raw = raw_obs();
      raw_batch.middleCols(t * N, N) = raw;
      MatrixXf obs = norm_.normalize(raw);
      MatrixXf mean = net_->actor_mean(obs);
      VectorXf log_std = net_->log_std_vec();
      MatrixXf act = gaussian_sample(mean, log_std, act_rng);

      ro.obs[static_cast<std::size_t>(t)] = obs;
      ro.actions[static_cast<std::size_t>(t)] = act;
      ro.logp.row(t) = gaussian_log_prob(act, mean, log_std).transpose();
      ro.values.row(t) = net_->value(obs).transpose();

      StepOut out = env_.step(act);
      ro.rewards.row(t) = out.reward.transpose();
      for (int n = 0; n < N; ++n) {
        const StepInfo& info = out.info[static_cast<std::size_t>(n)];
        reward_sum_ += out.reward(n);
        ep_return_(n) += out.reward(n);
        if (out.done[static_cast<std::size_t>(n)]) {
          ro.dones(t, n) = 1.0f;
          if (info.terminal_obs.size() > 0)
            ro.terminal_values(t, n) = terminal_value(info.terminal_obs);
          // a numerics abort ends the episode with nothing left to bootstrap
          if (info.nan_abort) nan_aborts_ += 1;
          finished_returns_.push_back(ep_return_(n));
          ep_return_(n) = 0;
          outcome_window_.push_back(
              {info.opened_enough, info.passed_through});
          if (outcome_window_.size() > kOutcomeWindow)
            outcome_window_.pop_front();
          episodes_this_iter_ += 1;
        }
      }
    }
    ro.bootstrap = net_->value(norm_.normalize(raw_obs()));
    norm_.update(raw_batch);
    env_steps_ += static_cast<long>(T) * N;
    return ro;
  }

  UpdateStats update(Rollout& ro) {
    gae(ro.rewards, ro.values, ro.dones, ro.terminal_values, ro.bootstrap,
        cfg_.gamma, cfg_.lam, ro.advantages, ro.returns);
    float amean = ro.advantages.mean();
    float astd = std::sqrt(
        (ro.advantages.array() - amean).square().mean());
    ro.advantages = ((ro.advantages.array() - amean) / (astd + 1e-8f)).matrix();

    const int T = ro.T, N = ro.N;
    const int total = T * N;
    const int mb = total / cfg_.minibatches;
    const int act_dim = kActionDim;
    UpdateStats stats;
    long batches = 0;
    bool first = true;

    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      std::vector<int> perm = keyed_permutation(
          total, cfg_.seed, static_cast<std::uint64_t>(iter_),
          static_cast<std::uint64_t>(epoch));
      for (int b = 0; b < cfg_.minibatches; ++b) {
        MatrixXf obs(obs_dim_, mb), act(act_dim, mb);
        VectorXf lp_old(mb), adv(mb), ret(mb);
        for (int k = 0; k < mb; ++k) {
          int f = perm[static_cast<std::size_t>(b * mb + k)];
          int t = f / N, n = f % N;
          obs.col(k) = ro.obs[static_cast<std::size_t>(t)].col(n);
          act.col(k) = ro.actions[static_cast<std::size_t>(t)].col(n);
          lp_old(k) = ro.logp(t, n);
          adv(k) = ro.advantages(t, n);
          ret(k) = ro.returns(t, n);
        }

        typename nn::ActorCritic<float>::Cache cache;
        MatrixXf mean = net_->actor_mean(obs, &cache);
        VectorXf v = net_->value(obs, &cache);
        VectorXf log_std = net_->log_std_vec();
        Eigen::ArrayXf inv_std = (-log_std.array()).exp();

        Eigen::ArrayXXf z = (act - mean).array().colwise() * inv_std;
        VectorXf lp_new = gaussian_log_prob(act, mean, log_std);
        Eigen::ArrayXf ratio = (lp_new - lp_old).array().exp();
        Eigen::ArrayXf unclipped = ratio * adv.array();
        Eigen::ArrayXf clipped =
            ratio.min(1.0f + static_cast<float>(cfg_.clip))
                .max(1.0f - static_cast<float>(cfg_.clip)) *
            adv.array();
        Eigen::ArrayXf surrogate = unclipped.min(clipped);
        if (first) {
          stats.first_ratio_dev = (ratio - 1.0f).abs().mean();
          first = false;
        }

        double policy_loss = -static_cast<double>(surrogate.mean());
        double value_loss = (v - ret).array().square().mean();
        double entropy = gaussian_entropy(log_std);

        // d(total)/d(logp) per sample: active only where the unclipped
        // branch attains the min
        Eigen::ArrayXf active =
            (unclipped <= clipped).cast<float>() * ratio * adv.array();
        Eigen::ArrayXf dlp = -active / static_cast<float>(mb);

        MatrixXf dmean =
            ((z.colwise() * inv_std).rowwise() * dlp.transpose()).matrix();
        VectorXf dlog_std =
            ((z.square() - 1.0f).rowwise() * dlp.transpose())
                .rowwise()
                .sum()
                .matrix();
        dlog_std.array() -= static_cast<float>(cfg_.entropy_coef);
        VectorXf dv = (v - ret) *
                      static_cast<float>(2.0 * cfg_.value_coef / mb);

        net_->store.zero_grad();
        net_->backward_actor(cache, dmean, dlog_std);
        net_->backward_critic(cache, dv);
        double gnorm = nn::global_grad_norm(net_->store);
        nn::clip_global_grad_norm(net_->store,
                                  static_cast<float>(cfg_.grad_clip));
        adam_.step(net_->store);

        stats.policy_loss += policy_loss;
        stats.value_loss += value_loss;
        stats.entropy += entropy;
        stats.approx_kl += static_cast<double>((lp_old - lp_new).mean());
        stats.clip_frac +=
            static_cast<double>(((ratio - 1.0f).abs() >
                                 static_cast<float>(cfg_.clip))
                                    .cast<float>()
                                    .mean());
        stats.grad_norm += gnorm;
        batches += 1;
      }
    }
    stats.policy_loss /= batches;
    stats.value_loss /= batches;
    stats.entropy /= batches;
    stats.approx_kl /= batches;
    stats.clip_frac /= batches;
    stats.grad_norm /= batches;
    return stats;
  }

  IterStats train_iteration() {
    reward_sum_ = 0;
    episodes_this_iter_ = 0;
    finished_returns_.clear();
    if (ep_return_.size() != env_.num_envs())
      ep_return_ = Eigen::VectorXd::Zero(env_.num_envs());

    Rollout ro = collect();
    IterStats st;
    st.update = update(ro);
    st.iter = iter_;
    st.env_steps = env_steps_;
    st.mean_step_reward = reward_sum_ / (static_cast<double>(ro.T) * ro.N);
    st.episodes = episodes_this_iter_;
    if (!finished_returns_.empty()) {
      double s = 0;
      for (double r : finished_returns_) s += r;
      st.mean_episode_return = s / static_cast<double>(finished_returns_.size());
    }
    st.opened_rate = opened_rate();
    st.passed_rate = passed_rate();
    st.nan_aborts = nan_aborts_;
    iter_ += 1;
    return st;
  }

  double opened_rate() const {
    return window_rate([](const Outcome& o) { return o.opened; });
  }
  double passed_rate() const {
    return window_rate([](const Outcome& o) { return o.passed; });
  }

 private:
  float terminal_value(const Eigen::VectorXf& teacher_obs) {
    Eigen::MatrixXf raw(obs_dim_, 1);
    if (privileged_) {
      raw.col(0) = teacher_obs;
    } else {
      const auto& map = student_index_map();
      for (int k = 0; k < kStudentObsDim; ++k)
        raw(k, 0) = teacher_obs(map[static_cast<std::size_t>(k)]);
    }
    return net_->value(norm_.normalize(raw))(0);
  }

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
  bool privileged_;
  PpoConfig cfg_;
  int obs_dim_;
  nn::RunningNorm norm_;
  std::unique_ptr<nn::ActorCritic<float>> net_;
  nn::Adam<float> adam_;
  long iter_ = 0;
  long env_steps_ = 0;
  long nan_aborts_ = 0;
  double reward_sum_ = 0;
  int episodes_this_iter_ = 0;
  Eigen::VectorXd ep_return_ = Eigen::VectorXd::Zero(0);
  std::vector<double> finished_returns_;
  std::deque<Outcome> outcome_window_;
};

}  // namespace doorlab::ppo
