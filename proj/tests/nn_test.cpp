#include "doorlab/nn.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

using namespace doorlab;
using namespace doorlab::nn;

namespace {

// hand-rolled matmul so the layer math is checked against something dumber
template <typename T>
MatX<T> naive_linear(const MatX<T>& W, const VecX<T>& b, const MatX<T>& x) {
  MatX<T> y = MatX<T>::Zero(W.rows(), x.cols());
  for (int c = 0; c < x.cols(); ++c)
    for (int i = 0; i < W.rows(); ++i) {
      T acc = b(i);
      for (int k = 0; k < W.cols(); ++k) acc += W(i, k) * x(k, c);
      y(i, c) = acc;
    }
  return y;
}

MatX<double> random_mat(int r, int c, RngStream& rng, double scale = 1.0) {
  MatX<double> m(r, c);
  for (int i = 0; i < m.size(); ++i)
    m.data()[i] = rng.uniform(-scale, scale);
  return m;
}

// central finite differences over a deterministic subset of parameters;
// loss_fn(true) must also populate analytic gradients
template <typename F>
void expect_grads_match_fd(ParamStore<double>& store, F&& loss_fn,
                           double tol = 1e-4) {
  store.zero_grad();
  loss_fn(true);
  auto analytic = store.grad;

  const double eps = 1e-4;
  for (const auto& e : store.entries) {
    int n = e.rows * e.cols;
    int stride = std::max(1, n / 8);  // at most ~8 probes per tensor
    for (int k = 0; k < n; k += stride) {
      std::size_t i = static_cast<std::size_t>(e.offset + k);
      double saved = store.data[i];
      store.data[i] = saved + eps;
      double lp = loss_fn(false);
      store.data[i] = saved - eps;
      double lm = loss_fn(false);
      store.data[i] = saved;
      double fd = (lp - lm) / (2.0 * eps);
      double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-3});
      double rel = std::abs(fd - analytic[i]) / denom;
      ASSERT_LT(rel, tol) << e.name << "[" << k << "] analytic="
                          << analytic[i] << " fd=" << fd;
    }
  }
}

std::string temp_path(const char* stem) {
  return (std::filesystem::temp_directory_path() / stem).string();
}

}  // namespace

TEST(Linear, MatchesNaiveMatmul) {
  RngStream rng = RngStream::keyed(11);
  ParamStore<double> store;
  Linear<double> lin;
  lin.init(store, "lin", 5, 4, rng);
  MatX<double> x = random_mat(5, 7, rng);
  MatX<double> got = lin.forward(store, x);
  MatX<double> want =
      naive_linear<double>(store.mat(lin.w), store.mat(lin.b).col(0), x);
  EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Linear, ZeroWeightsGiveZeroOutputs) {
  RngStream rng = RngStream::keyed(12);
  ParamStore<double> store;
  Linear<double> lin;
  lin.init(store, "lin", 6, 3, rng);
  store.mat(lin.w).setZero();
  store.mat(lin.b).setZero();
  MatX<double> y = lin.forward(store, random_mat(6, 4, rng));
  EXPECT_EQ(y.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Mlp, IdentityLayerPassesThrough) {
  RngStream rng = RngStream::keyed(13);
  ParamStore<double> store;
  Mlp<double> mlp;
  mlp.init(store, "m", {3, 3}, false, rng);
  store.mat(mlp.layers[0].w).setIdentity();
  store.mat(mlp.layers[0].b).setZero();
  MatX<double> x = random_mat(3, 5, rng);
  EXPECT_LT((mlp.forward(store, x) - x).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Linear, QuadraticLossGradientClosedForm) {
  // y = w x + b, L = y^2: dL/dw = 2 w x^2 at b = 0, dL/db = 2 y
  RngStream rng = RngStream::keyed(14);
  ParamStore<double> store;
  Linear<double> lin;
  lin.init(store, "lin", 1, 1, rng);
  store.mat(lin.w)(0, 0) = 1.5;
  store.mat(lin.b)(0, 0) = 0.0;
  MatX<double> x(1, 1);
  x(0, 0) = 2.0;
  MatX<double> y = lin.forward(store, x);
  ASSERT_DOUBLE_EQ(y(0, 0), 3.0);
  store.zero_grad();
  MatX<double> dy = 2.0 * y;
  lin.backward(store, x, dy);
  EXPECT_DOUBLE_EQ(store.grad_mat(lin.w)(0, 0), 2.0 * 1.5 * 4.0);
  EXPECT_DOUBLE_EQ(store.grad_mat(lin.b)(0, 0), 6.0);
}

TEST(Gru, SingleUnitMatchesHandArithmetic) {
  ParamStore<double> store;
  GruCell<double> cell;
  RngStream rng = RngStream::keyed(15);
  cell.init(store, "g", 1, 1, rng);
  store.mat(cell.wz.w)(0, 0) = 0.5;
  store.mat(cell.wz.b)(0, 0) = 0.1;
  store.mat(cell.uz)(0, 0) = -0.3;
  store.mat(cell.wr.w)(0, 0) = 0.4;
  store.mat(cell.wr.b)(0, 0) = -0.2;
  store.mat(cell.ur)(0, 0) = 0.2;
  store.mat(cell.wn.w)(0, 0) = 0.7;
  store.mat(cell.wn.b)(0, 0) = 0.05;
  store.mat(cell.un)(0, 0) = -0.6;

  MatX<double> x(1, 1), h(1, 1);
  x(0, 0) = 0.3;
  h(0, 0) = 0.5;
  double z = 1.0 / (1.0 + std::exp(-(0.5 * 0.3 - 0.3 * 0.5 + 0.1)));
  double r = 1.0 / (1.0 + std::exp(-(0.4 * 0.3 + 0.2 * 0.5 - 0.2)));
  double n = std::tanh(0.7 * 0.3 + 0.05 + r * (-0.6 * 0.5));
  double want = (1.0 - z) * n + z * 0.5;

  MatX<double> got = cell.forward(store, x, h);
  EXPECT_NEAR(got(0, 0), want, 1e-14);
}

TEST(Gradcheck, ActorCriticAgainstFiniteDifferences) {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    RngStream rng = RngStream::keyed(seed);
    ActorCritic<double> net(7, 3, rng);
    // log_std starts at zero; move it so its gradient is informative
    net.store.mat(net.log_std).setConstant(0.3);

    MatX<double> x = random_mat(7, 4, rng);
    MatX<double> ta = random_mat(3, 4, rng);
    VecX<double> tv = random_mat(1, 4, rng).row(0).transpose();

    auto loss = [&](bool with_grad) {
      typename ActorCritic<double>::Cache cache;
      MatX<double> mean = net.actor_mean(x, with_grad ? &cache : nullptr);
      VecX<double> v = net.value(x, with_grad ? &cache : nullptr);
      VecX<double> ls = net.log_std_vec();
      double L = (mean - ta).squaredNorm() + (v - tv).squaredNorm() +
                 (ls.array() + 0.1).square().sum();
      if (with_grad) {
        net.backward_actor(cache, 2.0 * (mean - ta),
                           2.0 * (ls.array() + 0.1).matrix());
        net.backward_critic(cache, 2.0 * (v - tv));
      }
      return L;
    };
    expect_grads_match_fd(net.store, loss);
  }
}

TEST(Gradcheck, RecurrentStudentThroughTime) {
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    RngStream rng = RngStream::keyed(seed + 100);
    StudentNet<double> net(11, 4, true, rng);

    const int steps = 6, batch = 3;
    std::vector<MatX<double>> xs, tas, tes;
    for (int t = 0; t < steps; ++t) {
      xs.push_back(random_mat(11, batch, rng));
      tas.push_back(random_mat(4, batch, rng));
      tes.push_back(random_mat(kEstimationDim, batch, rng));
    }

    auto loss = [&](bool with_grad) {
      std::vector<typename StudentNet<double>::StepCache> caches(steps);
      std::vector<MatX<double>> acts(steps), ests(steps);
      MatX<double> h = net.initial_hidden(batch);
      double L = 0.0;
      for (int t = 0; t < steps; ++t) {
        MatX<double> hn;
        net.forward(xs[t], h, acts[t], ests[t], hn,
                    with_grad ? &caches[t] : nullptr);
        h = hn;
        L += (acts[t] - tas[t]).squaredNorm() +
             (ests[t] - tes[t]).squaredNorm();
      }
      if (with_grad) {
        MatX<double> dh = MatX<double>::Zero(kStudentHidden, batch);
        for (int t = steps - 1; t >= 0; --t)
          dh = net.backward(caches[t], 2.0 * (acts[t] - tas[t]),
                            2.0 * (ests[t] - tes[t]), dh);
      }
      return L;
    };
    expect_grads_match_fd(net.store, loss);
  }
}

TEST(Gradcheck, FeedForwardStudentAblation) {
  RngStream rng = RngStream::keyed(42);
  StudentNet<double> net(11, 4, false, rng);

  MatX<double> x = random_mat(11, 5, rng);
  MatX<double> ta = random_mat(4, 5, rng);
  MatX<double> te = random_mat(kEstimationDim, 5, rng);

  auto loss = [&](bool with_grad) {
    typename StudentNet<double>::StepCache cache;
    MatX<double> a, e, hn;
    MatX<double> h = net.initial_hidden(5);
    net.forward(x, h, a, e, hn, with_grad ? &cache : nullptr);
    double L = (a - ta).squaredNorm() + (e - te).squaredNorm();
    if (with_grad) {
      MatX<double> dh0 = MatX<double>::Zero(kStudentHidden, 5);
      net.backward(cache, 2.0 * (a - ta), 2.0 * (e - te), dh0);
    }
    return L;
  };
  expect_grads_match_fd(net.store, loss);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // with bias correction the first update is lr * g / (|g| + eps)
  ParamStore<float> store;
  RngStream rng = RngStream::keyed(21);
  Linear<float> lin;
  lin.init(store, "lin", 1, 1, rng);
  float before = store.data[0];
  store.grad[0] = 0.5f;
  Adam<float> opt;
  opt.lr = 0.01;
  opt.step(store);
  EXPECT_NEAR(store.data[0] - before, -0.01, 1e-8);
}

TEST(Adam, ZeroGradientLeavesParametersUntouched) {
  ParamStore<float> store;
  RngStream rng = RngStream::keyed(22);
  Linear<float> lin;
  lin.init(store, "lin", 4, 4, rng);
  auto before = store.data;
  store.zero_grad();
  Adam<float> opt;
  opt.step(store);
  opt.step(store);
  EXPECT_EQ(before, store.data);
}

TEST(Adam, DescendsQuadraticToMinimum) {
  // single weight, L = (w - 3)^2; a few hundred steps must land on 3
  ParamStore<double> store;
  RngStream rng = RngStream::keyed(23);
  Linear<double> lin;
  lin.init(store, "lin", 1, 1, rng);
  Adam<double> opt;
  opt.lr = 0.05;
  for (int i = 0; i < 600; ++i) {
    store.zero_grad();
    store.grad[0] = 2.0 * (store.data[0] - 3.0);
    opt.step(store);
  }
  EXPECT_NEAR(store.data[0], 3.0, 1e-3);
}

TEST(GradClip, ScalesOnlyWhenAboveLimit) {
  ParamStore<float> store;
  RngStream rng = RngStream::keyed(24);
  Linear<float> lin;
  lin.init(store, "lin", 2, 2, rng);
  store.zero_grad();
  store.grad[0] = 3.0f;
  store.grad[1] = 4.0f;  // norm 5
  clip_global_grad_norm(store, 1.0f);
  EXPECT_NEAR(global_grad_norm(store), 1.0f, 1e-6);
  EXPECT_NEAR(store.grad[0] / store.grad[1], 0.75f, 1e-6);

  store.zero_grad();
  store.grad[2] = 0.3f;
  clip_global_grad_norm(store, 1.0f);
  EXPECT_FLOAT_EQ(store.grad[2], 0.3f);
}

TEST(Init, SameSeedBitIdenticalDifferentSeedNot) {
  RngStream a = RngStream::keyed(5), b = RngStream::keyed(5),
            c = RngStream::keyed(6);
  ActorCritic<float> na(46, 9, a), nb(46, 9, b), nc(46, 9, c);
  EXPECT_EQ(na.store.data, nb.store.data);
  EXPECT_NE(na.store.data, nc.store.data);
  EXPECT_EQ(param_hash(na.store), param_hash(nb.store));
  EXPECT_NE(param_hash(na.store), param_hash(nc.store));
}

TEST(Init, MeanHeadSmallLogStdZero) {
  RngStream rng = RngStream::keyed(7);
  ActorCritic<float> net(46, 9, rng);
  EXPECT_LT(net.store.mat(net.mean_head.w).cwiseAbs().maxCoeff(), 0.01f);
  EXPECT_EQ(net.log_std_vec().cwiseAbs().maxCoeff(), 0.0f);
}

TEST(ParamHash, SensitiveToSingleElement) {
  RngStream rng = RngStream::keyed(8);
  ActorCritic<float> net(19, 9, rng);
  uint64_t h0 = param_hash(net.store);
  net.store.data[1234] += 1e-6f;
  EXPECT_NE(param_hash(net.store), h0);
}

TEST(RunningNorm, MatchesDirectMomentsAndMergesBatches) {
  RngStream rng = RngStream::keyed(31);
  Eigen::MatrixXf all(3, 50);
  for (int i = 0; i < all.size(); ++i)
    all.data()[i] = static_cast<float>(rng.normal(2.0, 3.0));

  RunningNorm one(3);
  one.update(all);
  RunningNorm split(3);
  split.update(all.leftCols(17));
  split.update(all.rightCols(33));

  Eigen::MatrixXd d = all.cast<double>();
  Eigen::VectorXd mean = d.rowwise().mean();
  Eigen::VectorXd var =
      (d.colwise() - mean).array().square().rowwise().sum() / d.cols();

  EXPECT_LT((one.mean() - mean).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((one.var() - var).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((split.mean() - mean).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((split.var() - var).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(RunningNorm, NormalizesAndClipsOutliers) {
  RunningNorm norm(2);
  Eigen::MatrixXf batch(2, 4);
  batch << 1, 3, 1, 3, 10, 10, 10, 10;
  norm.update(batch);  // mean (2,10), var (1,0)

  Eigen::MatrixXf x(2, 1);
  x << 4, 10;
  Eigen::MatrixXf y = norm.normalize(x);
  EXPECT_NEAR(y(0, 0), 2.0f, 1e-4);
  EXPECT_NEAR(y(1, 0), 0.0f, 1e-4);

  x << 1000, 10;
  EXPECT_FLOAT_EQ(norm.normalize(x)(0, 0), 10.0f);  // clipped
  x << -1000, 10;
  EXPECT_FLOAT_EQ(norm.normalize(x)(0, 0), -10.0f);
}

TEST(RunningNorm, SliceSelectsFeatureSubset) {
  RngStream rng = RngStream::keyed(32);
  Eigen::MatrixXf batch(5, 40);
  for (int i = 0; i < batch.size(); ++i)
    batch.data()[i] = static_cast<float>(rng.normal(0.0, 1.0) + i % 5);
  RunningNorm full(5);
  full.update(batch);
  int idx[2] = {1, 4};
  RunningNorm sub = full.slice(idx, 2);
  EXPECT_DOUBLE_EQ(sub.mean()(0), full.mean()(1));
  EXPECT_DOUBLE_EQ(sub.mean()(1), full.mean()(4));
  EXPECT_DOUBLE_EQ(sub.var()(0), full.var()(0 + 1));
  EXPECT_DOUBLE_EQ(sub.count(), full.count());
}

TEST(RunningNorm, JsonRoundTrip) {
  RngStream rng = RngStream::keyed(33);
  Eigen::MatrixXf batch(4, 12);
  for (int i = 0; i < batch.size(); ++i)
    batch.data()[i] = static_cast<float>(rng.uniform(-2.0, 2.0));
  RunningNorm norm(4);
  norm.update(batch);
  RunningNorm back = RunningNorm::from_json(norm.to_json());
  EXPECT_EQ(back.count(), norm.count());
  EXPECT_EQ(back.mean(), norm.mean());
  EXPECT_EQ(back.var(), norm.var());
}

TEST(Checkpoint, RoundTripIsBitExact) {
  std::string path = temp_path("doorlab_ckpt_roundtrip.bin");
  RngStream rng = RngStream::keyed(41);
  ActorCritic<float> net(46, 9, rng);
  net.store.mat(net.log_std).setConstant(-0.7f);

  RunningNorm norm(46);
  Eigen::MatrixXf batch = Eigen::MatrixXf::Random(46, 8);
  norm.update(batch);

  json meta;
  meta["kind"] = "actor_critic";
  meta["layout_version"] = "obs-layout-v1";
  meta["seed"] = 41;
  meta["step"] = 12345;
  meta["config_hash"] = "deadbeef";
  meta["obs_norm"] = norm.to_json();
  save_checkpoint(path, net.store, meta);

  RngStream rng2 = RngStream::keyed(999);
  ActorCritic<float> other(46, 9, rng2);
  ASSERT_NE(other.store.data, net.store.data);
  json header = load_checkpoint(path, other.store);

  EXPECT_EQ(other.store.data, net.store.data);
  EXPECT_EQ(param_hash(other.store), param_hash(net.store));
  EXPECT_EQ(header["kind"], "actor_critic");
  EXPECT_EQ(header["layout_version"], "obs-layout-v1");
  EXPECT_EQ(header["step"], 12345);
  RunningNorm back = RunningNorm::from_json(header["obs_norm"]);
  EXPECT_EQ(back.mean(), norm.mean());
  std::remove(path.c_str());
}

TEST(Checkpoint, RejectsCorruptionAndMismatch) {
  std::string path = temp_path("doorlab_ckpt_corrupt.bin");
  RngStream rng = RngStream::keyed(43);
  ActorCritic<float> net(19, 9, rng);
  json meta;
  meta["layout_version"] = "obs-layout-v1";
  save_checkpoint(path, net.store, meta);

  // wrong architecture: registry differs
  {
    RngStream r2 = RngStream::keyed(44);
    ActorCritic<float> wrong_dims(46, 9, r2);
    EXPECT_THROW(load_checkpoint(path, wrong_dims.store), std::runtime_error);
    StudentNet<float> student(19, 9, true, r2);
    EXPECT_THROW(load_checkpoint(path, student.store), std::runtime_error);
  }

  // bad magic
  {
    std::fstream f(path,
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0);
    f.write("XXXXXXXX", 8);
  }
  {
    RngStream r3 = RngStream::keyed(45);
    ActorCritic<float> same(19, 9, r3);
    EXPECT_THROW(load_checkpoint(path, same.store), std::runtime_error);
  }

  // truncated parameter block
  save_checkpoint(path, net.store, meta);
  {
    std::error_code ec;
    auto size = std::filesystem::file_size(path, ec);
    ASSERT_FALSE(ec);
    std::filesystem::resize_file(path, size - 64, ec);
    ASSERT_FALSE(ec);
  }
  {
    RngStream r4 = RngStream::keyed(46);
    ActorCritic<float> same(19, 9, r4);
    EXPECT_THROW(load_checkpoint(path, same.store), std::runtime_error);
  }

  EXPECT_THROW(load_checkpoint(temp_path("doorlab_no_such_file.bin"),
                               net.store),
               std::runtime_error);
  std::remove(path.c_str());
}

TEST(Checkpoint, FloatDoubleShadowTransfer) {
  // the float64 gradient-check shadow must accept float parameters exactly
  RngStream rng = RngStream::keyed(51);
  ActorCritic<float> net32(7, 3, rng);
  RngStream rng2 = RngStream::keyed(52);
  ActorCritic<double> net64(7, 3, rng2);
  net64.store.copy_from(net32.store);

  MatX<float> x32 = MatX<float>::Random(7, 5);
  MatX<double> x64 = x32.cast<double>();
  MatX<float> m32 = net32.actor_mean(x32);
  MatX<double> m64 = net64.actor_mean(x64);
  EXPECT_LT((m64.cast<float>() - m32).cwiseAbs().maxCoeff(), 1e-5f);
}

TEST(Forward, DeterministicAcrossCalls) {
  RngStream rng = RngStream::keyed(61);
  StudentNet<float> net(19, 9, true, rng);
  MatX<float> x = MatX<float>::Random(19, 6);
  MatX<float> h = net.initial_hidden(6);
  MatX<float> a1, e1, hn1, a2, e2, hn2;
  net.forward(x, h, a1, e1, hn1);
  net.forward(x, h, a2, e2, hn2);
  EXPECT_EQ(a1, a2);
  EXPECT_EQ(e1, e2);
  EXPECT_EQ(hn1, hn2);
  EXPECT_EQ(a1.rows(), 9);
  EXPECT_EQ(e1.rows(), kEstimationDim);
  EXPECT_EQ(hn1.rows(), kStudentHidden);
}
