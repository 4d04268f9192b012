#pragma once

// Dense network stack: flat parameter store, linear layers, tanh MLPs, a
// gated recurrent cell with hand-derived backward, Adam, running observation
// normalization, and a versioned checkpoint container.
//
// Everything is templated on the scalar so the float32 runtime path has a
// float64 shadow for finite-difference gradient checks.  Batches are columns.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "doorlab/rng.hpp"

namespace doorlab::nn {

using json = nlohmann::json;

template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// SIMD-aligned storage; heap-position-dependent kernel peeling would
// otherwise make identical runs diverge in the low mantissa bits
template <typename T>
using AlignedVec = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct ParamStore {
  struct Entry {
    std::string name;
    int offset = 0;
    int rows = 0;
    int cols = 0;
  };
  AlignedVec<T> data;
  AlignedVec<T> grad;
  std::vector<Entry> entries;

  int add(const std::string& name, int rows, int cols) {
    Entry e{name, static_cast<int>(data.size()), rows, cols};
    entries.push_back(e);
    data.resize(data.size() + static_cast<std::size_t>(rows * cols), T(0));
    grad.resize(data.size(), T(0));
    return static_cast<int>(entries.size()) - 1;
  }

  Eigen::Map<MatX<T>> mat(int idx) {
    const Entry& e = entries[static_cast<std::size_t>(idx)];
    return Eigen::Map<MatX<T>>(data.data() + e.offset, e.rows, e.cols);
  }
  Eigen::Map<const MatX<T>> mat(int idx) const {
    const Entry& e = entries[static_cast<std::size_t>(idx)];
    return Eigen::Map<const MatX<T>>(data.data() + e.offset, e.rows, e.cols);
  }
  Eigen::Map<MatX<T>> grad_mat(int idx) {
    const Entry& e = entries[static_cast<std::size_t>(idx)];
    return Eigen::Map<MatX<T>>(grad.data() + e.offset, e.rows, e.cols);
  }

  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }

  std::size_t size() const { return data.size(); }

  template <typename U>
  void copy_from(const ParamStore<U>& other) {
    if (other.data.size() != data.size())
      throw std::invalid_argument("param store: size mismatch");
    for (std::size_t i = 0; i < data.size(); ++i)
      data[i] = static_cast<T>(other.data[i]);
  }
};

// FNV-1a over the parameter bytes; used to prove a network stayed frozen
inline std::uint64_t param_hash(const ParamStore<float>& s) {
  std::uint64_t h = 1469598103934665603ULL;
  const unsigned char* p = reinterpret_cast<const unsigned char*>(s.data.data());
  for (std::size_t i = 0; i < s.data.size() * sizeof(float); ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
T global_grad_norm(const ParamStore<T>& s) {
  T sq = T(0);
  for (T g : s.grad) sq += g * g;
  return std::sqrt(sq);
}

template <typename T>
void clip_global_grad_norm(ParamStore<T>& s, T max_norm) {
  T n = global_grad_norm(s);
  if (n > max_norm && n > T(0)) {
    T scale = max_norm / n;
    for (T& g : s.grad) g *= scale;
  }
}

template <typename T>
struct Linear {
  int w = -1, b = -1;
  int in = 0, out = 0;

  void init(ParamStore<T>& store, const std::string& name, int in_dim,
            int out_dim, RngStream& rng, double scale = 1.0) {
    in = in_dim;
    out = out_dim;
    w = store.add(name + ".w", out_dim, in_dim);
    b = store.add(name + ".b", out_dim, 1);
    double limit = std::sqrt(6.0 / (in_dim + out_dim)) * scale;
    auto W = store.mat(w);
    for (int i = 0; i < W.size(); ++i)
      W.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
  }

  MatX<T> forward(const ParamStore<T>& store, const MatX<T>& x) const {
    return (store.mat(w) * x).colwise() + store.mat(b).col(0);
  }

  // accumulates parameter grads, returns dX
  MatX<T> backward(ParamStore<T>& store, const MatX<T>& x,
                   const MatX<T>& dy) const {
    store.grad_mat(w) += dy * x.transpose();
    store.grad_mat(b).col(0) += dy.rowwise().sum();
    return store.mat(w).transpose() * dy;
  }
};

template <typename T>
MatX<T> tanh_fwd(const MatX<T>& x) {
  return x.array().tanh().matrix();
}

// dL/dz from dL/da with a = tanh(z)
template <typename T>
MatX<T> tanh_bwd(const MatX<T>& a, const MatX<T>& da) {
  return (da.array() * (T(1) - a.array().square())).matrix();
}

template <typename T>
MatX<T> sigmoid(const MatX<T>& x) {
  return (T(1) / (T(1) + (-x.array()).exp())).matrix();
}

// layers.size()-1 linear maps; tanh after every hidden layer, and after the
// last one too when tanh_output is set (trunk mode)
template <typename T>
struct Mlp {
  std::vector<Linear<T>> layers;
  bool tanh_output = false;

  struct Cache {
    std::vector<MatX<T>> inputs;  // input to each layer
    std::vector<MatX<T>> acts;    // post-tanh output of each tanh layer
  };

  void init(ParamStore<T>& store, const std::string& name,
            const std::vector<int>& dims, bool tanh_out, RngStream& rng,
            double head_scale = 1.0) {
    tanh_output = tanh_out;
    layers.resize(dims.size() - 1);
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      double scale = (!tanh_out && i + 2 == dims.size()) ? head_scale : 1.0;
      layers[i].init(store, name + ".l" + std::to_string(i), dims[i],
                     dims[i + 1], rng, scale);
    }
  }

  MatX<T> forward(const ParamStore<T>& store, const MatX<T>& x,
                  Cache* cache = nullptr) const {
    MatX<T> h = x;
    if (cache) {
      cache->inputs.clear();
      cache->acts.clear();
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (cache) cache->inputs.push_back(h);
      h = layers[i].forward(store, h);
      bool active = tanh_output || i + 1 < layers.size();
      if (active) {
        h = tanh_fwd(h);
        if (cache) cache->acts.push_back(h);
      }
    }
    return h;
  }

  MatX<T> backward(ParamStore<T>& store, const Cache& cache,
                   MatX<T> dy) const {
    for (std::size_t ri = layers.size(); ri-- > 0;) {
      bool active = tanh_output || ri + 1 < layers.size();
      if (active) dy = tanh_bwd(cache.acts[ri], dy);
      dy = layers[ri].backward(store, cache.inputs[ri], dy);
    }
    return dy;
  }
};

// gated recurrent cell, h' = (1-z) .* n + z .* h with
//   z = sigm(Wz x + Uz h + bz), r = sigm(Wr x + Ur h + br),
//   n = tanh(Wn x + bn + r .* (Un h))
template <typename T>
struct GruCell {
  Linear<T> wz, wr, wn;  // input maps (own the biases)
  int uz = -1, ur = -1, un = -1;  // hidden maps, no bias
  int hidden = 0;

  struct StepCache {
    MatX<T> x, h, z, r, n, uh;
  };

  void init(ParamStore<T>& store, const std::string& name, int in_dim,
            int hidden_dim, RngStream& rng) {
    hidden = hidden_dim;
    wz.init(store, name + ".wz", in_dim, hidden_dim, rng);
    wr.init(store, name + ".wr", in_dim, hidden_dim, rng);
    wn.init(store, name + ".wn", in_dim, hidden_dim, rng);
    double limit = std::sqrt(6.0 / (2 * hidden_dim));
    for (int* idx : {&uz, &ur, &un}) {
      *idx = store.add(name + (idx == &uz ? ".uz" : idx == &ur ? ".ur" : ".un"),
                       hidden_dim, hidden_dim);
      auto U = store.mat(*idx);
      for (int i = 0; i < U.size(); ++i)
        U.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
    }
  }

  MatX<T> forward(const ParamStore<T>& store, const MatX<T>& x,
                  const MatX<T>& h, StepCache* cache = nullptr) const {
    MatX<T> z = sigmoid<T>(wz.forward(store, x) + store.mat(uz) * h);
    MatX<T> r = sigmoid<T>(wr.forward(store, x) + store.mat(ur) * h);
    MatX<T> uh = store.mat(un) * h;
    MatX<T> n =
        ((wn.forward(store, x) + (r.array() * uh.array()).matrix()).array())
            .tanh()
            .matrix();
    MatX<T> h_next = ((T(1) - z.array()) * n.array() + z.array() * h.array())
                         .matrix();
    if (cache) {
      cache->x = x;
      cache->h = h;
      cache->z = z;
      cache->r = r;
      cache->n = n;
      cache->uh = uh;
    }
    return h_next;
  }

  // given dL/dh', accumulate parameter grads and return (dx, dh)
  std::pair<MatX<T>, MatX<T>> backward(ParamStore<T>& store,
                                       const StepCache& c,
                                       const MatX<T>& dh_next) const {
    MatX<T> dn = (dh_next.array() * (T(1) - c.z.array())).matrix();
    MatX<T> dz = (dh_next.array() * (c.h.array() - c.n.array())).matrix();
    MatX<T> dh = (dh_next.array() * c.z.array()).matrix();

    MatX<T> dan = (dn.array() * (T(1) - c.n.array().square())).matrix();
    MatX<T> dx = wn.backward(store, c.x, dan);
    MatX<T> dr = (dan.array() * c.uh.array()).matrix();
    MatX<T> duh = (dan.array() * c.r.array()).matrix();
    store.grad_mat(un) += duh * c.h.transpose();
    dh += store.mat(un).transpose() * duh;

    MatX<T> daz = (dz.array() * c.z.array() * (T(1) - c.z.array())).matrix();
    dx += wz.backward(store, c.x, daz);
    store.grad_mat(uz) += daz * c.h.transpose();
    dh += store.mat(uz).transpose() * daz;

    MatX<T> dar = (dr.array() * c.r.array() * (T(1) - c.r.array())).matrix();
    dx += wr.backward(store, c.x, dar);
    store.grad_mat(ur) += dar * c.h.transpose();
    dh += store.mat(ur).transpose() * dar;

    return {dx, dh};
  }
};

template <typename T>
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;  // double accumulators regardless of T
  long step_count = 0;

  void step(ParamStore<T>& store) {
    if (m.empty()) {
      m.assign(store.size(), 0.0);
      v.assign(store.size(), 0.0);
    }
    step_count += 1;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t i = 0; i < store.size(); ++i) {
      double g = static_cast<double>(store.grad[i]);
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      double update = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
      store.data[i] = static_cast<T>(static_cast<double>(store.data[i]) - update);
    }
  }
};

// per-feature running mean/std with double accumulators; normalized values
// are clipped to +-10
class RunningNorm {
 public:
  RunningNorm() = default;
  explicit RunningNorm(int dim)
      : count_(0),
        mean_(Eigen::VectorXd::Zero(dim)),
        m2_(Eigen::VectorXd::Zero(dim)) {}

  int dim() const { return static_cast<int>(mean_.size()); }
  double count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  Eigen::VectorXd var() const {
    if (count_ < 1.0) return Eigen::VectorXd::Ones(mean_.size());
    return m2_ / count_;
  }

  void update(const Eigen::MatrixXf& batch) {
    if (batch.rows() != mean_.size())
      throw std::invalid_argument("running norm: dim mismatch");
    double bn = static_cast<double>(batch.cols());
    if (bn == 0) return;
    Eigen::MatrixXd b = batch.cast<double>();
    Eigen::VectorXd bmean = b.rowwise().mean();
    Eigen::VectorXd bm2 =
        (b.colwise() - bmean).array().square().rowwise().sum();
    if (count_ == 0.0) {
      mean_ = bmean;
      m2_ = bm2;
      count_ = bn;
      return;
    }
    double total = count_ + bn;
    Eigen::VectorXd delta = bmean - mean_;
    mean_ += delta * (bn / total);
    m2_ += bm2 + delta.array().square().matrix() * (count_ * bn / total);
    count_ = total;
  }

  Eigen::MatrixXf normalize(const Eigen::MatrixXf& x) const {
    Eigen::ArrayXd sd = (var().array() + 1e-8).sqrt();
    Eigen::MatrixXd xd = x.cast<double>();
    Eigen::MatrixXd out =
        ((xd.colwise() - mean_).array().colwise() / sd).matrix();
    return out.cast<float>().cwiseMax(-10.0f).cwiseMin(10.0f);
  }

  // restriction to a subset of features, e.g. the student's view of stats
  // accumulated over the full teacher observation
  RunningNorm slice(const int* indices, int n) const {
    RunningNorm out(n);
    out.count_ = count_;
    for (int k = 0; k < n; ++k) {
      out.mean_(k) = mean_(indices[k]);
      out.m2_(k) = m2_(indices[k]);
    }
    return out;
  }

  json to_json() const {
    json j;
    j["count"] = count_;
    j["mean"] = std::vector<double>(mean_.data(), mean_.data() + mean_.size());
    j["m2"] = std::vector<double>(m2_.data(), m2_.data() + m2_.size());
    return j;
  }

  static RunningNorm from_json(const json& j) {
    std::vector<double> mean = j.at("mean").get<std::vector<double>>();
    std::vector<double> m2 = j.at("m2").get<std::vector<double>>();
    if (mean.size() != m2.size())
      throw std::invalid_argument("running norm: corrupt stats");
    RunningNorm out(static_cast<int>(mean.size()));
    out.count_ = j.at("count").get<double>();
    out.mean_ = Eigen::Map<Eigen::VectorXd>(mean.data(),
                                            static_cast<long>(mean.size()));
    out.m2_ = Eigen::Map<Eigen::VectorXd>(m2.data(),
                                          static_cast<long>(m2.size()));
    return out;
  }

 private:
  double count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

// ---------------------------------------------------------------------------
// checkpoint container: magic, little-endian u32 header length, JSON header,
// float32 little-endian parameters in registry order

inline constexpr char kCheckpointMagic[8] = {'D', 'O', 'O', 'R',
                                             'L', 'A', 'B', '1'};

inline void save_checkpoint(const std::string& path,
                            const ParamStore<float>& store,
                            const json& metadata) {
  json header = metadata;
  json reg = json::array();
  for (const auto& e : store.entries)
    reg.push_back({{"name", e.name}, {"rows", e.rows}, {"cols", e.cols}});
  header["params"] = reg;
  std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path);
  f.write(kCheckpointMagic, 8);
  std::uint32_t len = static_cast<std::uint32_t>(hs.size());
  f.write(reinterpret_cast<const char*>(&len), 4);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  f.write(reinterpret_cast<const char*>(store.data.data()),
          static_cast<std::streamsize>(store.data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("checkpoint: write failed " + path);
}

// loads parameters into a store whose registry must match the file exactly
inline json load_checkpoint(const std::string& path, ParamStore<float>& store) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 4);
  if (!f || len == 0 || len > (1u << 24))
    throw std::runtime_error("checkpoint: corrupt header length in " + path);
  std::string hs(len, '\0');
  f.read(hs.data(), len);
  if (!f) throw std::runtime_error("checkpoint: truncated header in " + path);
  json header = json::parse(hs, nullptr, false);
  if (header.is_discarded())
    throw std::runtime_error("checkpoint: unparseable header in " + path);

  const json& reg = header.at("params");
  if (reg.size() != store.entries.size())
    throw std::runtime_error("checkpoint: parameter registry mismatch");
  for (std::size_t i = 0; i < store.entries.size(); ++i) {
    const auto& e = store.entries[i];
    if (reg[i].at("name") != e.name ||
        reg[i].at("rows").get<int>() != e.rows ||
        reg[i].at("cols").get<int>() != e.cols)
      throw std::runtime_error("checkpoint: shape mismatch at " + e.name);
  }
  f.read(reinterpret_cast<char*>(store.data.data()),
         static_cast<std::streamsize>(store.data.size() * sizeof(float)));
  if (!f) throw std::runtime_error("checkpoint: truncated parameters in " + path);
  char extra;
  if (f.read(&extra, 1))
    throw std::runtime_error("checkpoint: trailing bytes in " + path);
  return header;
}

// header only, for deciding how to construct the network before loading
inline json read_checkpoint_header(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t len = 0;
  f.read(reinterpret_cast<char*>(&len), 4);
  if (!f || len == 0 || len > (1u << 24))
    throw std::runtime_error("checkpoint: corrupt header length in " + path);
  std::string hs(len, '\0');
  f.read(hs.data(), len);
  if (!f) throw std::runtime_error("checkpoint: truncated header in " + path);
  json header = json::parse(hs, nullptr, false);
  if (header.is_discarded())
    throw std::runtime_error("checkpoint: unparseable header in " + path);
  return header;
}

// ---------------------------------------------------------------------------
// the two network architectures

inline const std::vector<int>& trunk_hidden() {
  static const std::vector<int> dims{256, 160, 128};
  return dims;
}

template <typename T>
struct ActorCritic {
  ParamStore<T> store;
  Mlp<T> actor_trunk;
  Linear<T> mean_head;
  int log_std = -1;
  Mlp<T> critic;
  int obs_dim = 0, act_dim = 0;

  struct Cache {
    typename Mlp<T>::Cache trunk;
    MatX<T> trunk_out;
    typename Mlp<T>::Cache critic;
  };

  ActorCritic(int obs, int act, RngStream& rng) : obs_dim(obs), act_dim(act) {
    std::vector<int> tdims{obs};
    for (int h : trunk_hidden()) tdims.push_back(h);
    actor_trunk.init(store, "actor", tdims, true, rng);
    mean_head.init(store, "actor.mean", tdims.back(), act, rng, 0.01);
    log_std = store.add("actor.log_std", act, 1);  // zeros: unit std
    std::vector<int> cdims = tdims;
    cdims.push_back(1);
    critic.init(store, "critic", cdims, false, rng);
  }

  MatX<T> actor_mean(const MatX<T>& x, Cache* cache = nullptr) const {
    MatX<T> t = actor_trunk.forward(store, x, cache ? &cache->trunk : nullptr);
    if (cache) cache->trunk_out = t;
    return mean_head.forward(store, t);
  }

  VecX<T> log_std_vec() const { return store.mat(log_std).col(0); }

  VecX<T> value(const MatX<T>& x, Cache* cache = nullptr) const {
    return critic.forward(store, x, cache ? &cache->critic : nullptr)
        .row(0)
        .transpose();
  }

  void backward_actor(const Cache& cache, const MatX<T>& dmean,
                      const VecX<T>& dlog_std) {
    MatX<T> dt = mean_head.backward(store, cache.trunk_out, dmean);
    actor_trunk.backward(store, cache.trunk, dt);
    store.grad_mat(log_std).col(0) += dlog_std;
  }

  void backward_critic(const Cache& cache, const VecX<T>& dvalue) {
    MatX<T> dv = dvalue.transpose();
    critic.backward(store, cache.critic, dv);
  }
};

inline constexpr int kStudentHidden = 256;
inline constexpr int kEstimationDim = 19;  // 15 continuous + 4 type logits

template <typename T>
struct StudentNet {
  ParamStore<T> store;
  Linear<T> encoder;
  bool recurrent = true;
  GruCell<T> gru;      // when recurrent
  Linear<T> hidden2;   // feed-forward ablation otherwise
  Linear<T> action_head;
  Linear<T> decoder;
  int obs_dim = 0, act_dim = 0;

  struct StepCache {
    MatX<T> x;
    MatX<T> enc;  // post-tanh
    typename GruCell<T>::StepCache gru;
    MatX<T> mlp_act;  // post-tanh hidden for the ablation
    MatX<T> h_out;
  };

  StudentNet(int obs, int act, bool use_gru, RngStream& rng)
      : recurrent(use_gru), obs_dim(obs), act_dim(act) {
    encoder.init(store, "enc", obs, kStudentHidden, rng);
    if (recurrent)
      gru.init(store, "gru", kStudentHidden, kStudentHidden, rng);
    else
      hidden2.init(store, "hid2", kStudentHidden, kStudentHidden, rng);
    action_head.init(store, "act", kStudentHidden, act, rng, 0.01);
    decoder.init(store, "dec", kStudentHidden, kEstimationDim, rng);
  }

  MatX<T> initial_hidden(int batch) const {
    return MatX<T>::Zero(kStudentHidden, batch);
  }

  // one step; outputs (action mean, estimation) and the next hidden
  void forward(const MatX<T>& x, const MatX<T>& h, MatX<T>& action,
               MatX<T>& est, MatX<T>& h_next, StepCache* cache = nullptr) const {
    MatX<T> e = tanh_fwd<T>(encoder.forward(store, x));
    if (recurrent) {
      h_next = gru.forward(store, e, h, cache ? &cache->gru : nullptr);
    } else {
      h_next = tanh_fwd<T>(hidden2.forward(store, e));
      if (cache) cache->mlp_act = h_next;
    }
    action = action_head.forward(store, h_next);
    est = decoder.forward(store, h_next);
    if (cache) {
      cache->x = x;
      cache->enc = e;
      cache->h_out = h_next;
    }
  }

  // backward for one step given output grads and the gradient flowing into
  // h_next from the future; returns the gradient into the incoming hidden
  MatX<T> backward(const StepCache& c, const MatX<T>& daction,
                   const MatX<T>& dest, const MatX<T>& dh_future) {
    MatX<T> dh = dh_future;
    dh += action_head.backward(store, c.h_out, daction);
    dh += decoder.backward(store, c.h_out, dest);
    MatX<T> de;
    MatX<T> dh_prev;
    if (recurrent) {
      auto [dx_gru, dh_in] = gru.backward(store, c.gru, dh);
      de = dx_gru;
      dh_prev = dh_in;
    } else {
      MatX<T> dz = tanh_bwd<T>(c.mlp_act, dh);
      de = hidden2.backward(store, c.enc, dz);
      dh_prev = MatX<T>::Zero(dh.rows(), dh.cols());
    }
    MatX<T> denc = tanh_bwd<T>(c.enc, de);
    encoder.backward(store, c.x, denc);
    return dh_prev;
  }
};

}  // namespace doorlab::nn
