#include "doorlab/domain_rand.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace doorlab;

namespace {

constexpr int kN = 100000;

std::vector<EpisodeSample> draw_many(int n, const RandomizationRanges& rr,
                                     std::uint64_t seed = 11) {
  std::vector<EpisodeSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    RngStream rng = RngStream::keyed(seed, static_cast<std::uint64_t>(i), 0);
    out.push_back(sample_episode(rng, rr));
  }
  return out;
}

// Kolmogorov-Smirnov distance against uniform on [lo, hi].
double ks_uniform(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double f = (xs[i] - lo) / (hi - lo);
    d = std::max(d, std::abs((static_cast<double>(i) + 1.0) / n - f));
    d = std::max(d, std::abs(static_cast<double>(i) / n - f));
  }
  return d;
}

}  // namespace

TEST(SampleEpisode, DeterministicForFixedStream) {
  RandomizationRanges rr;
  RngStream a = RngStream::keyed(5, 3, 7);
  RngStream b = RngStream::keyed(5, 3, 7);
  EpisodeSample s1 = sample_episode(a, rr);
  EpisodeSample s2 = sample_episode(b, rr);
  EXPECT_EQ(s1.door_type, s2.door_type);
  EXPECT_EQ(s1.spec.width, s2.spec.width);
  EXPECT_EQ(s1.dyn.hinge_resistance, s2.dyn.hinge_resistance);
  EXPECT_EQ(s1.dyn.closer_damping, s2.dyn.closer_damping);
  EXPECT_EQ(s1.base_init.pos.x(), s2.base_init.pos.x());
  EXPECT_EQ(s1.base_init.yaw, s2.base_init.yaw);
  EXPECT_EQ(s1.kp, s2.kp);
}

TEST(SampleEpisode, StreamIndependentOfSiblingCount) {
  // env 3's draw only depends on its own key, not on whether envs 0..2 drew
  RandomizationRanges rr;
  for (int i = 0; i < 3; ++i) {
    RngStream r = RngStream::keyed(5, static_cast<std::uint64_t>(i), 0);
    (void)sample_episode(r, rr);
  }
  RngStream after = RngStream::keyed(5, 3, 0);
  EpisodeSample with_siblings = sample_episode(after, rr);
  RngStream alone = RngStream::keyed(5, 3, 0);
  EpisodeSample standalone = sample_episode(alone, rr);
  EXPECT_EQ(with_siblings.spec.width, standalone.spec.width);
  EXPECT_EQ(with_siblings.dyn.mass, standalone.dyn.mass);
}

TEST(SampleEpisode, EveryValueWithinDeclaredRange) {
  RandomizationRanges rr;
  auto samples = draw_many(kN, rr);
  for (const EpisodeSample& s : samples) {
    EXPECT_GE(s.spec.width, 0.8);
    EXPECT_LE(s.spec.width, 1.0);
    EXPECT_GE(s.spec.thickness, 0.02);
    EXPECT_LE(s.spec.thickness, 0.06);
    EXPECT_GE(s.spec.handle_length, 0.08);
    EXPECT_LE(s.spec.handle_length, 0.12);
    EXPECT_GE(s.spec.handle_height, 0.7);
    EXPECT_LE(s.spec.handle_height, 1.3);
    EXPECT_GE(s.spec.handle_offset, 0.03);
    EXPECT_LE(s.spec.handle_offset, 0.12);
    EXPECT_GE(s.dyn.mass, 15.0);
    EXPECT_LE(s.dyn.mass, 75.0);
    EXPECT_GE(s.dyn.hinge_resistance, 0.0);
    EXPECT_LE(s.dyn.hinge_resistance, 30.0);
    EXPECT_GE(s.dyn.handle_resistance, 0.0);
    EXPECT_LE(s.dyn.handle_resistance, 3.0);
    EXPECT_GE(s.dyn.air_damping, 0.0);
    EXPECT_LE(s.dyn.air_damping, 4.0);
    EXPECT_GE(s.dyn.handle_max, deg2rad(15.0));
    EXPECT_LE(s.dyn.handle_max, deg2rad(90.0));
    for (double g : s.kp) {
      EXPECT_GE(g, 40.0);
      EXPECT_LE(g, 60.0);
    }
    for (double g : s.kd) {
      EXPECT_GE(g, 3.0);
      EXPECT_LE(g, 6.0);
    }
    EXPECT_GE(s.base_init.pos.x(), -2.0);
    EXPECT_LE(s.base_init.pos.x(), -1.0);
    EXPECT_GE(s.base_init.pos.y(), -2.0);
    EXPECT_LE(s.base_init.pos.y(), 2.0);
    EXPECT_LE(std::abs(s.base_init.vel.x()), 0.5);
    EXPECT_LE(std::abs(s.base_init.vel.y()), 0.5);
    EXPECT_GE(s.door_type, 0);
    EXPECT_LT(s.door_type, 4);
  }
}

TEST(SampleEpisode, MixtureRatesMatchDeclaredProbabilities) {
  RandomizationRanges rr;
  auto samples = draw_many(kN, rr);
  int hinge_zero = 0, handle_zero = 0, damping_zero = 0;
  std::array<int, 4> type_count{};
  for (const EpisodeSample& s : samples) {
    hinge_zero += s.dyn.hinge_resistance == 0.0;
    handle_zero += s.dyn.handle_resistance == 0.0;
    damping_zero += s.dyn.alpha_dc == 0.0;
    type_count[static_cast<std::size_t>(s.door_type)] += 1;
  }
  const double n = kN;
  EXPECT_GE(hinge_zero / n, 0.19);
  EXPECT_LE(hinge_zero / n, 0.21);
  EXPECT_GE(handle_zero / n, 0.19);
  EXPECT_LE(handle_zero / n, 0.21);
  EXPECT_GE(damping_zero / n, 0.39);
  EXPECT_LE(damping_zero / n, 0.41);
  for (int c : type_count) {
    EXPECT_GE(c / n, 0.24);
    EXPECT_LE(c / n, 0.26);
  }
}

TEST(SampleEpisode, ContinuousMarginalsAreUniform) {
  RandomizationRanges rr;
  auto samples = draw_many(kN, rr);
  std::vector<double> mass, width, phimax, lateral, kp0, hinge_nz;
  for (const EpisodeSample& s : samples) {
    mass.push_back(s.dyn.mass);
    width.push_back(s.spec.width);
    phimax.push_back(s.dyn.handle_max);
    lateral.push_back(s.base_init.pos.y());
    kp0.push_back(s.kp[0]);
    if (s.dyn.hinge_resistance > 0.0)
      hinge_nz.push_back(s.dyn.hinge_resistance);
  }
  EXPECT_LE(ks_uniform(mass, 15.0, 75.0), 0.01);
  EXPECT_LE(ks_uniform(width, 0.8, 1.0), 0.01);
  EXPECT_LE(ks_uniform(phimax, deg2rad(15.0), deg2rad(90.0)), 0.01);
  EXPECT_LE(ks_uniform(lateral, -2.0, 2.0), 0.01);
  EXPECT_LE(ks_uniform(kp0, 40.0, 60.0), 0.01);
  // conditioned on not being zeroed, pretension stays uniform
  EXPECT_LE(ks_uniform(hinge_nz, 0.0, 30.0), 0.01);
}

TEST(SampleEpisode, CloserDampingIsAlphaTimesPretension) {
  RandomizationRanges rr;
  auto samples = draw_many(20000, rr, 12);
  int checked = 0;
  for (const EpisodeSample& s : samples) {
    if (s.dyn.alpha_dc > 0.0) {
      EXPECT_DOUBLE_EQ(s.dyn.closer_damping,
                       s.dyn.alpha_dc * s.dyn.hinge_resistance);
      EXPECT_GE(s.dyn.alpha_dc, 1.5);
      EXPECT_LE(s.dyn.alpha_dc, 3.0);
      ++checked;
    } else {
      EXPECT_EQ(s.dyn.closer_damping, 0.0);
      EXPECT_EQ(s.dyn.air_damping, 0.0);
    }
  }
  EXPECT_GT(checked, 10000);
}

TEST(SampleEpisode, DerivedDoorQuantitiesConsistent) {
  RandomizationRanges rr;
  auto samples = draw_many(1000, rr, 13);
  for (const EpisodeSample& s : samples) {
    EXPECT_DOUBLE_EQ(s.dyn.hinge_inertia,
                     s.dyn.mass * s.spec.width * s.spec.width / 3.0);
    EXPECT_DOUBLE_EQ(s.dyn.unlatch_angle, 0.8 * s.dyn.handle_max);
    EXPECT_EQ(s.dyn.handle_inertia, kHandleInertia);
  }
}

TEST(SampleEpisode, ArmStartsAtDefaultPosture) {
  RandomizationRanges rr;
  ArmParams arm;
  RngStream rng = RngStream::keyed(14, 0, 0);
  EpisodeSample s = sample_episode(rng, rr, arm);
  EXPECT_EQ(s.arm_init.q, arm.q_default);
  for (double v : s.arm_init.qd) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(s.base_init.yaw_rate, 0.0);
  EXPECT_EQ(s.base_init.tilt, 0.0);
}

TEST(Pinning, PinnedDrawStillConsumesStream) {
  RandomizationRanges rr;
  RandomizationRanges pinned;
  pinned.pin("tau_hinge", 40.0);
  pinned.pin("tau_hinge_zero_prob", 0.0);
  for (int i = 0; i < 50; ++i) {
    RngStream a = RngStream::keyed(15, static_cast<std::uint64_t>(i), 0);
    RngStream b = RngStream::keyed(15, static_cast<std::uint64_t>(i), 0);
    EpisodeSample base = sample_episode(a, rr);
    EpisodeSample pin = sample_episode(b, pinned);
    EXPECT_EQ(pin.dyn.hinge_resistance, 40.0);
    // everything downstream of the pinned draw is untouched
    EXPECT_EQ(base.dyn.handle_resistance, pin.dyn.handle_resistance);
    EXPECT_EQ(base.dyn.handle_max, pin.dyn.handle_max);
    EXPECT_EQ(base.kp, pin.kp);
    EXPECT_EQ(base.base_init.pos.x(), pin.base_init.pos.x());
    EXPECT_EQ(base.base_init.yaw, pin.base_init.yaw);
    // and closer damping follows the pinned pretension
    if (base.dyn.alpha_dc > 0.0)
      EXPECT_DOUBLE_EQ(pin.dyn.closer_damping, base.dyn.alpha_dc * 40.0);
  }
}

TEST(Pinning, DoorTypeIndexRoundTrips) {
  EXPECT_EQ(door_type_index(OpeningDir::push, HingeSide::left), 0);
  EXPECT_EQ(door_type_index(OpeningDir::push, HingeSide::right), 1);
  EXPECT_EQ(door_type_index(OpeningDir::pull, HingeSide::left), 2);
  EXPECT_EQ(door_type_index(OpeningDir::pull, HingeSide::right), 3);
  for (int t = 0; t < 4; ++t) {
    EXPECT_EQ(door_type_index(door_type_dir(t), door_type_side(t)), t);
    RandomizationRanges rr;
    rr.pin("door_type", t);
    RngStream rng = RngStream::keyed(16, static_cast<std::uint64_t>(t), 0);
    EpisodeSample s = sample_episode(rng, rr);
    EXPECT_EQ(s.door_type, t);
    EXPECT_EQ(s.spec.opening_dir, door_type_dir(t));
    EXPECT_EQ(s.spec.hinge_side, door_type_side(t));
  }
}

TEST(Freezing, FreezeAllPinsMidpointsAndKillsMixtures) {
  RandomizationRanges rr;
  rr.freeze("all");
  RngStream a = RngStream::keyed(17, 0, 0);
  RngStream b = RngStream::keyed(99, 12, 3);
  EpisodeSample s1 = sample_episode(a, rr);
  EpisodeSample s2 = sample_episode(b, rr);
  EXPECT_EQ(s1.dyn.mass, 45.0);
  EXPECT_EQ(s1.dyn.hinge_resistance, 15.0);  // never zeroed once frozen
  EXPECT_EQ(s1.dyn.handle_resistance, 1.5);
  EXPECT_DOUBLE_EQ(s1.dyn.air_damping, 2.0);
  EXPECT_DOUBLE_EQ(s1.dyn.alpha_dc, 2.25);
  EXPECT_DOUBLE_EQ(s1.spec.width, 0.9);
  EXPECT_EQ(s1.door_type, 0);
  EXPECT_DOUBLE_EQ(s1.base_init.pos.x(), -1.5);
  EXPECT_DOUBLE_EQ(s1.base_init.pos.y(), 0.0);
  // every field identical across seeds
  EXPECT_EQ(s1.dyn.mass, s2.dyn.mass);
  EXPECT_EQ(s1.spec.handle_offset, s2.spec.handle_offset);
  EXPECT_EQ(s1.base_init.yaw, s2.base_init.yaw);
  EXPECT_EQ(s1.kp, s2.kp);
}

TEST(Freezing, GroupFreezeLeavesOthersRandom) {
  RandomizationRanges rr;
  rr.freeze("geometry");
  RngStream a = RngStream::keyed(18, 0, 0);
  RngStream b = RngStream::keyed(18, 1, 0);
  EpisodeSample s1 = sample_episode(a, rr);
  EpisodeSample s2 = sample_episode(b, rr);
  EXPECT_EQ(s1.spec.width, 0.9);
  EXPECT_EQ(s2.spec.width, 0.9);
  EXPECT_EQ(s1.spec.thickness, 0.04);
  EXPECT_NE(s1.dyn.mass, s2.dyn.mass);
  EXPECT_NE(s1.base_init.pos.x(), s2.base_init.pos.x());
}

TEST(Freezing, ValidationRejectsBadInput) {
  RandomizationRanges rr;
  rr.mass.lo = 80.0;  // above hi
  EXPECT_THROW(rr.validate(), std::invalid_argument);
  RandomizationRanges rr2;
  rr2.tau_hinge_zero_prob = 1.5;
  EXPECT_THROW(rr2.validate(), std::invalid_argument);
  RandomizationRanges rr3;
  EXPECT_THROW(rr3.pin("no_such_knob", 1.0), std::invalid_argument);
  EXPECT_THROW(rr3.pin("door_type", 7.0), std::invalid_argument);
}

TEST(GenerateDoor, HingeSideAndHandlePlacement) {
  RandomizationRanges rr;
  rr.freeze("geometry");
  rr.pin("d_w", 0.9);
  rr.pin("h_o", 0.03);
  rr.pin("door_type", 1);  // push, hinge right
  RngStream rng = RngStream::keyed(19, 0, 0);
  EpisodeSample s = sample_episode(rng, rr);
  Vec2 hinge = hinge_point_xy(s.spec);
  EXPECT_DOUBLE_EQ(hinge.x(), 0.0);
  EXPECT_DOUBLE_EQ(hinge.y(), 0.45);

  // spindle sits d_w - h_o from the hinge along the panel
  DoorState closed;
  HandleFrame f = handle_frame(s.spec, closed);
  double along = (Vec2(f.spindle.head<2>()) - hinge).dot(panel_dir(s.spec, 0.0));
  EXPECT_NEAR(along, 0.9 - 0.03, 1e-9);
}

TEST(GenerateDoor, DistinctSeedsDiverge) {
  RandomizationRanges rr;
  RngStream a = RngStream::keyed(20, 0, 0);
  RngStream b = RngStream::keyed(21, 0, 0);
  EpisodeSample s1 = sample_episode(a, rr);
  EpisodeSample s2 = sample_episode(b, rr);
  EXPECT_NE(s1.spec.width, s2.spec.width);
  EXPECT_NE(s1.dyn.mass, s2.dyn.mass);
}
