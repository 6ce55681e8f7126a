#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <set>

#include "imupose/error.hpp"
#include "imupose/synthesis.hpp"
#include "support.hpp"

using namespace imupose;

namespace {

PoseSequence static_sequence(int frames, std::uint32_t fps = 60) {
  PoseSequence seq;
  seq.fps = fps;
  for (int t = 0; t < frames; ++t) seq.frames.push_back({Pose::identity(), Rotation(), Vec3::Zero()});
  return seq;
}

std::vector<std::vector<Vec3>> trajectory(int frames, const std::function<Vec3(int)>& p) {
  std::vector<std::vector<Vec3>> out;
  for (int t = 0; t < frames; ++t) out.push_back({p(t), 2.0 * p(t)});
  return out;
}

}  // namespace

TEST_CASE("accelerations: constant, linear and quadratic trajectories") {
  const double dt = 1.0 / 60.0;
  const auto constant = synthesize_accelerations(trajectory(50, [](int) { return Vec3(1, 2, 3); }), dt);
  const auto linear = synthesize_accelerations(
      trajectory(50, [&](int t) { return Vec3(0.3, -1.2, 2.0) * (t * dt); }), dt);
  const Vec3 g(0, -9.81, 0);
  const auto quadratic = synthesize_accelerations(
      trajectory(100, [&](int t) { return 0.5 * g * (t * dt) * (t * dt); }), dt);

  REQUIRE(constant.size() == 48);
  REQUIRE(quadratic.size() == 98);
  for (const auto& f : constant) CHECK(f[0].norm() == 0.0);
  for (const auto& f : linear) CHECK(f[0].cwiseAbs().maxCoeff() < 1e-9);
  for (const auto& f : quadratic) {
    CHECK((f[0] - g).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((f[1] - 2.0 * g).cwiseAbs().maxCoeff() < 1e-9);
  }

  CHECK_THROWS_AS(synthesize_accelerations(trajectory(2, [](int) { return Vec3::Zero(); }), dt), Error);
  CHECK_THROWS_AS(synthesize_accelerations(trajectory(5, [](int) { return Vec3::Zero(); }), 0.0), Error);
}

TEST_CASE("accelerations are linear in positions") {
  std::mt19937_64 rng(2);
  std::vector<std::vector<Vec3>> p, q, mix;
  for (int t = 0; t < 30; ++t) {
    p.push_back({test::random_vec(rng)});
    q.push_back({test::random_vec(rng)});
    mix.push_back({1.5 * p.back()[0] - 0.25 * q.back()[0]});
  }
  const auto ap = synthesize_accelerations(p, 0.1);
  const auto aq = synthesize_accelerations(q, 0.1);
  const auto am = synthesize_accelerations(mix, 0.1);
  for (size_t t = 0; t < am.size(); ++t) {
    CHECK((am[t][0] - (1.5 * ap[t][0] - 0.25 * aq[t][0])).norm() < 1e-9);
  }
}

TEST_CASE("orientations follow forward kinematics") {
  std::mt19937_64 rng(4);
  PoseSequence seq;
  for (int t = 0; t < 20; ++t) {
    seq.frames.push_back({test::random_pose(rng), test::random_rotation(rng), test::random_vec(rng)});
  }
  const auto ori = synthesize_orientations(seq, default_tree(), default_sensors());
  REQUIRE(ori.size() == 20);
  for (int t = 0; t < 20; ++t) {
    const auto& f = seq.frames[t];
    const auto g = forward_kinematics(default_tree(), f.pose, f.root_rotation, f.root_position);
    for (size_t s = 0; s < default_sensors().size(); ++s) {
      const auto& sensor = default_sensors()[s];
      const Mat3 expect = g[sensor.bone].rotation.matrix() * sensor.offset_rotation.matrix();
      CHECK(test::max_abs_diff(ori[t][s].matrix(), expect) < 1e-12);
    }
  }
}

TEST_CASE("static identity sequence and spinning root") {
  auto seq = static_sequence(10);
  const auto rest = synthesize_orientations(seq, default_tree(), default_sensors());
  for (const auto& frame : rest) {
    for (size_t s = 0; s < frame.size(); ++s) {
      CHECK(test::max_abs_diff(frame[s].matrix(), default_sensors()[s].offset_rotation.matrix()) < 1e-15);
    }
  }
  for (int t = 0; t < 10; ++t) seq.frames[t].root_rotation = Rotation::about_y(0.1 * t);
  const auto spun = synthesize_orientations(seq, default_tree(), default_sensors());
  for (int t = 0; t < 10; ++t) {
    for (size_t s = 0; s < spun[t].size(); ++s) {
      CHECK(test::max_abs_diff(spun[t][s].matrix(), (Rotation::about_y(0.1 * t) * rest[t][s]).matrix()) < 1e-12);
    }
  }

  const auto imu = synthesize_imu(seq, default_tree(), default_sensors());
  CHECK(imu.frames.size() == 8);
  CHECK(imu.sensor_count() == kSensorCount);
  // Output frame k belongs to input frame k + 1.
  CHECK(test::max_abs_diff(imu.frames[0].orientations[0].matrix(), spun[1][0].matrix()) < 1e-15);
  CHECK(trim_to_imu_alignment(seq).frames.size() == 8);
}

TEST_CASE("synthesized accelerations are gravity-free sensor accelerations") {
  // Root translating with constant acceleration, no rotation.
  PoseSequence seq = static_sequence(40);
  const Vec3 acc(0.5, 0.0, -1.0);
  const double dt = 1.0 / 60.0;
  for (int t = 0; t < 40; ++t) seq.frames[t].root_position = 0.5 * acc * (t * dt) * (t * dt);
  const auto imu = synthesize_imu(seq, default_tree(), default_sensors());
  for (const auto& f : imu.frames) {
    for (const auto& a : f.accelerations) CHECK((a - acc).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("resampling") {
  SUBCASE("integer stride") {
    auto seq = static_sequence(240, 120);
    for (int t = 0; t < 240; ++t) seq.frames[t].root_position.x() = t;
    const auto out = resample(seq, 60);
    CHECK(out.fps == 60);
    REQUIRE(out.frames.size() == 120);
    for (int k = 0; k < 120; ++k) CHECK(out.frames[k].root_position.x() == 2 * k);
  }
  SUBCASE("identity") {
    auto seq = static_sequence(50, 60);
    for (int t = 0; t < 50; ++t) seq.frames[t].root_position.y() = t;
    const auto out = resample(seq, 60);
    REQUIRE(out.frames.size() == 50);
    for (int k = 0; k < 50; ++k) CHECK(out.frames[k].root_position.y() == k);
  }
  SUBCASE("nearest frame for non-divisible rates") {
    auto seq = static_sequence(100, 100);
    for (int t = 0; t < 100; ++t) seq.frames[t].root_position.z() = t;
    const auto out = resample(seq, 60);
    REQUIRE(out.frames.size() == 60);
    for (int k = 0; k < 60; ++k) {
      const int expect = std::min(99, static_cast<int>(std::floor(k * 100.0 / 60.0 + 0.5)));
      CHECK(out.frames[k].root_position.z() == expect);
    }
  }
  SUBCASE("upsampling is rejected") {
    try {
      resample(static_sequence(10, 30), 60);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kUnsupportedUpsample);
    }
  }
}

TEST_CASE("procedural motions") {
  const std::vector<MotionRequest> catalog = {{"leg_raise", 300, 0, 60}, {"leg_raise", 300, 0, 60}};
  const auto a = generate_procedural_motions(catalog, 0);
  const auto b = generate_procedural_motions(catalog, 0);
  REQUIRE(a.size() == 2);
  for (size_t t = 0; t < a[0].frames.size(); ++t) {
    CHECK(a[0].frames[t].root_position == b[1].frames[t].root_position);
    for (int j = 0; j < kJointCount; ++j) {
      CHECK(a[0].frames[t].pose.joint_rotations[j] == b[0].frames[t].pose.joint_rotations[j]);
      CHECK(a[0].frames[t].pose.joint_rotations[j] == a[1].frames[t].pose.joint_rotations[j]);
    }
  }

  std::vector<MotionRequest> all;
  for (const auto& f : motion_families()) all.push_back({f, 300, 1, 60});
  const auto seqs = generate_procedural_motions(all, 9);
  for (const auto& s : seqs) {
    CHECK(s.frames.size() >= 300);
    CHECK(s.fps == 60);
    for (const auto& f : s.frames) {
      CHECK(Rotation::is_rotation(f.root_rotation.matrix()));
      for (const auto& r : f.pose.joint_rotations) CHECK(Rotation::is_rotation(r.matrix()));
    }
  }

  CHECK_THROWS_AS(generate_procedural_motions({{"cartwheel", 300, 0, 60}}, 0), Error);
  CHECK_THROWS_AS(generate_procedural_motions({{"walk", 100, 0, 60}}, 0), Error);
}

TEST_CASE("walking moves the lower legs, standing still does not") {
  const auto seqs = generate_procedural_motions({{"walk", 600, 0, 60}, {"static", 600, 0, 60}}, 0);
  auto leg_variance = [](const ImuSequence& imu) {
    constexpr int kLeftLowerLeg = 3;
    Vec3 mean = Vec3::Zero();
    for (const auto& f : imu.frames) mean += f.accelerations[kLeftLowerLeg];
    mean /= static_cast<double>(imu.frames.size());
    double var = 0.0;
    for (const auto& f : imu.frames) var += (f.accelerations[kLeftLowerLeg] - mean).squaredNorm();
    return var / static_cast<double>(imu.frames.size());
  };
  const auto walk = synthesize_imu(seqs[0], default_tree(), default_sensors());
  const auto still = synthesize_imu(seqs[1], default_tree(), default_sensors());
  CHECK(leg_variance(walk) > 1e-2);
  CHECK(leg_variance(still) < 1e-20);
}

TEST_CASE("dataset splits") {
  const auto s = split_sequences(10, 0.8, 0.1, 0.1, 42);
  CHECK(s.train.size() == 8);
  CHECK(s.validation.size() == 1);
  CHECK(s.test.size() == 1);
  const auto again = split_sequences(10, 0.8, 0.1, 0.1, 42);
  CHECK(again.train == s.train);
  CHECK(again.validation == s.validation);
  CHECK(again.test == s.test);

  std::set<int> seen;
  for (const auto* part : {&s.train, &s.validation, &s.test}) {
    for (int i : *part) CHECK(seen.insert(i).second);
  }
  CHECK(seen.size() == 10);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 9);

  CHECK_THROWS_AS(split_sequences(3, 0.8, 0.1, 0.1, 0), Error);
  CHECK_THROWS_AS(split_sequences(10, 0.8, 0.1, 0.2, 0), Error);
}
