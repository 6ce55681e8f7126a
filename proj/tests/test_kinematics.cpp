#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <sstream>

#include "imupose/error.hpp"
#include "imupose/kinematics.hpp"
#include "support.hpp"

using namespace imupose;
using imupose::test::random_pose;
using imupose::test::random_rotation;

namespace {

using Mat4 = Eigen::Matrix4d;

Mat4 homogeneous(const Mat3& r, const Vec3& t) {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = t;
  return m;
}

// Chain of 4x4 matrices: joint j's frame is parent frame * T(offset_j) * R_j.
std::vector<Mat4> homogeneous_fk(const KinematicTree& tree, const Pose& pose, const Mat3& root_rot,
                                 const Vec3& root_pos) {
  std::vector<Mat4> g(tree.parent.size());
  g[0] = homogeneous(root_rot, root_pos) * homogeneous(pose.joint_rotations[0].matrix(), Vec3::Zero());
  for (size_t j = 1; j < g.size(); ++j) {
    g[j] = g[static_cast<size_t>(tree.parent[j])] * homogeneous(Mat3::Identity(), tree.rest_offset[j]) *
           homogeneous(pose.joint_rotations[j].matrix(), Vec3::Zero());
  }
  return g;
}

// Polar factor by Newton iteration X <- (X + X^-T) / 2, independent of SVD.
Mat3 newton_polar(Mat3 x) {
  for (int i = 0; i < 100; ++i) x = 0.5 * (x + x.inverse().transpose());
  return x;
}

}  // namespace

TEST_CASE("rotation validation rejects non-orthonormal matrices") {
  Mat3 m = Mat3::Identity();
  m(0, 1) = 1e-3;
  CHECK_THROWS_AS(Rotation::from_matrix(m), Error);
  Mat3 reflection = Mat3::Identity();
  reflection(2, 2) = -1.0;
  CHECK_THROWS_AS(Rotation::from_matrix(reflection), Error);
  CHECK_NOTHROW(Rotation::from_matrix(Rotation::about_z(0.3).matrix()));
}

TEST_CASE("project_to_rotation") {
  std::mt19937_64 rng(11);
  SUBCASE("idempotent on rotations") {
    for (int i = 0; i < 100; ++i) {
      const auto r = random_rotation(rng);
      CHECK(test::max_abs_diff(project_to_rotation(r.matrix()).matrix(), r.matrix()) < 1e-9);
    }
  }
  SUBCASE("removes uniform scale") {
    CHECK(test::max_abs_diff(project_to_rotation(2.0 * Mat3::Identity()).matrix(), Mat3::Identity()) < 1e-12);
  }
  SUBCASE("matches the Newton polar iteration for positive determinant") {
    for (int i = 0; i < 100; ++i) {
      Mat3 m = random_rotation(rng).matrix() + 0.2 * Mat3::Random();
      if (m.determinant() <= 0.1) continue;
      CHECK(test::max_abs_diff(project_to_rotation(m).matrix(), newton_polar(m)) < 1e-9);
    }
  }
  SUBCASE("nearer than any sampled rotation") {
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 5; ++trial) {
      Mat3 m = Mat3::Identity();
      for (int k = 0; k < 9; ++k) m(k / 3, k % 3) += 0.01 * n(rng);
      const auto r = project_to_rotation(m);
      CHECK(Rotation::is_rotation(r.matrix()));
      const double best = (r.matrix() - m).norm();
      for (int q = 0; q < 1000; ++q) {
        // Mix uniform samples with samples close to the answer.
        const Rotation cand = q % 2 == 0 ? random_rotation(rng)
                                         : r * Rotation::about_axis(test::random_vec(rng).normalized(), 0.01 * n(rng));
        CHECK(best <= (cand.matrix() - m).norm() + 1e-12);
      }
    }
  }
  SUBCASE("reflections are corrected to det +1") {
    for (int i = 0; i < 50; ++i) {
      Mat3 m = random_rotation(rng).matrix();
      m.col(0) *= -1.0;
      const auto r = project_to_rotation(m + 0.1 * Mat3::Random());
      CHECK(r.matrix().determinant() == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(Rotation::is_rotation(r.matrix()));
    }
  }
  SUBCASE("rank-deficient input") {
    Mat3 m = Mat3::Identity();
    m(2, 2) = 0.0;
    CHECK_THROWS_AS(project_to_rotation(m), Error);
    try {
      project_to_rotation(Mat3::Zero());
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kDegenerateInput);
    }
  }
}

TEST_CASE("geodesic angle") {
  CHECK(geodesic_angle(Rotation(), Rotation()) == 0.0);
  CHECK(geodesic_angle(Rotation(), Rotation::about_x(std::numbers::pi)) == doctest::Approx(std::numbers::pi));
  CHECK(geodesic_angle(Rotation(), Rotation::about_y(0.5)) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("default tree is topologically ordered") {
  const auto& tree = default_tree();
  CHECK(tree.joint_count() == kJointCount);
  CHECK(tree.parent[0] == -1);
  for (int j = 1; j < tree.joint_count(); ++j) CHECK(tree.parent[j] < j);
  CHECK_NOTHROW(tree.validate());

  KinematicTree bad = tree;
  bad.parent[5] = 7;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("identity pose places joints at prefix sums of offsets") {
  const auto& tree = default_tree();
  const auto g = forward_kinematics(tree, Pose::identity(), Rotation(), Vec3::Zero());
  for (int j = 0; j < tree.joint_count(); ++j) {
    Vec3 sum = Vec3::Zero();
    for (int k = j; k > 0; k = tree.parent[k]) sum += tree.rest_offset[k];
    CHECK((g[j].position - sum).norm() < 1e-12);
    CHECK(g[j].rotation.matrix() == Mat3::Identity());
  }
}

TEST_CASE("two-link chain with a quarter turn") {
  KinematicTree chain;
  chain.parent = {-1, 0, 1};
  chain.rest_offset = {Vec3::Zero(), Vec3(0, 1, 0), Vec3(0, 1, 0)};
  Pose pose = Pose::identity(3);
  pose.joint_rotations[1] = Rotation::about_z(std::numbers::pi / 2);
  const auto g = forward_kinematics(chain, pose, Rotation(), Vec3::Zero());
  CHECK((g[2].position - Vec3(-1, 1, 0)).norm() < 1e-12);
  const auto h = homogeneous_fk(chain, pose, Mat3::Identity(), Vec3::Zero());
  CHECK((h[2].topRightCorner<3, 1>() - g[2].position).norm() < 1e-12);
}

TEST_CASE("forward kinematics matches the homogeneous-matrix chain") {
  std::mt19937_64 rng(3);
  const auto& tree = default_tree();
  for (int trial = 0; trial < 50; ++trial) {
    const auto pose = random_pose(rng);
    const auto root = random_rotation(rng);
    const Vec3 root_pos = test::random_vec(rng, 2.0);
    const auto g = forward_kinematics(tree, pose, root, root_pos);
    const auto h = homogeneous_fk(tree, pose, root.matrix(), root_pos);
    for (int j = 0; j < tree.joint_count(); ++j) {
      CHECK(test::max_abs_diff(g[j].rotation.matrix(), h[j].topLeftCorner<3, 3>()) < 1e-12);
      CHECK((g[j].position - h[j].topRightCorner<3, 1>()).norm() < 1e-12);
    }
    // Sensors against the same oracle.
    for (const auto& s : default_sensors()) {
      const auto t = sensor_world_transform(g[s.bone], s);
      const Mat4 hs = h[s.bone] * homogeneous(s.offset_rotation.matrix(), s.offset_translation);
      CHECK(test::max_abs_diff(t.rotation.matrix(), hs.topLeftCorner<3, 3>()) < 1e-12);
      CHECK((t.position - hs.topRightCorner<3, 1>()).norm() < 1e-12);
    }
  }
}

TEST_CASE("forward kinematics properties") {
  std::mt19937_64 rng(5);
  const auto& tree = default_tree();
  for (int trial = 0; trial < 20; ++trial) {
    const auto pose = random_pose(rng);
    const auto root = random_rotation(rng);
    const auto g = forward_kinematics(tree, pose, root, Vec3::Zero());
    // Bone lengths are preserved.
    for (int j = 1; j < tree.joint_count(); ++j) {
      CHECK((g[j].position - g[tree.parent[j]].position).norm() ==
            doctest::Approx(tree.rest_offset[j].norm()).epsilon(1e-12));
    }
    // Left-equivariance under a global rotation.
    const auto G = random_rotation(rng);
    const auto gg = forward_kinematics(tree, pose, G * root, Vec3::Zero());
    for (int j = 0; j < tree.joint_count(); ++j) {
      CHECK((gg[j].position - G * g[j].position).norm() < 1e-12);
      CHECK(test::max_abs_diff(gg[j].rotation.matrix(), (G * g[j].rotation).matrix()) < 1e-12);
    }
    // Determinism.
    const auto again = forward_kinematics(tree, pose, root, Vec3::Zero());
    for (int j = 0; j < tree.joint_count(); ++j) {
      CHECK(again[j].rotation == g[j].rotation);
      CHECK(again[j].position == g[j].position);
    }
  }
  CHECK_THROWS_AS(forward_kinematics(tree, Pose::identity(23), Rotation(), Vec3::Zero()), Error);
}

TEST_CASE("sensor offsets") {
  RigidTransform joint{Rotation::about_y(0.4), Vec3(1, 2, 3)};
  VirtualSensor plain{"s", 0, Rotation(), Vec3::Zero()};
  const auto a = sensor_world_transform(joint, plain);
  CHECK(a.rotation == joint.rotation);
  CHECK(a.position == joint.position);

  VirtualSensor shifted{"s", 0, Rotation(), Vec3(0, 0, 0.05)};
  const auto b = sensor_world_transform(RigidTransform{Rotation(), Vec3(1, 2, 3)}, shifted);
  CHECK((b.position - Vec3(1, 2, 3.05)).norm() < 1e-15);
}

TEST_CASE("skeleton and sensor files round trip") {
  std::stringstream sk;
  write_skeleton(sk, default_tree());
  const auto tree = read_skeleton(sk);
  CHECK(tree.parent == default_tree().parent);
  for (int j = 0; j < kJointCount; ++j) CHECK(tree.rest_offset[j] == default_tree().rest_offset[j]);

  std::stringstream ss;
  write_sensors(ss, default_sensors());
  const auto sensors = read_sensors(ss);
  REQUIRE(sensors.size() == default_sensors().size());
  for (size_t i = 0; i < sensors.size(); ++i) {
    CHECK(sensors[i].name == default_sensors()[i].name);
    CHECK(sensors[i].bone == default_sensors()[i].bone);
    CHECK(sensors[i].offset_translation == default_sensors()[i].offset_translation);
  }

  std::istringstream bad_skeleton("0 -1 0 0 0\n1 0 0.1 oops 0\n");
  try {
    read_skeleton(bad_skeleton);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kCorruptFile);
  }
  std::istringstream bad_sensor("root 0 2 0 0 0 1 0 0 0 1 0 0 0\n");
  CHECK_THROWS_AS(read_sensors(bad_sensor), Error);
}

TEST_CASE("shipped data files match the built-in defaults") {
  const auto tree = load_skeleton_file(IMUPOSE_DATA_DIR "/default_skeleton.txt");
  CHECK(tree.parent == default_tree().parent);
  const auto sensors = load_sensor_file(IMUPOSE_DATA_DIR "/default_sensors.txt");
  REQUIRE(sensors.size() == default_sensors().size());
  for (size_t i = 0; i < sensors.size(); ++i) CHECK(sensors[i].bone == default_sensors()[i].bone);
}
