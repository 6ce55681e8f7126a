#include <doctest.h>

#include <cmath>
#include <numbers>

#include "imupose/calibration.hpp"
#include "imupose/error.hpp"
#include "support.hpp"

using namespace imupose;
using test::random_rotation;
using test::random_vec;

namespace {

// Raw readings a device would produce for given body-frame truth under the
// corruption model: R_IS = R_TI^T * R_TB * R_BS, a_S = R_IS^T (R_TI^T a_T + g).
RawSensorFrame fabricate(const std::vector<Rotation>& bones, const std::vector<Vec3>& acc,
                         const Rotation& r_ti, const std::vector<Rotation>& offsets, const Vec3& g) {
  RawSensorFrame raw;
  for (size_t s = 0; s < bones.size(); ++s) {
    const Mat3 r_is = r_ti.matrix().transpose() * bones[s].matrix() * offsets[s].matrix();
    raw.orientations.push_back(Rotation::trusted(r_is));
    raw.accelerations.push_back(r_is.transpose() * (r_ti.matrix().transpose() * acc[s] + g));
  }
  return raw;
}

}  // namespace

TEST_CASE("inertial to body") {
  CHECK(compute_inertial_to_body(Rotation()).matrix() == Mat3::Identity());
  const double deg40 = 40.0 * std::numbers::pi / 180.0;
  CHECK(test::max_abs_diff(compute_inertial_to_body(Rotation::about_y(deg40)).matrix(),
                           Rotation::about_y(-deg40).matrix()) < 1e-15);
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto r = random_rotation(rng);
    CHECK(test::max_abs_diff((compute_inertial_to_body(r) * r).matrix(), Mat3::Identity()) < 1e-12);
  }
}

TEST_CASE("bone offsets") {
  std::mt19937_64 rng(2);
  std::vector<Rotation> bones, sensors, truth;
  for (int s = 0; s < 6; ++s) {
    bones.push_back(random_rotation(rng));
    truth.push_back(random_rotation(rng));
    sensors.push_back(bones.back() * truth.back());
  }
  const auto offsets = compute_bone_offsets(bones, sensors);
  for (int s = 0; s < 6; ++s) CHECK(test::max_abs_diff(offsets[s].matrix(), truth[s].matrix()) < 1e-12);

  const auto same = compute_bone_offsets(bones, bones);
  for (const auto& o : same) CHECK(test::max_abs_diff(o.matrix(), Mat3::Identity()) < 1e-12);

  const auto roll = Rotation::about_z(15.0 * std::numbers::pi / 180.0);
  CHECK(test::max_abs_diff(compute_bone_offsets({Rotation()}, {roll})[0].matrix(), roll.matrix()) < 1e-15);

  CHECK_THROWS_AS(compute_bone_offsets({Rotation()}, {Rotation(), Rotation()}), Error);
}

TEST_CASE("full synthetic session round trip") {
  std::mt19937_64 rng(3);
  const int n = 6;
  const Rotation r_ti = random_rotation(rng);
  const Vec3 g = 9.81 * random_vec(rng).normalized();
  std::vector<Rotation> offsets, straight;
  for (int s = 0; s < n; ++s) {
    offsets.push_back(random_rotation(rng));
    straight.push_back(random_rotation(rng));
  }
  // The head sensor is held aligned with the body frame during alignment.
  const Rotation head_alignment = r_ti.inverse();
  std::vector<RawSensorFrame> still(60, fabricate(straight, std::vector<Vec3>(n, Vec3::Zero()), r_ti, offsets, g));

  const auto cal = calibrate_session(head_alignment, still, straight);
  CHECK(test::max_abs_diff(cal.inertial_to_body.matrix(), r_ti.matrix()) < 1e-12);
  CHECK((cal.gravity - g).cwiseAbs().maxCoeff() < 1e-9);

  // The straight pose maps back onto itself.
  const auto fixed = calibrate_frame(still.front(), cal);
  for (int s = 0; s < n; ++s) {
    CHECK(test::max_abs_diff(fixed.orientations[s].matrix(), straight[s].matrix()) < 1e-12);
    CHECK(fixed.accelerations[s].cwiseAbs().maxCoeff() < 1e-9);
  }

  for (int t = 0; t < 50; ++t) {
    std::vector<Rotation> bones;
    std::vector<Vec3> acc;
    for (int s = 0; s < n; ++s) {
      bones.push_back(random_rotation(rng));
      acc.push_back(random_vec(rng, 20.0));
    }
    const auto out = calibrate_frame(fabricate(bones, acc, r_ti, offsets, g), cal);
    for (int s = 0; s < n; ++s) {
      CHECK(test::max_abs_diff(out.orientations[s].matrix(), bones[s].matrix()) < 1e-9);
      CHECK((out.accelerations[s] - acc[s]).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("left-literal composition is available but not a fixed point") {
  std::mt19937_64 rng(4);
  std::vector<Rotation> offsets{random_rotation(rng)}, straight{random_rotation(rng)};
  const Rotation r_ti = random_rotation(rng);
  const Vec3 g(0, 9.81, 0);
  std::vector<RawSensorFrame> still(40, fabricate(straight, {Vec3::Zero()}, r_ti, offsets, g));
  CalibrationState cal;
  cal.inertial_to_body = r_ti;
  cal.bone_offsets = compute_bone_offsets(straight, {Rotation::trusted(r_ti.matrix() * still[0].orientations[0].matrix())});
  cal.gravity = g;
  cal.composition = OffsetComposition::kLeftLiteral;
  const auto out = calibrate_frame(still.front(), cal);
  const Mat3 expect = cal.bone_offsets[0].matrix() * r_ti.matrix() * still[0].orientations[0].matrix();
  CHECK(test::max_abs_diff(out.orientations[0].matrix(), expect) < 1e-12);
  CHECK(test::max_abs_diff(out.orientations[0].matrix(), straight[0].matrix()) > 1e-3);
}

TEST_CASE("calibrate_frame rejects a missing sensor") {
  CalibrationState cal;
  cal.bone_offsets.assign(6, Rotation());
  RawSensorFrame raw;
  raw.orientations.assign(5, Rotation());
  raw.accelerations.assign(5, Vec3::Zero());
  try {
    calibrate_frame(raw, cal);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kIncompleteFrame);
  }
}

TEST_CASE("gravity estimation") {
  std::mt19937_64 rng(5);
  auto still_frame = [&](const Vec3& g, double noise, double extra) {
    std::normal_distribution<double> n(0.0, noise);
    RawSensorFrame f;
    for (int s = 0; s < 6; ++s) {
      const auto r = random_rotation(rng);
      const Vec3 a = g + Vec3(noise > 0 ? n(rng) : 0, noise > 0 ? n(rng) : 0, noise > 0 ? n(rng) : 0) +
                     Vec3(extra, 0, 0);
      f.orientations.push_back(r);
      f.accelerations.push_back(r.inverse() * a);
    }
    return f;
  };
  const Vec3 g(0, 9.81, 0);

  std::vector<RawSensorFrame> exact;
  for (int t = 0; t < 30; ++t) exact.push_back(still_frame(g, 0.0, 0.0));
  CHECK((estimate_gravity(exact) - g).cwiseAbs().maxCoeff() < 1e-12);

  std::vector<RawSensorFrame> noisy;
  for (int t = 0; t < 300; ++t) noisy.push_back(still_frame(g, 0.05, 0.0));
  CHECK((estimate_gravity(noisy) - g).norm() < 0.02);

  std::vector<RawSensorFrame> moving;
  for (int t = 0; t < 300; ++t) moving.push_back(still_frame(g, 0.0, 3.0 * std::sin(2 * std::numbers::pi * t / 60.0)));
  try {
    estimate_gravity(moving);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kCalibrationFailed);
  }

  std::vector<RawSensorFrame> weak;
  for (int t = 0; t < 30; ++t) weak.push_back(still_frame(Vec3(0, 5.0, 0), 0.0, 0.0));
  CHECK_THROWS_AS(estimate_gravity(weak), Error);

  std::vector<RawSensorFrame> short_stand(exact.begin(), exact.begin() + 10);
  CHECK_THROWS_AS(estimate_gravity(short_stand), Error);
}
