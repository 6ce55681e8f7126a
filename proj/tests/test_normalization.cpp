#include <doctest.h>

#include <cmath>
#include <numbers>

#include "imupose/error.hpp"
#include "imupose/normalization.hpp"
#include "support.hpp"

using namespace imupose;
using test::random_rotation;
using test::random_vec;

namespace {

CalibratedFrame random_frame(std::mt19937_64& rng) {
  CalibratedFrame f;
  for (int s = 0; s < kSensorCount; ++s) {
    f.orientations.push_back(random_rotation(rng));
    f.accelerations.push_back(random_vec(rng, 10.0));
  }
  return f;
}

CalibratedFrame rotate(const CalibratedFrame& f, const Rotation& g) {
  CalibratedFrame out;
  for (size_t s = 0; s < f.orientations.size(); ++s) {
    out.orientations.push_back(g * f.orientations[s]);
    out.accelerations.push_back(g * f.accelerations[s]);
  }
  return out;
}

}  // namespace

TEST_CASE("per-frame root layout") {
  std::mt19937_64 rng(1);
  const auto f = random_frame(rng);
  const VectorXd x = normalize_frame(f, NormalizationScheme::kPerFrameRoot);
  REQUIRE(x.size() == 60);
  const Mat3 root_inv = f.orientations[0].matrix().transpose();
  for (int k = 0; k < 5; ++k) {
    const Mat3 expect = root_inv * f.orientations[k + 1].matrix();
    Mat3 got;
    for (int i = 0; i < 9; ++i) got(i / 3, i % 3) = x(9 * k + i);
    CHECK(test::max_abs_diff(got, expect) < 1e-15);
    CHECK(Rotation::is_rotation(got));
    const Vec3 acc = root_inv * (f.accelerations[k + 1] - f.accelerations[0]);
    CHECK((x.segment<3>(45 + 3 * k) - acc).norm() < 1e-15);
  }

  // The root normalized against itself is the identity with zero acceleration.
  CalibratedFrame self = f;
  for (int s = 1; s < kSensorCount; ++s) {
    self.orientations[s] = f.orientations[0];
    self.accelerations[s] = f.accelerations[0];
  }
  const VectorXd y = normalize_frame(self, NormalizationScheme::kPerFrameRoot);
  for (int k = 0; k < 5; ++k) {
    Mat3 got;
    for (int i = 0; i < 9; ++i) got(i / 3, i % 3) = y(9 * k + i);
    CHECK(test::max_abs_diff(got, Mat3::Identity()) < 1e-12);
    CHECK(y.segment<3>(45 + 3 * k).norm() == 0.0);
  }
}

TEST_CASE("heading invariance of the per-frame root scheme") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto f = random_frame(rng);
    const auto g = random_rotation(rng);
    const VectorXd a = normalize_frame(f, NormalizationScheme::kPerFrameRoot);
    const VectorXd b = normalize_frame(rotate(f, g), NormalizationScheme::kPerFrameRoot);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("heading-only scheme removes yaw only") {
  const double yaw = 30.0 * std::numbers::pi / 180.0;
  const double pitch = 10.0 * std::numbers::pi / 180.0;
  CHECK(extract_yaw(Rotation::about_y(yaw) * Rotation::about_x(pitch)) == doctest::Approx(yaw).epsilon(1e-12));

  std::mt19937_64 rng(3);
  auto f = random_frame(rng);
  f.orientations[0] = Rotation::about_y(yaw) * Rotation::about_x(pitch);
  const VectorXd x = normalize_frame(f, NormalizationScheme::kHeadingOnly);
  REQUIRE(x.size() == 72);
  Mat3 residual_root;
  for (int i = 0; i < 9; ++i) residual_root(i / 3, i % 3) = x(i);
  CHECK(std::abs(extract_yaw(Rotation::from_matrix(residual_root))) < 1e-12);
  CHECK(test::max_abs_diff(residual_root, Rotation::about_x(pitch).matrix()) < 1e-12);

  // Invariant to yaw, not to pitch.
  const VectorXd yawed = normalize_frame(rotate(f, Rotation::about_y(1.1)), NormalizationScheme::kHeadingOnly);
  CHECK((yawed - x).cwiseAbs().maxCoeff() < 1e-9);
  const VectorXd pitched = normalize_frame(rotate(f, Rotation::about_x(yaw)), NormalizationScheme::kHeadingOnly);
  CHECK((pitched - x).cwiseAbs().maxCoeff() > 1e-3);
}

TEST_CASE("per-sequence root scheme") {
  std::mt19937_64 rng(4);
  const auto f = random_frame(rng);
  CHECK_THROWS_AS(normalize_frame(f, NormalizationScheme::kPerSequenceRoot), Error);
  const auto initial = random_rotation(rng);
  const VectorXd x = normalize_frame(f, NormalizationScheme::kPerSequenceRoot, initial);
  REQUIRE(x.size() == 72);
  for (int s = 0; s < kSensorCount; ++s) {
    Mat3 got;
    for (int i = 0; i < 9; ++i) got(i / 3, i % 3) = x(9 * s + i);
    CHECK(test::max_abs_diff(got, initial.matrix().transpose() * f.orientations[s].matrix()) < 1e-15);
  }
}

TEST_CASE("missing root sensor") {
  CalibratedFrame empty;
  CHECK_THROWS_AS(normalize_frame(empty, NormalizationScheme::kPerFrameRoot), Error);
}

TEST_CASE("canonical reordering") {
  std::mt19937_64 rng(5);
  const auto f = random_frame(rng);
  const std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  CalibratedFrame shuffled;
  std::vector<std::string> names;
  for (int p : perm) {
    shuffled.orientations.push_back(f.orientations[p]);
    shuffled.accelerations.push_back(f.accelerations[p]);
    names.push_back(canonical_sensor_names()[p]);
  }
  const auto back = reorder_to_canonical(shuffled, names);
  CHECK(normalize_frame(back, NormalizationScheme::kPerFrameRoot) ==
        normalize_frame(f, NormalizationScheme::kPerFrameRoot));
  names[0] = "elbow";
  CHECK_THROWS_AS(reorder_to_canonical(shuffled, names), Error);
}

TEST_CASE("feature selection and acceleration targets") {
  std::mt19937_64 rng(6);
  const VectorXd x = normalize_frame(random_frame(rng), NormalizationScheme::kPerFrameRoot);
  const InputLayout with{NormalizationScheme::kPerFrameRoot, true};
  const InputLayout without{NormalizationScheme::kPerFrameRoot, false};
  CHECK(select_features(x, with) == x);
  CHECK(select_features(x, without) == x.head(45));
  CHECK(acceleration_target(x, with) == x.tail(15));
  CHECK(without.dim() == 45);
  CHECK(InputLayout{NormalizationScheme::kHeadingOnly, false}.dim() == 54);
}

TEST_CASE("standardizer statistics") {
  SUBCASE("constant and two-valued columns") {
    MatrixXd m(2, 2);
    m << 5, 5,
         0, 2;
    const auto s = fit_stats({m});
    CHECK(s.mean(0) == 5.0);
    CHECK(s.std(0) == kStdFloor);
    CHECK(s.mean(1) == 1.0);
    CHECK(s.std(1) == 1.0);
  }
  SUBCASE("standardized data has zero mean and unit deviation") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(3.0, 2.0);
    std::vector<MatrixXd> parts;
    for (int p = 0; p < 3; ++p) {
      MatrixXd m(4, 50 + 10 * p);
      for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = n(rng) * (1 + i % 4);
      parts.push_back(m);
    }
    const auto s = fit_stats(parts);
    // Two-pass oracle.
    MatrixXd all(4, 180);
    all << parts[0], parts[1], parts[2];
    const VectorXd mean = all.rowwise().mean();
    for (int r = 0; r < 4; ++r) {
      const double var = (all.row(r).array() - mean(r)).square().mean();
      CHECK(s.mean(r) == doctest::Approx(mean(r)).epsilon(1e-12));
      CHECK(s.std(r) == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
    }
    const MatrixXd z = standardize_columns(all, s);
    for (int r = 0; r < 4; ++r) {
      CHECK(std::abs(z.row(r).mean()) < 1e-9);
      CHECK(std::sqrt(z.row(r).array().square().mean()) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  SUBCASE("inverse pair and hand arithmetic") {
    AffineStats s;
    s.mean = VectorXd::LinSpaced(5, -1, 3);
    s.std = VectorXd::LinSpaced(5, 0.5, 2.5);
    const VectorXd x = VectorXd::Random(5) * 4;
    const VectorXd z = standardize(x, s);
    for (int i = 0; i < 5; ++i) CHECK(z(i) == (x(i) - s.mean(i)) / s.std(i));
    CHECK((destandardize(z, s) - x).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(standardize(s.mean, s).norm() == 0.0);
    CHECK_THROWS_AS(standardize(VectorXd::Zero(4), s), Error);
  }
  SUBCASE("too little data") {
    CHECK_THROWS_AS(fit_stats({}), Error);
    CHECK_THROWS_AS(fit_stats({MatrixXd::Zero(3, 1)}), Error);
  }
}

TEST_CASE("features for a synthesized sequence") {
  const auto ds = test::small_dataset({"walk"}, 1, 300, 0);
  const auto& rec = ds.sequences[0];
  const InputLayout layout;
  const auto f = build_features(rec.imu, &rec.poses, layout);
  CHECK(f.inputs.rows() == 60);
  CHECK(f.inputs.cols() == static_cast<Eigen::Index>(rec.imu.frames.size()));
  CHECK(f.pose_targets.rows() == kPoseDim);
  CHECK(f.acc_targets.rows() == kAccDim);
  CHECK(f.pose_targets.col(7) == encode_pose(rec.poses.frames[7].pose));
  CHECK(f.acc_targets.col(7) == f.inputs.col(7).tail(15));
}
