#pragma once

#include <Eigen/Core>

namespace imupose {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// An element of SO(3). Construction through from_matrix() validates
// orthonormality and a positive determinant to 1e-6 per entry.
class Rotation {
 public:
  static constexpr double kTolerance = 1e-6;

  Rotation() : m_(Mat3::Identity()) {}

  static Rotation identity() { return Rotation(); }

  // Throws kInvalidArgument if m is not a rotation within kTolerance.
  static Rotation from_matrix(const Mat3& m);

  // No validation. For results of compositions of valid rotations.
  static Rotation trusted(const Mat3& m) { return Rotation(m); }

  static Rotation about_axis(const Vec3& axis, double radians);
  static Rotation about_x(double radians) { return about_axis(Vec3::UnitX(), radians); }
  static Rotation about_y(double radians) { return about_axis(Vec3::UnitY(), radians); }
  static Rotation about_z(double radians) { return about_axis(Vec3::UnitZ(), radians); }

  const Mat3& matrix() const noexcept { return m_; }
  double operator()(int r, int c) const { return m_(r, c); }

  Rotation inverse() const { return Rotation(m_.transpose()); }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  Rotation operator*(const Rotation& other) const { return Rotation(m_ * other.m_); }

  bool operator==(const Rotation& other) const { return m_ == other.m_; }

  static bool is_rotation(const Mat3& m, double tolerance = kTolerance);

 private:
  explicit Rotation(const Mat3& m) : m_(m) {}

  Mat3 m_;
};

// Nearest rotation in Frobenius norm (polar factor with reflection fix).
// Throws kDegenerateInput when the smallest singular value is <= 1e-9 or any
// entry is non-finite.
Rotation project_to_rotation(const Mat3& m);

// Geodesic angle of a.inverse() * b, radians in [0, pi].
double geodesic_angle(const Rotation& a, const Rotation& b);

}  // namespace imupose
