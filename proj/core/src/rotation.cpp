#include "imupose/rotation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "imupose/error.hpp"

namespace imupose {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kDegenerateInput: return "degenerate-input";
    case ErrorKind::kDegenerateOutput: return "degenerate-output";
    case ErrorKind::kUnsupportedUpsample: return "unsupported-upsample";
    case ErrorKind::kCalibrationFailed: return "calibration-failed";
    case ErrorKind::kIncompleteFrame: return "incomplete-frame";
    case ErrorKind::kInternalInvariant: return "internal-invariant";
    case ErrorKind::kInvalidState: return "invalid-state";
    case ErrorKind::kTrainingDiverged: return "training-diverged";
    case ErrorKind::kTruncatedFile: return "truncated-file";
    case ErrorKind::kBadMagic: return "bad-magic";
    case ErrorKind::kVersionMismatch: return "version-mismatch";
    case ErrorKind::kCorruptFile: return "corrupt-file";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kProtocol: return "protocol";
  }
  return "unknown";
}

bool Rotation::is_rotation(const Mat3& m, double tolerance) {
  if (!m.allFinite()) return false;
  const Mat3 gram = m.transpose() * m;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tolerance) return false;
  return std::abs(m.determinant() - 1.0) <= tolerance;
}

Rotation Rotation::from_matrix(const Mat3& m) {
  if (!is_rotation(m)) {
    fail(ErrorKind::kInvalidArgument, "matrix is not a rotation");
  }
  return Rotation(m);
}

Rotation Rotation::about_axis(const Vec3& axis, double radians) {
  return Rotation(Eigen::AngleAxisd(radians, axis.normalized()).toRotationMatrix());
}

Rotation project_to_rotation(const Mat3& m) {
  if (!m.allFinite()) {
    fail(ErrorKind::kDegenerateInput, "non-finite matrix cannot be projected");
  }
  // m = U S V^T; the nearest rotation is U diag(1, 1, det(U V^T)) V^T, which
  // equals the polar factor m (m^T m)^{-1/2} whenever det(m) > 0.
  const Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 singular = svd.singularValues();
  if (singular(2) <= 1e-9) {
    fail(ErrorKind::kDegenerateInput,
         "rank-deficient matrix (smallest singular value " + std::to_string(singular(2)) + ")");
  }
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  Vec3 d(1.0, 1.0, (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
  return Rotation::trusted(u * d.asDiagonal() * v.transpose());
}

double geodesic_angle(const Rotation& a, const Rotation& b) {
  const double trace = (a.matrix().transpose() * b.matrix()).trace();
  return std::acos(std::clamp((trace - 1.0) / 2.0, -1.0, 1.0));
}

}  // namespace imupose
