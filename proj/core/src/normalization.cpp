#include "imupose/normalization.hpp"

#include <algorithm>
#include <cmath>

#include "imupose/error.hpp"

namespace imupose {

std::string_view to_string(NormalizationScheme scheme) {
  switch (scheme) {
    case NormalizationScheme::kPerFrameRoot: return "per_frame_root";
    case NormalizationScheme::kPerSequenceRoot: return "per_sequence_root";
    case NormalizationScheme::kHeadingOnly: return "heading_only";
  }
  return "unknown";
}

NormalizationScheme parse_scheme(std::string_view name) {
  if (name == "per_frame_root") return NormalizationScheme::kPerFrameRoot;
  if (name == "per_sequence_root") return NormalizationScheme::kPerSequenceRoot;
  if (name == "heading_only") return NormalizationScheme::kHeadingOnly;
  fail(ErrorKind::kInvalidArgument, "unknown normalization scheme '" + std::string(name) + "'");
}

double extract_yaw(const Rotation& r) {
  const Vec3 forward = r * Vec3::UnitZ();
  return std::atan2(forward.x(), forward.z());
}

VectorXd normalize_frame(const CalibratedFrame& frame, NormalizationScheme scheme,
                         const std::optional<Rotation>& initial_root) {
  if (frame.orientations.empty() || frame.accelerations.empty()) {
    fail(ErrorKind::kInvalidArgument, "frame is missing the root sensor");
  }
  if (frame.orientations.size() != kSensorCount || frame.accelerations.size() != kSensorCount) {
    fail(ErrorKind::kInvalidArgument, "normalization expects " + std::to_string(kSensorCount) +
                                          " sensors, got " +
                                          std::to_string(frame.orientations.size()));
  }
  const Rotation& root = frame.orientations[kRootSensor];
  const Vec3& root_acc = frame.accelerations[kRootSensor];

  Rotation reference;
  int first = 0;
  switch (scheme) {
    case NormalizationScheme::kPerFrameRoot:
      reference = root;
      first = 1;
      break;
    case NormalizationScheme::kPerSequenceRoot:
      if (!initial_root) {
        fail(ErrorKind::kInvalidArgument, "per_sequence_root needs the initial root orientation");
      }
      reference = *initial_root;
      break;
    case NormalizationScheme::kHeadingOnly:
      reference = Rotation::about_y(extract_yaw(root));
      break;
  }

  const Mat3 inv = reference.matrix().transpose();
  const int count = kSensorCount - first;
  VectorXd x(12 * count);
  for (int k = 0; k < count; ++k) {
    const int s = first + k;
    const Mat3 o = inv * frame.orientations[s].matrix();
    for (int i = 0; i < 9; ++i) x(9 * k + i) = o(i / 3, i % 3);
    x.segment<3>(9 * count + 3 * k) = inv * (frame.accelerations[s] - root_acc);
  }
  return x;
}

CalibratedFrame reorder_to_canonical(const CalibratedFrame& frame,
                                     const std::vector<std::string>& names) {
  if (names.size() != frame.orientations.size() || names.size() != frame.accelerations.size()) {
    fail(ErrorKind::kInvalidArgument, "sensor names do not match the frame");
  }
  CalibratedFrame out;
  for (const char* wanted : canonical_sensor_names()) {
    const auto it = std::find(names.begin(), names.end(), wanted);
    if (it == names.end()) {
      fail(ErrorKind::kInvalidArgument, std::string("frame is missing sensor '") + wanted + "'");
    }
    const auto idx = static_cast<size_t>(it - names.begin());
    out.orientations.push_back(frame.orientations[idx]);
    out.accelerations.push_back(frame.accelerations[idx]);
  }
  return out;
}

VectorXd select_features(const VectorXd& normalized, const InputLayout& layout) {
  if (normalized.size() != layout.normalized_dim()) {
    fail(ErrorKind::kInvalidArgument, "normalized frame has dimension " +
                                          std::to_string(normalized.size()) + ", layout expects " +
                                          std::to_string(layout.normalized_dim()));
  }
  if (layout.use_accelerations) return normalized;
  return normalized.head(9 * layout.sensor_count());
}

VectorXd acceleration_target(const VectorXd& normalized, const InputLayout& layout) {
  if (normalized.size() != layout.normalized_dim()) {
    fail(ErrorKind::kInvalidArgument, "normalized frame does not match the input layout");
  }
  // The last five acceleration blocks are the non-root sensors in every scheme.
  return normalized.tail(kAccDim);
}

VectorXd encode_pose(const Pose& pose) {
  if (pose.joint_rotations.size() != kJointCount) {
    fail(ErrorKind::kInvalidArgument, "pose must have 24 joints");
  }
  VectorXd y(kPoseDim);
  for (int j = 0; j < kJointCount; ++j) {
    const Mat3& m = pose.joint_rotations[j].matrix();
    for (int i = 0; i < 9; ++i) y(9 * j + i) = m(i / 3, i % 3);
  }
  return y;
}

SequenceFeatures build_features(const ImuSequence& imu, const PoseSequence* poses,
                                const InputLayout& layout) {
  const auto t_count = static_cast<Eigen::Index>(imu.frames.size());
  if (t_count == 0) fail(ErrorKind::kInvalidArgument, "empty IMU sequence");
  if (poses && static_cast<Eigen::Index>(poses->frames.size()) != t_count) {
    fail(ErrorKind::kInvalidArgument, "pose and IMU sequences differ in length");
  }
  SequenceFeatures f;
  f.inputs.resize(layout.dim(), t_count);
  f.acc_targets.resize(kAccDim, t_count);
  if (poses) f.pose_targets.resize(kPoseDim, t_count);

  const std::optional<Rotation> initial = imu.frames.front().orientations.empty()
                                              ? std::nullopt
                                              : std::optional(imu.frames.front().orientations[kRootSensor]);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    const VectorXd normalized = normalize_frame(imu.frames[t], layout.scheme, initial);
    f.inputs.col(t) = select_features(normalized, layout);
    f.acc_targets.col(t) = acceleration_target(normalized, layout);
    if (poses) f.pose_targets.col(t) = encode_pose(poses->frames[t].pose);
  }
  return f;
}

AffineStats fit_stats(const std::vector<MatrixXd>& samples) {
  Eigen::Index rows = -1;
  Eigen::Index cols = 0;
  for (const auto& m : samples) {
    if (m.cols() == 0) continue;
    if (rows >= 0 && m.rows() != rows) fail(ErrorKind::kInvalidArgument, "feature dimension varies");
    rows = m.rows();
    cols += m.cols();
  }
  if (rows <= 0 || cols == 0) fail(ErrorKind::kInvalidArgument, "no training frames to fit statistics");
  if (cols < 2) fail(ErrorKind::kInvalidArgument, "statistics need at least two frames");

  AffineStats stats;
  stats.mean = VectorXd::Zero(rows);
  for (const auto& m : samples) {
    if (m.cols() > 0) stats.mean += m.rowwise().sum();
  }
  stats.mean /= static_cast<double>(cols);
  VectorXd var = VectorXd::Zero(rows);
  for (const auto& m : samples) {
    if (m.cols() > 0) var += (m.colwise() - stats.mean).array().square().matrix().rowwise().sum();
  }
  stats.std = (var / static_cast<double>(cols)).array().sqrt().max(kStdFloor).matrix();
  return stats;
}

Standardizer fit_standardizer(const std::vector<SequenceFeatures>& training) {
  std::vector<MatrixXd> in, tgt, acc;
  for (const auto& f : training) {
    in.push_back(f.inputs);
    tgt.push_back(f.pose_targets);
    acc.push_back(f.acc_targets);
  }
  return {fit_stats(in), fit_stats(tgt), fit_stats(acc)};
}

namespace {
void check_dim(Eigen::Index n, const AffineStats& stats) {
  if (n != stats.dim()) {
    fail(ErrorKind::kInvalidArgument, "vector of dimension " + std::to_string(n) +
                                          " does not match statistics of dimension " +
                                          std::to_string(stats.dim()));
  }
}
}  // namespace

VectorXd standardize(const VectorXd& x, const AffineStats& stats) {
  check_dim(x.size(), stats);
  return ((x - stats.mean).array() / stats.std.array()).matrix();
}

VectorXd destandardize(const VectorXd& y, const AffineStats& stats) {
  check_dim(y.size(), stats);
  return (y.array() * stats.std.array()).matrix() + stats.mean;
}

MatrixXd standardize_columns(const MatrixXd& x, const AffineStats& stats) {
  check_dim(x.rows(), stats);
  return ((x.colwise() - stats.mean).array().colwise() / stats.std.array()).matrix();
}

}  // namespace imupose
