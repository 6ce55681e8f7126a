#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "imupose/calibration.hpp"
#include "imupose/kinematics.hpp"

namespace imupose {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class NormalizationScheme : std::uint8_t {
  kPerFrameRoot = 0,     // five non-root sensors relative to the current root
  kPerSequenceRoot = 1,  // all six sensors relative to the first-frame root
  kHeadingOnly = 2,      // all six sensors relative to the root's yaw
};

std::string_view to_string(NormalizationScheme scheme);
NormalizationScheme parse_scheme(std::string_view name);

inline constexpr int kPoseDim = kJointCount * 9;
inline constexpr int kAccDim = 3 * (kSensorCount - 1);

// Network input layout: which normalization and whether accelerations are fed.
struct InputLayout {
  NormalizationScheme scheme = NormalizationScheme::kPerFrameRoot;
  bool use_accelerations = true;

  int sensor_count() const { return scheme == NormalizationScheme::kPerFrameRoot ? 5 : 6; }
  int normalized_dim() const { return 12 * sensor_count(); }
  int dim() const { return (use_accelerations ? 12 : 9) * sensor_count(); }
};

// Yaw about +y of the root's forward (+z) axis.
double extract_yaw(const Rotation& r);

// Orientation blocks (9 values each, row-major) followed by acceleration
// blocks (3 each). Frames are in canonical sensor order with the root first.
// per_sequence_root requires initial_root.
VectorXd normalize_frame(const CalibratedFrame& frame, NormalizationScheme scheme,
                         const std::optional<Rotation>& initial_root = std::nullopt);

// Reorders a frame whose sensors are labeled by name into canonical order.
CalibratedFrame reorder_to_canonical(const CalibratedFrame& frame,
                                     const std::vector<std::string>& names);

// The feature vector fed to the network (drops accelerations when disabled).
VectorXd select_features(const VectorXd& normalized, const InputLayout& layout);

// Root-relative accelerations of the five non-root sensors.
VectorXd acceleration_target(const VectorXd& normalized, const InputLayout& layout);

// 24 row-major 3x3 blocks.
VectorXd encode_pose(const Pose& pose);

// Per-sequence matrices, one column per timestep, not yet standardized.
struct SequenceFeatures {
  MatrixXd inputs;        // layout.dim() x T
  MatrixXd pose_targets;  // 216 x T
  MatrixXd acc_targets;   // 15 x T
};

SequenceFeatures build_features(const ImuSequence& imu, const PoseSequence* poses,
                                const InputLayout& layout);

struct AffineStats {
  VectorXd mean;
  VectorXd std;

  int dim() const { return static_cast<int>(mean.size()); }
};

inline constexpr double kStdFloor = 1e-8;

struct Standardizer {
  AffineStats input;
  AffineStats target;
  AffineStats acc;
};

// Per-row mean and population standard deviation over all columns of all
// matrices, std floored at kStdFloor. Needs at least two columns in total.
AffineStats fit_stats(const std::vector<MatrixXd>& samples);

Standardizer fit_standardizer(const std::vector<SequenceFeatures>& training);

VectorXd standardize(const VectorXd& x, const AffineStats& stats);
VectorXd destandardize(const VectorXd& y, const AffineStats& stats);
MatrixXd standardize_columns(const MatrixXd& x, const AffineStats& stats);

}  // namespace imupose
