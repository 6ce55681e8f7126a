#pragma once

#include <vector>

#include "imupose/rotation.hpp"
#include "imupose/synthesis.hpp"

namespace imupose {

// Raw device readings for one timestep: orientation maps sensor frame to the
// inertial frame; acceleration is in the sensor frame and includes the
// gravity reaction.
struct RawSensorFrame {
  std::vector<Rotation> orientations;
  std::vector<Vec3> accelerations;
};

// Which side the sensor-to-bone offset is applied on when recovering bone
// orientations. kRightInverse reproduces the straight pose exactly at the
// calibration frame; kLeftLiteral is R_bs * R_ts, kept for comparison.
enum class OffsetComposition { kRightInverse, kLeftLiteral };

struct CalibrationState {
  Rotation inertial_to_body;              // R_TI
  std::vector<Rotation> bone_offsets;     // R_BS per sensor
  Vec3 gravity = Vec3(0.0, 9.81, 0.0);    // inertial frame, m/s^2
  OffsetComposition composition = OffsetComposition::kRightInverse;

  int sensor_count() const { return static_cast<int>(bone_offsets.size()); }
};

// Bone orientations and gravity-free accelerations in the body frame.
using CalibratedFrame = ImuFrame;

Rotation compute_inertial_to_body(const Rotation& head_reading);

// R_BS = R_TB0^T * R_TS0 per sensor, so that R_TB0 * R_BS = R_TS0.
std::vector<Rotation> compute_bone_offsets(const std::vector<Rotation>& straight_pose_bones,
                                           const std::vector<Rotation>& first_frame_body);

CalibratedFrame calibrate_frame(const RawSensorFrame& raw, const CalibrationState& cal);

inline constexpr double kGravityMin = 9.5;
inline constexpr double kGravityMax = 10.1;
inline constexpr int kMinGravityFrames = 30;
// RMS deviation of individual samples from the mean above which the subject
// is considered to have moved during the still-stand.
inline constexpr double kStillnessRms = 0.5;

Vec3 estimate_gravity(const std::vector<RawSensorFrame>& static_frames);

// Full calibration from an alignment reading of the head sensor and a
// still-stand in the known straight pose. straight_pose_bones holds the
// body-frame bone orientation under each sensor in that pose.
CalibrationState calibrate_session(const Rotation& head_alignment_reading,
                                   const std::vector<RawSensorFrame>& still_stand,
                                   const std::vector<Rotation>& straight_pose_bones,
                                   OffsetComposition composition = OffsetComposition::kRightInverse);

}  // namespace imupose
