#include "imupose/calibration.hpp"

#include <cmath>
#include <string>

#include "imupose/error.hpp"

namespace imupose {

Rotation compute_inertial_to_body(const Rotation& head_reading) {
  return head_reading.inverse();
}

std::vector<Rotation> compute_bone_offsets(const std::vector<Rotation>& straight_pose_bones,
                                           const std::vector<Rotation>& first_frame_body) {
  if (straight_pose_bones.size() != first_frame_body.size()) {
    fail(ErrorKind::kInvalidArgument, "bone/sensor count mismatch in offset computation");
  }
  std::vector<Rotation> offsets;
  offsets.reserve(first_frame_body.size());
  for (size_t s = 0; s < first_frame_body.size(); ++s) {
    offsets.push_back(straight_pose_bones[s].inverse() * first_frame_body[s]);
  }
  return offsets;
}

CalibratedFrame calibrate_frame(const RawSensorFrame& raw, const CalibrationState& cal) {
  const size_t n = cal.bone_offsets.size();
  if (raw.orientations.size() != n || raw.accelerations.size() != n) {
    fail(ErrorKind::kIncompleteFrame, "frame has " + std::to_string(raw.orientations.size()) +
                                          " orientations and " +
                                          std::to_string(raw.accelerations.size()) +
                                          " accelerations, calibration expects " +
                                          std::to_string(n));
  }
  CalibratedFrame out;
  out.orientations.reserve(n);
  out.accelerations.reserve(n);
  for (size_t s = 0; s < n; ++s) {
    const Rotation body_sensor = cal.inertial_to_body * raw.orientations[s];
    out.orientations.push_back(cal.composition == OffsetComposition::kRightInverse
                                   ? body_sensor * cal.bone_offsets[s].inverse()
                                   : cal.bone_offsets[s] * body_sensor);
    const Vec3 inertial = raw.orientations[s] * raw.accelerations[s] - cal.gravity;
    out.accelerations.push_back(cal.inertial_to_body * inertial);
  }
  return out;
}

Vec3 estimate_gravity(const std::vector<RawSensorFrame>& static_frames) {
  if (static_cast<int>(static_frames.size()) < kMinGravityFrames) {
    fail(ErrorKind::kInvalidArgument, "gravity estimation needs at least " +
                                          std::to_string(kMinGravityFrames) + " frames");
  }
  std::vector<Vec3> samples;
  for (const auto& f : static_frames) {
    if (f.orientations.size() != f.accelerations.size() || f.orientations.empty()) {
      fail(ErrorKind::kIncompleteFrame, "still-stand frame is missing readings");
    }
    for (size_t s = 0; s < f.orientations.size(); ++s) {
      samples.push_back(f.orientations[s] * f.accelerations[s]);
    }
  }
  Vec3 mean = Vec3::Zero();
  for (const auto& v : samples) mean += v;
  mean /= static_cast<double>(samples.size());

  double sq = 0.0;
  for (const auto& v : samples) sq += (v - mean).squaredNorm();
  const double rms = std::sqrt(sq / static_cast<double>(samples.size()));

  const double magnitude = mean.norm();
  if (magnitude < kGravityMin || magnitude > kGravityMax) {
    fail(ErrorKind::kCalibrationFailed,
         "estimated gravity magnitude " + std::to_string(magnitude) +
             " m/s^2 outside [9.5, 10.1]; subject moved during the still-stand?");
  }
  if (rms > kStillnessRms) {
    fail(ErrorKind::kCalibrationFailed, "acceleration spread " + std::to_string(rms) +
                                            " m/s^2 during the still-stand; subject moved");
  }
  return mean;
}

CalibrationState calibrate_session(const Rotation& head_alignment_reading,
                                   const std::vector<RawSensorFrame>& still_stand,
                                   const std::vector<Rotation>& straight_pose_bones,
                                   OffsetComposition composition) {
  if (still_stand.empty()) fail(ErrorKind::kInvalidArgument, "still-stand recording is empty");
  CalibrationState cal;
  cal.composition = composition;
  cal.inertial_to_body = compute_inertial_to_body(head_alignment_reading);
  cal.gravity = estimate_gravity(still_stand);

  const auto& first = still_stand.front();
  std::vector<Rotation> body;
  body.reserve(first.orientations.size());
  for (const auto& r : first.orientations) body.push_back(cal.inertial_to_body * r);
  cal.bone_offsets = compute_bone_offsets(straight_pose_bones, body);
  return cal;
}

}  // namespace imupose
