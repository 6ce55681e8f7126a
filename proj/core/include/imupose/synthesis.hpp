#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imupose/kinematics.hpp"

namespace imupose {

struct PoseFrame {
  Pose pose;
  Rotation root_rotation;
  Vec3 root_position = Vec3::Zero();
};

struct PoseSequence {
  std::uint32_t fps = 60;
  std::vector<PoseFrame> frames;

  // fps > 0 and at least three frames.
  void validate() const;
};

// Per-frame readings of every sensor: orientations and gravity-free
// accelerations, both in the body frame. Also the on-disk shape of
// calibrated recordings.
struct ImuFrame {
  std::vector<Rotation> orientations;
  std::vector<Vec3> accelerations;
};

struct ImuSequence {
  std::uint32_t fps = 60;
  std::vector<ImuFrame> frames;

  int sensor_count() const {
    return frames.empty() ? 0 : static_cast<int>(frames.front().orientations.size());
  }
};

// Sensor world transforms per frame, [frame][sensor].
std::vector<std::vector<RigidTransform>> sensor_trajectories(
    const PoseSequence& seq, const KinematicTree& tree, const std::vector<VirtualSensor>& sensors);

std::vector<std::vector<Rotation>> synthesize_orientations(
    const PoseSequence& seq, const KinematicTree& tree, const std::vector<VirtualSensor>& sensors);

// Central second difference; output frame k corresponds to input frame k + 1,
// so the result has two fewer frames than the input.
std::vector<std::vector<Vec3>> synthesize_accelerations(
    const std::vector<std::vector<Vec3>>& positions, double dt);

// Orientations and accelerations aligned to input frames 1 .. T-2.
ImuSequence synthesize_imu(const PoseSequence& seq, const KinematicTree& tree,
                           const std::vector<VirtualSensor>& sensors);

// Frames of seq that line up with synthesize_imu's output.
PoseSequence trim_to_imu_alignment(const PoseSequence& seq);

// Integer-stride decimation when target divides the source rate; otherwise
// nearest-frame selection at round(k * fps / target_fps).
PoseSequence resample(const PoseSequence& seq, std::uint32_t target_fps);

// One requested procedural motion.
struct MotionRequest {
  std::string family;
  int frames = 600;  // at least 300
  int variant = 0;
  std::uint32_t fps = 60;
};

// Families: static, arm_raise, leg_raise, squat, walk, root_turn.
const std::vector<std::string>& motion_families();

std::vector<PoseSequence> generate_procedural_motions(const std::vector<MotionRequest>& catalog,
                                                      std::uint64_t seed);

// A sequence with its synthesized readings and the aligned pose targets.
struct SequenceRecord {
  std::string name;
  PoseSequence poses;  // aligned: one pose per IMU frame
  ImuSequence imu;
};

struct DatasetSplit {
  std::vector<int> train;
  std::vector<int> validation;
  std::vector<int> test;
};

struct Dataset {
  std::vector<SequenceRecord> sequences;
  DatasetSplit split;
};

// Splits whole sequences by ratio after a seeded shuffle. Ratios must sum to
// one and every split must receive at least one sequence.
DatasetSplit split_sequences(int sequence_count, double train_ratio, double validation_ratio,
                             double test_ratio, std::uint64_t seed);

Dataset build_dataset(std::vector<SequenceRecord> sequences, double train_ratio,
                      double validation_ratio, double test_ratio, std::uint64_t seed);

SequenceRecord make_record(std::string name, const PoseSequence& source, const KinematicTree& tree,
                           const std::vector<VirtualSensor>& sensors);

}  // namespace imupose
