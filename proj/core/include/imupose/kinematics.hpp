#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "imupose/rotation.hpp"

namespace imupose {

inline constexpr int kJointCount = 24;

// Articulated skeleton at a fixed mean shape. Joints are topologically
// ordered: parent[j] < j for j > 0 and joint 0 is the only root.
struct KinematicTree {
  std::vector<int> parent;       // parent[0] == -1
  std::vector<Vec3> rest_offset; // bone vector from parent joint, meters

  int joint_count() const { return static_cast<int>(parent.size()); }

  // Throws kInvalidArgument when the topology invariants do not hold.
  void validate() const;
};

// 24-joint tree with the SMPL parent topology; y is up, +x is the subject's
// left, +z faces forward.
const KinematicTree& default_tree();
const std::array<const char*, kJointCount>& joint_names();

// Per-joint rotation relative to the parent joint frame.
struct Pose {
  std::vector<Rotation> joint_rotations;

  static Pose identity(int joint_count = kJointCount) {
    return Pose{std::vector<Rotation>(static_cast<size_t>(joint_count))};
  }
};

struct RigidTransform {
  Rotation rotation;
  Vec3 position = Vec3::Zero();
};

struct VirtualSensor {
  std::string name;
  int bone = 0;
  Rotation offset_rotation;             // sensor frame relative to bone frame
  Vec3 offset_translation = Vec3::Zero(); // meters, in the bone frame
};

// Six sensors in canonical order: root (pelvis), left wrist, right wrist,
// left lower leg, right lower leg, head.
const std::vector<VirtualSensor>& default_sensors();
inline constexpr int kSensorCount = 6;
inline constexpr int kRootSensor = 0;
inline constexpr int kHeadSensor = 5;
const std::array<const char*, kSensorCount>& canonical_sensor_names();

// Global joint transforms. The root joint composes root_rotation with
// pose.joint_rotations[0] and sits at root_position; every other joint
// composes its parent's global rotation with its local rotation.
std::vector<RigidTransform> forward_kinematics(const KinematicTree& tree, const Pose& pose,
                                               const Rotation& root_rotation,
                                               const Vec3& root_position);

RigidTransform sensor_world_transform(const RigidTransform& joint_global,
                                      const VirtualSensor& sensor);

// Text formats. Skeleton: "index parent ox oy oz" per line. Sensors:
// "name bone r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz". '#' starts a
// comment. Both throw kCorruptFile on malformed content.
KinematicTree read_skeleton(std::istream& in);
void write_skeleton(std::ostream& out, const KinematicTree& tree);
std::vector<VirtualSensor> read_sensors(std::istream& in);
void write_sensors(std::ostream& out, const std::vector<VirtualSensor>& sensors);

KinematicTree load_skeleton_file(const std::string& path);
std::vector<VirtualSensor> load_sensor_file(const std::string& path);

}  // namespace imupose
