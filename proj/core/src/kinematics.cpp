#include "imupose/kinematics.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "imupose/error.hpp"

namespace imupose {

namespace {

// Shortest text that reads back to the same double.
std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

KinematicTree make_default_tree() {
  KinematicTree tree;
  tree.parent = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
  tree.rest_offset = {
      {0.0, 0.0, 0.0},       // pelvis
      {0.06, -0.09, 0.0},    // left hip
      {-0.06, -0.09, 0.0},   // right hip
      {0.0, 0.11, -0.02},    // spine1
      {0.04, -0.38, 0.0},    // left knee
      {-0.04, -0.38, 0.0},   // right knee
      {0.0, 0.135, 0.0},     // spine2
      {0.0, -0.40, -0.04},   // left ankle
      {0.0, -0.40, -0.04},   // right ankle
      {0.0, 0.055, 0.02},    // spine3
      {0.0, -0.06, 0.12},    // left foot
      {0.0, -0.06, 0.12},    // right foot
      {0.0, 0.21, -0.03},    // neck
      {0.07, 0.11, -0.03},   // left collar
      {-0.07, 0.11, -0.03},  // right collar
      {0.0, 0.09, 0.05},     // head
      {0.12, 0.045, -0.01},  // left shoulder
      {-0.12, 0.045, -0.01}, // right shoulder
      {0.26, 0.0, 0.0},      // left elbow
      {-0.26, 0.0, 0.0},     // right elbow
      {0.25, 0.0, 0.0},      // left wrist
      {-0.25, 0.0, 0.0},     // right wrist
      {0.085, 0.0, 0.0},     // left hand
      {-0.085, 0.0, 0.0},    // right hand
  };
  return tree;
}

std::vector<VirtualSensor> make_default_sensors() {
  // Wrist sensors ride on the forearm (elbow joint frame) just short of the
  // wrist; lower-leg sensors ride on the shin (knee joint frame).
  return {
      {"root", 0, Rotation(), Vec3(0.0, 0.05, -0.10)},
      {"left_wrist", 18, Rotation(), Vec3(0.22, 0.0, 0.03)},
      {"right_wrist", 19, Rotation(), Vec3(-0.22, 0.0, 0.03)},
      {"left_lower_leg", 4, Rotation(), Vec3(0.0, -0.20, 0.05)},
      {"right_lower_leg", 5, Rotation(), Vec3(0.0, -0.20, 0.05)},
      {"head", 15, Rotation(), Vec3(0.0, 0.10, 0.0)},
  };
}

// Strips comments and returns false for blank lines.
bool next_record(std::istream& in, std::istringstream& record, int& line_no) {
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    record.clear();
    record.str(line);
    return true;
  }
  return false;
}

[[noreturn]] void malformed(const char* what, int line_no) {
  fail(ErrorKind::kCorruptFile, std::string("malformed ") + what + " line " + std::to_string(line_no));
}

}  // namespace

void KinematicTree::validate() const {
  if (parent.empty() || parent.size() != rest_offset.size()) {
    fail(ErrorKind::kInvalidArgument, "tree parent/offset arrays are empty or differ in length");
  }
  if (parent[0] != -1) fail(ErrorKind::kInvalidArgument, "joint 0 must be the root");
  for (size_t j = 1; j < parent.size(); ++j) {
    if (parent[j] < 0 || parent[j] >= static_cast<int>(j)) {
      fail(ErrorKind::kInvalidArgument,
           "joint " + std::to_string(j) + " is not topologically ordered");
    }
  }
}

const KinematicTree& default_tree() {
  static const KinematicTree tree = make_default_tree();
  return tree;
}

const std::array<const char*, kJointCount>& joint_names() {
  static const std::array<const char*, kJointCount> names = {
      "pelvis",         "left_hip",       "right_hip",   "spine1",      "left_knee",
      "right_knee",     "spine2",         "left_ankle",  "right_ankle", "spine3",
      "left_foot",      "right_foot",     "neck",        "left_collar", "right_collar",
      "head",           "left_shoulder",  "right_shoulder", "left_elbow", "right_elbow",
      "left_wrist",     "right_wrist",    "left_hand",   "right_hand"};
  return names;
}

const std::vector<VirtualSensor>& default_sensors() {
  static const std::vector<VirtualSensor> sensors = make_default_sensors();
  return sensors;
}

const std::array<const char*, kSensorCount>& canonical_sensor_names() {
  static const std::array<const char*, kSensorCount> names = {
      "root", "left_wrist", "right_wrist", "left_lower_leg", "right_lower_leg", "head"};
  return names;
}

std::vector<RigidTransform> forward_kinematics(const KinematicTree& tree, const Pose& pose,
                                               const Rotation& root_rotation,
                                               const Vec3& root_position) {
  const int n = tree.joint_count();
  if (static_cast<int>(pose.joint_rotations.size()) != n) {
    fail(ErrorKind::kInvalidArgument, "pose has " + std::to_string(pose.joint_rotations.size()) +
                                          " joints, tree has " + std::to_string(n));
  }
  std::vector<RigidTransform> global(static_cast<size_t>(n));
  global[0].rotation = root_rotation * pose.joint_rotations[0];
  global[0].position = root_position;
  for (int j = 1; j < n; ++j) {
    const RigidTransform& p = global[static_cast<size_t>(tree.parent[j])];
    global[j].rotation = p.rotation * pose.joint_rotations[j];
    global[j].position = p.position + p.rotation * tree.rest_offset[j];
  }
  return global;
}

RigidTransform sensor_world_transform(const RigidTransform& joint_global,
                                      const VirtualSensor& sensor) {
  return {joint_global.rotation * sensor.offset_rotation,
          joint_global.position + joint_global.rotation * sensor.offset_translation};
}

KinematicTree read_skeleton(std::istream& in) {
  KinematicTree tree;
  std::istringstream record;
  int line_no = 0;
  while (next_record(in, record, line_no)) {
    int index = 0;
    int parent = 0;
    Vec3 offset;
    if (!(record >> index >> parent >> offset.x() >> offset.y() >> offset.z())) {
      malformed("skeleton", line_no);
    }
    if (index != tree.joint_count()) malformed("skeleton (joint indices must be 0..n-1)", line_no);
    tree.parent.push_back(parent);
    tree.rest_offset.push_back(offset);
  }
  try {
    tree.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kCorruptFile, e.what());
  }
  return tree;
}

void write_skeleton(std::ostream& out, const KinematicTree& tree) {
  out << "# index parent offset_x offset_y offset_z (meters)\n";
  for (int j = 0; j < tree.joint_count(); ++j) {
    const Vec3& o = tree.rest_offset[j];
    out << j << ' ' << tree.parent[j] << ' ' << fmt(o.x()) << ' ' << fmt(o.y()) << ' ' << fmt(o.z())
        << '\n';
  }
}

std::vector<VirtualSensor> read_sensors(std::istream& in) {
  std::vector<VirtualSensor> sensors;
  std::istringstream record;
  int line_no = 0;
  while (next_record(in, record, line_no)) {
    VirtualSensor s;
    Mat3 r;
    if (!(record >> s.name >> s.bone)) malformed("sensor", line_no);
    for (int i = 0; i < 9; ++i) {
      if (!(record >> r(i / 3, i % 3))) malformed("sensor", line_no);
    }
    if (!(record >> s.offset_translation.x() >> s.offset_translation.y() >>
          s.offset_translation.z())) {
      malformed("sensor", line_no);
    }
    if (!Rotation::is_rotation(r)) malformed("sensor (offset is not a rotation)", line_no);
    if (s.bone < 0) malformed("sensor (negative bone index)", line_no);
    s.offset_rotation = Rotation::trusted(r);
    sensors.push_back(std::move(s));
  }
  return sensors;
}

void write_sensors(std::ostream& out, const std::vector<VirtualSensor>& sensors) {
  out << "# name bone offset_rotation(9, row-major) offset_translation(3, meters)\n";
  for (const auto& s : sensors) {
    out << s.name << ' ' << s.bone;
    for (int i = 0; i < 9; ++i) out << ' ' << fmt(s.offset_rotation(i / 3, i % 3));
    for (int i = 0; i < 3; ++i) out << ' ' << fmt(s.offset_translation(i));
    out << '\n';
  }
}

KinematicTree load_skeleton_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open skeleton file " + path);
  return read_skeleton(in);
}

std::vector<VirtualSensor> load_sensor_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open sensor file " + path);
  return read_sensors(in);
}

}  // namespace imupose
